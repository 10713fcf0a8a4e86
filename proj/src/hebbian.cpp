#include "hebbseed/hebbian.hpp"

#include <cmath>
#include <vector>

#include "hebbseed/error.hpp"

namespace hebbseed {

namespace {

double apply_f(double y, HebbActivation f) {
    return f == HebbActivation::ReLU ? (y > 0.0 ? y : 0.0) : y;
}

void check_input_dim(const HebbianLayerState& state, std::size_t got, const char* op) {
    if (got != state.input_dim()) {
        throw ShapeError(std::string(op) + ": input dim " + std::to_string(got) +
                         " does not match weights " + state.weights.shape_str());
    }
}

// Per-sample Sanger delta accumulated into out (n x d), given the already
// activated responses y. The reconstruction is built incrementally in
// ascending neuron order, matching the textbook double loop
// addition-for-addition.
void sanger_delta_from_y(const double* w, std::size_t n, std::size_t d, const double* x,
                         const double* y, double eta, double* out, double* recon) {
    for (std::size_t k = 0; k < d; ++k) recon[k] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* wi = w + i * d;
        double* oi = out + i * d;
        const double yi = y[i];
        for (std::size_t k = 0; k < d; ++k) {
            recon[k] += yi * wi[k];
            oi[k] = eta * (yi * (x[k] - recon[k]));
        }
    }
}

} // namespace

HebbianLayerState::HebbianLayerState(std::size_t num_neurons, std::size_t input_dim, Rng& rng,
                                     double eta, double momentum)
    : running_input_mean({input_dim}), mean_momentum(momentum), learning_rate(eta) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
    weights = uniform_tensor(rng, {num_neurons, input_dim}, -bound, bound);
}

Tensor plain_hebb_update(const HebbianLayerState& state, const Tensor& x) {
    check_input_dim(state, x.size(), "plain_hebb_update");
    const std::size_t n = state.num_neurons(), d = state.input_dim();
    Tensor delta({n, d});
    const double* w = state.weights.data();
    const double* px = x.data();
    double* out = delta.data();
    for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t k = 0; k < d; ++k) y += w[i * d + k] * px[k];
        const double c = state.learning_rate * y;
        for (std::size_t k = 0; k < d; ++k) out[i * d + k] = c * px[k];
    }
    return delta;
}

Tensor decay_hebb_update(const HebbianLayerState& state, const Tensor& x) {
    check_input_dim(state, x.size(), "decay_hebb_update");
    const std::size_t n = state.num_neurons(), d = state.input_dim();
    Tensor delta({n, d});
    const double* w = state.weights.data();
    const double* px = x.data();
    double* out = delta.data();
    for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t k = 0; k < d; ++k) y += w[i * d + k] * px[k];
        const double c = state.learning_rate * y;
        for (std::size_t k = 0; k < d; ++k) out[i * d + k] = c * (px[k] - w[i * d + k]);
    }
    return delta;
}

Tensor wta_update(const HebbianLayerState& state, const Tensor& x) {
    check_input_dim(state, x.size(), "wta_update");
    const std::size_t n = state.num_neurons(), d = state.input_dim();
    const double* w = state.weights.data();
    const double* px = x.data();

    std::size_t winner = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dist = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            double diff = px[k] - w[i * d + k];
            dist += diff * diff;
        }
        if (best < 0.0 || dist < best) {
            best = dist;
            winner = i;
        }
    }

    Tensor delta({n, d});
    double y = 0.0;
    for (std::size_t k = 0; k < d; ++k) y += w[winner * d + k] * px[k];
    const double c = state.learning_rate * y;
    double* out = delta.data() + winner * d;
    for (std::size_t k = 0; k < d; ++k) out[k] = c * (px[k] - w[winner * d + k]);
    return delta;
}

Tensor hpca_update(const HebbianLayerState& state, const Tensor& X, RuleKind rule,
                   HebbActivation activation) {
    if (rule != RuleKind::LinearHPCA && rule != RuleKind::NonlinearHPCA)
        throw ArgumentError("hpca_update: rule is not an HPCA kind");
    if (X.rank() != 2) throw ShapeError("hpca_update: expected batch x input_dim, got " + X.shape_str());
    check_input_dim(state, X.dim(1), "hpca_update");
    const HebbActivation f =
        rule == RuleKind::LinearHPCA ? HebbActivation::Identity : activation;
    const std::size_t batch = X.dim(0);
    const std::size_t n = state.num_neurons(), d = state.input_dim();
    const double* w = state.weights.data();

    if (batch == 1) {
        // textbook double-loop form, bitwise comparable to the reference
        Tensor delta({n, d});
        const double* x = X.data();
        std::vector<double> y(n, 0.0), recon(d);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += w[i * d + k] * x[k];
            y[i] = apply_f(s, f);
        }
        sanger_delta_from_y(w, n, d, x, y.data(), state.learning_rate, delta.data(),
                            recon.data());
        return delta;
    }

    // batched form of the same average: all per-sample deltas are taken
    // against the same pre-update weights, so
    //   sum_p dW_p = G^T X - tril(G^T G) W   with  G = f(X W^T),
    // three fixed-order products instead of materializing every delta
    Tensor g = matmul(X, transpose(state.weights)); // batch x n
    double* pg = g.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(g.size()); ++e)
        pg[e] = apply_f(pg[e], f);

    Tensor gx = matmul_at_b(g, X); // n x d, sums ascending over samples
    Tensor gg = matmul_at_b(g, g); // n x n
    double* pgg = gg.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pgg[i * n + j] = 0.0; // keep j <= i
    Tensor recon = matmul(gg, state.weights); // n x d

    Tensor acc({n, d});
    const double scale = state.learning_rate / static_cast<double>(batch);
    double* accp = acc.data();
    const double* pgx = gx.data();
    const double* pre = recon.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(n * d); ++e)
        accp[e] = scale * (pgx[e] - pre[e]);
    return acc;
}

double representation_error(const HebbianLayerState& state, const Tensor& X, RuleKind rule,
                            HebbActivation activation) {
    if (X.rank() != 2)
        throw ShapeError("representation_error: expected batch x input_dim, got " + X.shape_str());
    check_input_dim(state, X.dim(1), "representation_error");
    const HebbActivation f =
        rule == RuleKind::LinearHPCA ? HebbActivation::Identity : activation;
    const std::size_t batch = X.dim(0);
    const std::size_t n = state.num_neurons(), d = state.input_dim();
    const double* w = state.weights.data();

    std::vector<double> per_sample(batch, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
        const double* x = X.data() + b * d;
        std::vector<double> recon(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* wi = w + i * d;
            for (std::size_t k = 0; k < d; ++k) s += wi[k] * x[k];
            const double yi = apply_f(s, f);
            for (std::size_t k = 0; k < d; ++k) recon[k] += yi * wi[k];
        }
        double err = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            double diff = x[k] - recon[k];
            err += diff * diff;
        }
        per_sample[b] = err;
    }
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) total += per_sample[b];
    return total / static_cast<double>(batch);
}

Tensor center_inputs(HebbianLayerState& state, const Tensor& X, bool training) {
    if (X.rank() != 2)
        throw ShapeError("center_inputs: expected batch x input_dim, got " + X.shape_str());
    check_input_dim(state, X.dim(1), "center_inputs");
    const std::size_t batch = X.dim(0), d = state.input_dim();
    double* mean = state.running_input_mean.data();

    if (training) {
        const double m = state.mean_momentum;
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(d); ++k) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b) s += X[b * d + k];
            mean[k] = (1.0 - m) * mean[k] + m * (s / static_cast<double>(batch));
        }
    }

    Tensor out(X.shape());
    double* po = out.data();
    const double* px = X.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b)
        for (std::size_t k = 0; k < d; ++k) po[b * d + k] = px[b * d + k] - mean[k];
    return out;
}

void conv_hebbian_step(HebbianLayerState& state, const Tensor& patches, RuleKind rule,
                       HebbActivation activation) {
    if (patches.rank() != 3)
        throw ShapeError("conv_hebbian_step: expected B x P x D patches, got " +
                         patches.shape_str());
    check_input_dim(state, patches.dim(2), "conv_hebbian_step");
    const std::size_t total = patches.dim(0) * patches.dim(1);
    Tensor flat = patches.reshaped({total, patches.dim(2)});
    Tensor centered = center_inputs(state, flat, /*training=*/true);
    Tensor delta = hpca_update(state, centered, rule, activation);
    double* w = state.weights.data();
    const double* dp = delta.data();
    for (std::size_t e = 0; e < delta.size(); ++e) w[e] += dp[e];
}

} // namespace hebbseed
