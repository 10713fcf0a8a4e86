#include "hebbseed/sgd.hpp"

#include <cmath>

#include "hebbseed/error.hpp"

namespace hebbseed {

double SgdConfig::lr(int epoch) const {
    if (epoch < constant_epochs) return lr0;
    int halvings = (epoch - constant_epochs) / halve_every + 1;
    return std::ldexp(lr0, -halvings); // exact power-of-two scaling
}

CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("cross_entropy: expected B x K logits, got " + logits.shape_str());
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    if (labels.size() != B)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(B));
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= K)
            throw ArgumentError("cross_entropy: label " + std::to_string(l) + " out of range [0," +
                                std::to_string(K) + ")");

    CrossEntropyResult res{0.0, Tensor({B, K})};
    const double* pl = logits.data();
    double* pd = res.dlogits.data();
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = pl + b * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
        const double log_z = mx + std::log(sum);
        loss += log_z - row[labels[b]];
        for (std::size_t k = 0; k < K; ++k) {
            double p = std::exp(row[k] - log_z);
            pd[b * K + k] = (p - (static_cast<std::size_t>(labels[b]) == k ? 1.0 : 0.0)) /
                            static_cast<double>(B);
        }
    }
    res.loss = loss / static_cast<double>(B);
    return res;
}

void sgd_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, const SgdConfig& config, int epoch) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw ShapeError("sgd_step: params/grads/velocity counts differ");
    const double rate = config.lr(epoch);
    const double mu = config.momentum;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params[p];
        const Tensor& g = grads[p];
        Tensor& v = velocity[p];
        if (!w.same_shape(g) || !w.same_shape(v))
            throw ShapeError("sgd_step: shape mismatch at param " + std::to_string(p) + ": " +
                             w.shape_str() + " vs " + g.shape_str());
        double* pw = w.data();
        const double* pg = g.data();
        double* pv = v.data();
        const std::size_t n = w.size();
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            const double gi = pg[i] + config.l2 * pw[i];
            pv[i] = mu * pv[i] + gi;
            const double update = config.nesterov ? mu * pv[i] + gi : pv[i];
            pw[i] -= rate * update;
        }
    }
}

} // namespace hebbseed
