#include "hebbseed/selfcheck.hpp"

#include <cmath>
#include <sstream>

#include "hebbseed/data.hpp"
#include "hebbseed/hebbian.hpp"
#include "hebbseed/oracle.hpp"
#include "hebbseed/sgd.hpp"

namespace hebbseed::selfcheck {

namespace {

oracle::Mat tensor_to_mat(const Tensor& t) {
    oracle::Mat m(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < t.size(); ++i) m.v[i] = t[i];
    return m;
}

} // namespace

CheckResult hpca_pca_equivalence() {
    // 20k mini-batch steps at eta=5e-3; mini-batch updates are the rule's
    // operating mode and damp the steady-state jitter of the trailing rows
    const std::size_t d = 5, neurons = 3, steps = 20000, batch = 16;
    GaussianStream stream = synth_gaussian_stream(d, {9.0, 4.0, 1.0, 0.25, 0.04}, 123);

    Rng wrng(123007);
    HebbianLayerState state(neurons, d, wrng, /*eta=*/5e-3);
    oracle::Mat samples(steps * batch, d);
    for (std::size_t s = 0; s < steps; ++s) {
        Tensor x = stream.next_batch(batch);
        std::copy(x.data(), x.data() + x.size(), samples.v.begin() + s * batch * d);
        Tensor delta = hpca_update(state, x, RuleKind::LinearHPCA);
        for (std::size_t e = 0; e < delta.size(); ++e) state.weights[e] += delta[e];
    }

    oracle::PcaOracle pca = oracle::exact_pca(samples);
    oracle::Mat top(d, neurons);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < neurons; ++j) top(i, j) = pca.eigvecs(i, j);
    double angle = oracle::subspace_angle(tensor_to_mat(state.weights), top);

    CheckResult res;
    res.name = "hpca-pca-equivalence";
    res.pass = angle < 8.0;
    std::ostringstream os;
    os << "max per-component angle " << angle << " deg (limit 8)";
    res.detail = os.str();
    return res;
}

CheckResult wta_centroid_recovery() {
    const double mu_a[2] = {4.0, 1.0}, mu_b[2] = {1.0, 4.0}, sigma = 0.1;
    double worst = 0.0;
    int ok_seeds = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed);
        Rng wrng = rng.derive("weights");
        HebbianLayerState state(2, 2, wrng, /*eta=*/0.01);
        double sum_a[2] = {0, 0}, sum_b[2] = {0, 0};
        std::size_t n_a = 0, n_b = 0;
        // prototypes start at the first sample drawn from each cluster, the
        // usual competitive-learning init; a dead unit stuck at the global
        // mean would otherwise be possible
        bool seeded_a = false, seeded_b = false;
        for (int step = 0; step < 2000; ++step) {
            bool pick_a = rng.uniform() < 0.5;
            const double* mu = pick_a ? mu_a : mu_b;
            double x0 = mu[0] + sigma * rng.normal();
            double x1 = mu[1] + sigma * rng.normal();
            if (pick_a) {
                sum_a[0] += x0;
                sum_a[1] += x1;
                ++n_a;
            } else {
                sum_b[0] += x0;
                sum_b[1] += x1;
                ++n_b;
            }
            if (pick_a && !seeded_a) {
                state.weights[0] = x0;
                state.weights[1] = x1;
                seeded_a = true;
                continue;
            }
            if (!pick_a && !seeded_b) {
                state.weights[2] = x0;
                state.weights[3] = x1;
                seeded_b = true;
                continue;
            }
            Tensor delta = wta_update(state, Tensor::vec({x0, x1}));
            for (std::size_t e = 0; e < delta.size(); ++e) state.weights[e] += delta[e];
        }
        double mean_a[2] = {sum_a[0] / n_a, sum_a[1] / n_a};
        double mean_b[2] = {sum_b[0] / n_b, sum_b[1] / n_b};
        auto dist = [&](std::size_t row, const double* m) {
            double dx = state.weights[row * 2] - m[0];
            double dy = state.weights[row * 2 + 1] - m[1];
            return std::sqrt(dx * dx + dy * dy);
        };
        // each weight must sit near a distinct cluster mean
        double assign0 = std::max(dist(0, mean_a), dist(1, mean_b));
        double assign1 = std::max(dist(0, mean_b), dist(1, mean_a));
        double err = std::min(assign0, assign1);
        worst = std::max(worst, err);
        if (err < 0.1) ++ok_seeds;
    }
    CheckResult res;
    res.name = "wta-centroid-recovery";
    res.pass = ok_seeds == 3;
    std::ostringstream os;
    os << ok_seeds << "/3 seeds within 0.1 of distinct cluster means (worst " << worst << ")";
    res.detail = os.str();
    return res;
}

CheckResult conv_update_averaging() {
    const std::size_t B = 3, P = 7, D = 12, N = 5;
    Rng rng(42);
    Rng wrng = rng.derive("w");
    HebbianLayerState state(N, D, wrng, 0.05, 0.1);
    for (std::size_t i = 0; i < D; ++i) state.running_input_mean[i] = rng.uniform(-0.2, 0.2);
    Tensor patches = uniform_tensor(rng, {B, P, D}, -1.0, 1.0);

    // independent route: refresh the mean, center, average the textbook
    // per-patch deltas over every (b,p)
    std::vector<double> mean(D);
    for (std::size_t k = 0; k < D; ++k) {
        double s = 0.0;
        for (std::size_t r = 0; r < B * P; ++r) s += patches[r * D + k];
        mean[k] = (1.0 - state.mean_momentum) * state.running_input_mean[k] +
                  state.mean_momentum * (s / static_cast<double>(B * P));
    }
    oracle::Mat w0(N, D);
    for (std::size_t e = 0; e < N * D; ++e) w0.v[e] = state.weights[e];
    oracle::Mat expected = w0;
    std::vector<double> x(D);
    for (std::size_t r = 0; r < B * P; ++r) {
        for (std::size_t k = 0; k < D; ++k) x[k] = patches[r * D + k] - mean[k];
        oracle::Mat delta = oracle::sanger_reference_delta(w0, x, state.learning_rate, true);
        for (std::size_t e = 0; e < N * D; ++e)
            expected.v[e] += delta.v[e] / static_cast<double>(B * P);
    }

    conv_hebbian_step(state, patches, RuleKind::NonlinearHPCA);
    double max_err = 0.0;
    for (std::size_t e = 0; e < N * D; ++e)
        max_err = std::max(max_err, std::abs(state.weights[e] - expected.v[e]));

    CheckResult res;
    res.name = "conv-update-averaging";
    res.pass = max_err < 1e-10;
    std::ostringstream os;
    os << "max |fast - per-patch oracle| = " << max_err << " (limit 1e-10)";
    res.detail = os.str();
    return res;
}

CheckResult schedule_and_regime_counts() {
    CheckResult res;
    res.name = "schedule-and-regime-counts";
    res.pass = true;
    std::ostringstream os;

    SgdConfig sgd;
    sgd.lr0 = 1e-3;
    const double expected[20] = {1e-3,    1e-3,    1e-3,     1e-3,     1e-3,
                                 1e-3,    1e-3,    1e-3,     1e-3,     1e-3,
                                 5e-4,    5e-4,    2.5e-4,   2.5e-4,   1.25e-4,
                                 1.25e-4, 6.25e-5, 6.25e-5,  3.125e-5, 3.125e-5};
    for (int e = 0; e < 20; ++e) {
        if (sgd.lr(e) != expected[e]) {
            res.pass = false;
            os << "lr(" << e << ")=" << sgd.lr(e) << " expected " << expected[e] << "; ";
        }
    }

    std::vector<int> labels(50000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
    const double regimes[8] = {1, 2, 3, 4, 5, 10, 25, 100};
    const std::size_t counts[8] = {400, 800, 1200, 1600, 2000, 4000, 10000, 40000};
    for (int i = 0; i < 8; ++i) {
        RegimeSplit s = make_split_from_labels(labels, 10, 0x1234, 0.2, regimes[i], 5);
        if (s.labeled_idx.size() != counts[i]) {
            res.pass = false;
            os << "r=" << regimes[i] << " gave " << s.labeled_idx.size() << " labeled, expected "
               << counts[i] << "; ";
        }
    }
    if (res.pass) os << "lr table exact for 20 epochs; regime sizes 400..40000 exact";
    res.detail = os.str();
    return res;
}

CheckResult jacobi_analytic() {
    oracle::Mat m(2, 2);
    m(0, 0) = 2;
    m(0, 1) = 1;
    m(1, 0) = 1;
    m(1, 1) = 2;
    std::vector<double> vals;
    oracle::Mat vecs;
    oracle::jacobi_eigen_symmetric(m, vals, vecs);
    // characteristic polynomial roots: 3 and 1
    double err = std::max(std::abs(vals[0] - 3.0), std::abs(vals[1] - 1.0));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    double vec_err = std::min(std::abs(vecs(0, 0) - inv_sqrt2), std::abs(vecs(0, 0) + inv_sqrt2));
    CheckResult res;
    res.name = "jacobi-analytic-2x2";
    res.pass = err < 1e-10 && vec_err < 1e-10;
    std::ostringstream os;
    os << "eigenvalue error " << err << ", eigenvector error " << vec_err << " (limit 1e-10)";
    res.detail = os.str();
    return res;
}

CheckResult pca_reconstruction() {
    double worst = 0.0;
    Rng rng(99);
    for (std::size_t d = 2; d <= 16; d += 7) {
        // random symmetric PSD matrix via A^T A
        oracle::Mat a(d, d);
        for (double& v : a.v) v = rng.uniform(-1.0, 1.0);
        oracle::Mat c(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) s += a(k, i) * a(k, j);
                c(i, j) = s;
            }
        std::vector<double> vals;
        oracle::Mat vecs;
        oracle::jacobi_eigen_symmetric(c, vals, vecs);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) s += vecs(i, k) * vals[k] * vecs(j, k);
                worst = std::max(worst, std::abs(s - c(i, j)));
            }
    }
    CheckResult res;
    res.name = "pca-reconstruction";
    res.pass = worst < 1e-8;
    std::ostringstream os;
    os << "max |C - V L V^T| = " << worst << " (limit 1e-8)";
    res.detail = os.str();
    return res;
}

std::vector<CheckResult> run_all() {
    return {jacobi_analytic(),        pca_reconstruction(),   schedule_and_regime_counts(),
            conv_update_averaging(),  wta_centroid_recovery(), hpca_pca_equivalence()};
}

} // namespace hebbseed::selfcheck
