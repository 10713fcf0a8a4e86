#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "hebbseed/error.hpp"
#include "hebbseed/layers.hpp"
#include "hebbseed/tensor.hpp"

using namespace hebbseed;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central-difference check of an analytic gradient: loss(x) = sum(f(x) .* r).
// Returns the worst relative error over all coordinates of x.
double fd_gradient_error(Tensor& x, const Tensor& r,
                         const std::function<Tensor()>& forward,
                         const Tensor& analytic_grad, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        Tensor up = forward();
        x[i] = keep - h;
        Tensor down = forward();
        x[i] = keep;
        double lu = 0.0, ld = 0.0;
        for (std::size_t e = 0; e < up.size(); ++e) {
            lu += up[e] * r[e];
            ld += down[e] * r[e];
        }
        const double numeric = (lu - ld) / (2.0 * h);
        worst = std::max(worst, rel_err(analytic_grad[i], numeric));
    }
    return worst;
}

// nudge values away from relu/pool decision boundaries
void separate_values(Tensor& t, double margin = 5e-3) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::abs(t[i]) < margin) t[i] += (t[i] >= 0 ? margin : -margin);
        t[i] += 1e-4 * static_cast<double>(i % 97); // break pooling ties
    }
}

} // namespace

TEST_CASE("conv forward trivial cases") {
    // 1x1 kernel with unit weight is the identity map
    Rng rng(3);
    Tensor x = uniform_tensor(rng, {2, 1, 4, 4}, -1.0, 1.0);
    Tensor w({1, 1}, {1.0});
    Tensor b({1});
    Tensor none;
    ConvGeom g{1, 1, 1, 1, 0, 0};
    Tensor y = conv_forward(x, w, b, none, g);
    for (std::size_t e = 0; e < x.size(); ++e) CHECK(y[e] == x[e]);

    // all-ones 3x3 kernel over an all-ones 5x5 input: all nines
    Tensor ones = Tensor::filled({1, 1, 5, 5}, 1.0);
    Tensor w9 = Tensor::filled({1, 9}, 1.0);
    ConvGeom g9{3, 3, 1, 1, 0, 0};
    Tensor nines = conv_forward(ones, w9, b, none, g9);
    CHECK(nines.shape() == std::vector<std::size_t>{1, 1, 3, 3});
    for (std::size_t e = 0; e < nines.size(); ++e) CHECK(nines[e] == 9.0);
}

TEST_CASE("conv backward matches finite differences") {
    Rng rng(5);
    Tensor x = uniform_tensor(rng, {2, 3, 6, 6}, -1.0, 1.0);
    Tensor w = uniform_tensor(rng, {4, 27}, -0.5, 0.5);
    Tensor b = uniform_tensor(rng, {4}, -0.1, 0.1);
    Tensor none;
    ConvGeom g{3, 3, 2, 2, 1, 1};

    ConvCache cache;
    Tensor out = conv_forward(x, w, b, none, g, &cache);
    Rng rrng(6);
    Tensor r = uniform_tensor(rrng, out.shape(), -1.0, 1.0);

    Tensor dw, db, dx;
    conv_backward(r, cache, w, g, dw, db, dx);

    auto fwd_x = [&] { return conv_forward(x, w, b, none, g); };
    CHECK(fd_gradient_error(x, r, fwd_x, dx) < 1e-4);
    auto fwd_w = [&] { return conv_forward(x, w, b, none, g); };
    CHECK(fd_gradient_error(w, r, fwd_w, dw) < 1e-4);
    auto fwd_b = [&] { return conv_forward(x, w, b, none, g); };
    CHECK(fd_gradient_error(b, r, fwd_b, db) < 1e-4);
}

TEST_CASE("maxpool forward and routing") {
    // constant input: constant output, indices at the first window element
    Tensor c = Tensor::filled({1, 1, 4, 4}, 7.0);
    MaxPoolResult rc = maxpool_forward(c, 2, 2, 2);
    for (std::size_t e = 0; e < rc.output.size(); ++e) CHECK(rc.output[e] == 7.0);
    CHECK(rc.argmax[0] == 0);
    CHECK(rc.argmax[1] == 2);

    Tensor m({1, 1, 2, 2}, {1, 2, 3, 4});
    MaxPoolResult rm = maxpool_forward(m, 2, 2, 2);
    CHECK(rm.output.size() == 1);
    CHECK(rm.output[0] == 4.0);

    CHECK_THROWS_AS(maxpool_forward(m, 3, 3, 1), ShapeError);

    // gradient through the argmax routing vs finite differences
    Rng rng(9);
    Tensor x = uniform_tensor(rng, {2, 2, 6, 6}, -1.0, 1.0);
    separate_values(x);
    MaxPoolResult res = maxpool_forward(x, 2, 2, 2);
    Rng rrng(10);
    Tensor r = uniform_tensor(rrng, res.output.shape(), -1.0, 1.0);
    Tensor dx = maxpool_backward(r, res.argmax, x.shape());
    auto fwd = [&] { return maxpool_forward(x, 2, 2, 2).output; };
    CHECK(fd_gradient_error(x, r, fwd, dx, 1e-6) < 1e-4);
}

TEST_CASE("relu forward/backward") {
    Tensor x({4}, {-1.0, 0.0, 0.5, 2.0});
    Tensor y = relu_forward(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 0.5);
    CHECK(y[3] == 2.0);

    Rng rng(12);
    Tensor rx = uniform_tensor(rng, {3, 5}, -1.0, 1.0);
    separate_values(rx);
    Tensor r = uniform_tensor(rng, {3, 5}, -1.0, 1.0);
    Tensor dx = relu_backward(r, rx);
    auto fwd = [&] { return relu_forward(rx); };
    CHECK(fd_gradient_error(rx, r, fwd, dx, 1e-6) < 1e-4);
}

TEST_CASE("batchnorm standard mode") {
    // already-normalized input passes through (gamma=1, beta=0, tiny eps)
    Rng rng(14);
    BatchNormState st(3, BnMode::Standard, 0.1, 1e-12);
    Tensor x({64, 3});
    for (std::size_t b = 0; b < 64; ++b)
        for (std::size_t c = 0; c < 3; ++c) x[b * 3 + c] = rng.normal();
    // normalize it exactly first
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0, v = 0;
        for (std::size_t b = 0; b < 64; ++b) m += x[b * 3 + c];
        m /= 64;
        for (std::size_t b = 0; b < 64; ++b) v += (x[b * 3 + c] - m) * (x[b * 3 + c] - m);
        v /= 64;
        for (std::size_t b = 0; b < 64; ++b) x[b * 3 + c] = (x[b * 3 + c] - m) / std::sqrt(v);
    }
    Tensor y = batchnorm_forward(x, st, true);
    for (std::size_t e = 0; e < y.size(); ++e) CHECK(y[e] == doctest::Approx(x[e]).epsilon(1e-6));

    // per-channel output variance is 1 within 1e-6
    BatchNormState st2(4, BnMode::Standard, 0.1, 1e-12);
    Tensor z({128, 4});
    for (std::size_t e = 0; e < z.size(); ++e) z[e] = 3.0 * rng.normal() + 1.0;
    Tensor zn = batchnorm_forward(z, st2, true);
    for (std::size_t c = 0; c < 4; ++c) {
        double m = 0, v = 0;
        for (std::size_t b = 0; b < 128; ++b) m += zn[b * 4 + c];
        m /= 128;
        for (std::size_t b = 0; b < 128; ++b) v += (zn[b * 4 + c] - m) * (zn[b * 4 + c] - m);
        v /= 128;
        CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
    }

    CHECK_THROWS_AS(batchnorm_forward(Tensor({1, 4}), st2, true), ArgumentError);
}

TEST_CASE("batchnorm variance-averaged mode") {
    // two channels with variances 1 and 9: both divided by sqrt(5), ratios kept
    Rng rng(16);
    BatchNormState st(2, BnMode::VarianceAveraged, 0.1, 1e-12);
    Tensor x({256, 2});
    for (std::size_t b = 0; b < 256; ++b) {
        x[b * 2 + 0] = rng.normal();
        x[b * 2 + 1] = 3.0 * rng.normal();
    }
    Tensor y = batchnorm_forward(x, st, true);
    double var[2] = {0, 0}, mean[2] = {0, 0};
    for (std::size_t b = 0; b < 256; ++b)
        for (int c = 0; c < 2; ++c) mean[c] += y[b * 2 + c];
    mean[0] /= 256;
    mean[1] /= 256;
    for (std::size_t b = 0; b < 256; ++b)
        for (int c = 0; c < 2; ++c) var[c] += (y[b * 2 + c] - mean[c]) * (y[b * 2 + c] - mean[c]);
    var[0] /= 256;
    var[1] /= 256;
    // mean of output variances is 1, and the 1:9 ratio is preserved
    CHECK((var[0] + var[1]) / 2.0 == doctest::Approx(1.0).epsilon(1e-6));
    double in_var[2] = {0, 0}, in_mean[2] = {0, 0};
    for (std::size_t b = 0; b < 256; ++b)
        for (int c = 0; c < 2; ++c) in_mean[c] += x[b * 2 + c];
    in_mean[0] /= 256;
    in_mean[1] /= 256;
    for (std::size_t b = 0; b < 256; ++b)
        for (int c = 0; c < 2; ++c)
            in_var[c] += (x[b * 2 + c] - in_mean[c]) * (x[b * 2 + c] - in_mean[c]);
    CHECK(var[1] / var[0] == doctest::Approx(in_var[1] / in_var[0]).epsilon(1e-9));
}

TEST_CASE("variance-averaged mode preserves the variance ordering") {
    Rng rng(18);
    const std::size_t C = 6, B = 32;
    BatchNormState st(C, BnMode::VarianceAveraged);
    Tensor x({B, C, 3, 3});
    for (std::size_t e = 0; e < x.size(); ++e) {
        std::size_t c = (e / 9) % C;
        x[e] = (0.3 + 0.9 * static_cast<double>(c)) * rng.normal() + 0.1 * static_cast<double>(c);
    }
    Tensor y = batchnorm_forward(x, st, true);
    auto channel_vars = [&](const Tensor& t) {
        std::vector<double> vars(C, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            double m = 0;
            std::size_t n = 0;
            for (std::size_t b = 0; b < B; ++b)
                for (int e = 0; e < 9; ++e) {
                    m += t[(b * C + c) * 9 + e];
                    ++n;
                }
            m /= static_cast<double>(n);
            double v = 0;
            for (std::size_t b = 0; b < B; ++b)
                for (int e = 0; e < 9; ++e) {
                    double d = t[(b * C + c) * 9 + e] - m;
                    v += d * d;
                }
            vars[c] = v / static_cast<double>(n);
        }
        return vars;
    };
    auto argsort = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        return idx;
    };
    CHECK(argsort(channel_vars(x)) == argsort(channel_vars(y)));
}

TEST_CASE("batchnorm backward matches finite differences (both modes)") {
    for (BnMode mode : {BnMode::Standard, BnMode::VarianceAveraged}) {
        Rng rng(mode == BnMode::Standard ? 21 : 22);
        BatchNormState st(3, mode);
        st.gamma = uniform_tensor(rng, {3}, 0.5, 1.5);
        st.beta = uniform_tensor(rng, {3}, -0.5, 0.5);
        Tensor x = uniform_tensor(rng, {4, 3, 2, 2}, -1.0, 1.0);
        Tensor r = uniform_tensor(rng, {4, 3, 2, 2}, -1.0, 1.0);

        BnCache cache;
        batchnorm_forward(x, st, true, &cache);
        Tensor dgamma, dbeta;
        Tensor dx = batchnorm_backward(r, cache, st, dgamma, dbeta);

        auto fwd = [&] { return batchnorm_forward(x, st, true); };
        CHECK(fd_gradient_error(x, r, fwd, dx) < 1e-4);
        CHECK(fd_gradient_error(st.gamma, r, fwd, dgamma) < 1e-4);
        CHECK(fd_gradient_error(st.beta, r, fwd, dbeta) < 1e-4);
    }
}

TEST_CASE("batchnorm eval mode uses running stats and is deterministic") {
    Rng rng(25);
    BatchNormState st(2, BnMode::Standard);
    Tensor x = uniform_tensor(rng, {8, 2}, -1.0, 1.0);
    batchnorm_forward(x, st, true);
    Tensor e1 = batchnorm_forward(x, st, false);
    Tensor e2 = batchnorm_forward(x, st, false);
    for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i] == e2[i]);
}

TEST_CASE("dropout") {
    Rng rng(27);
    Tensor x = uniform_tensor(rng, {10}, -1.0, 1.0);

    Rng d1(1);
    Tensor y = dropout_forward(x, 0.0, true, d1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

    Tensor ye = dropout_forward(x, 0.9, false, d1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(ye[i] == x[i]);

    CHECK_THROWS_AS(dropout_forward(x, 1.0, true, d1), ArgumentError);

    // survivor fraction at rate 0.5 over 1e5 elements
    Tensor big = Tensor::filled({100000}, 1.0);
    Rng d2(99);
    Tensor masked = dropout_forward(big, 0.5, true, d2);
    std::size_t survivors = 0;
    for (std::size_t i = 0; i < masked.size(); ++i)
        if (masked[i] != 0.0) {
            CHECK(masked[i] == 2.0); // inverted scaling
            ++survivors;
        }
    double frac = static_cast<double>(survivors) / 100000.0;
    CHECK(frac > 0.49);
    CHECK(frac < 0.51);
}

TEST_CASE("fc backward matches finite differences") {
    Rng rng(29);
    Tensor x = uniform_tensor(rng, {4, 6}, -1.0, 1.0);
    Tensor w = uniform_tensor(rng, {3, 6}, -0.5, 0.5);
    Tensor b = uniform_tensor(rng, {3}, -0.2, 0.2);
    Tensor none;
    Tensor centered;
    fc_forward(x, w, b, none, &centered);
    Tensor r = uniform_tensor(rng, {4, 3}, -1.0, 1.0);
    Tensor dw, db, dx;
    fc_backward(r, centered, w, dw, db, dx);
    auto fwd = [&] { return fc_forward(x, w, b, none); };
    CHECK(fd_gradient_error(x, r, fwd, dx) < 1e-4);
    CHECK(fd_gradient_error(w, r, fwd, dw) < 1e-4);
    CHECK(fd_gradient_error(b, r, fwd, db) < 1e-4);
}
