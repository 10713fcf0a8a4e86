#include "hebbseed/layers.hpp"

#include <cmath>

#include "hebbseed/error.hpp"

namespace hebbseed {

BatchNormState::BatchNormState(std::size_t channels, BnMode m, double mom, double eps)
    : gamma(Tensor::filled({channels}, 1.0)),
      beta(Tensor({channels})),
      running_mean(Tensor({channels})),
      running_var(Tensor::filled({channels}, 1.0)),
      momentum(mom),
      epsilon(eps),
      mode(m) {}

Tensor conv_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                    const Tensor& input_mean, const ConvGeom& g, ConvCache* cache) {
    if (input.rank() != 4) throw ShapeError("conv_forward: expected BxCxHxW, got " + input.shape_str());
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t K = C * static_cast<std::size_t>(g.kh) * static_cast<std::size_t>(g.kw);
    if (weight.rank() != 2 || weight.dim(1) != K)
        throw ShapeError("conv_forward: weight " + weight.shape_str() + " does not match patch size " +
                         std::to_string(K));
    const std::size_t O = weight.dim(0);
    const std::size_t oh = conv_out_dim(H, g.kh, g.sh, g.ph);
    const std::size_t ow = conv_out_dim(W, g.kw, g.sw, g.pw);
    const std::size_t P = oh * ow;

    Tensor cols = im2col(input, g.kh, g.kw, g.sh, g.sw, g.ph, g.pw).reshaped({B * P, K});
    if (input_mean.size() == K) {
        bool any_nonzero = false;
        for (std::size_t i = 0; i < K; ++i)
            if (input_mean[i] != 0.0) any_nonzero = true;
        if (any_nonzero) {
            double* pc = cols.data();
            const double* pm = input_mean.data();
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(B * P); ++r)
                for (std::size_t k = 0; k < K; ++k) pc[r * K + k] -= pm[k];
        }
    } else if (input_mean.size() != 0) {
        throw ShapeError("conv_forward: input_mean size " + std::to_string(input_mean.size()) +
                         " does not match patch size " + std::to_string(K));
    }

    // (B*P) x K times K x O, then reorder to B x O x oh x ow
    Tensor prod = matmul(cols, transpose(weight));
    Tensor out({B, O, oh, ow});
    const double* pp = prod.data();
    const double* pb = bias.data();
    double* po = out.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b)
        for (std::size_t o = 0; o < O; ++o) {
            const double bo = bias.size() ? pb[o] : 0.0;
            for (std::size_t p = 0; p < P; ++p)
                po[(b * O + o) * P + p] = pp[(b * P + p) * O + o] + bo;
        }
    if (cache) {
        cache->cols = std::move(cols);
        cache->in_h = H;
        cache->in_w = W;
        cache->in_c = C;
    }
    return out;
}

void conv_backward(const Tensor& dout, const ConvCache& cache, const Tensor& weight,
                   const ConvGeom& g, Tensor& dweight, Tensor& dbias, Tensor& dinput) {
    const std::size_t B = dout.dim(0), O = dout.dim(1), P = dout.dim(2) * dout.dim(3);
    const std::size_t K = weight.dim(1);

    // dout as (B*P) x O
    Tensor dout_t({B * P, O});
    const double* pd = dout.data();
    double* pt = dout_t.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t p = 0; p < P; ++p)
                pt[(b * P + p) * O + o] = pd[(b * O + o) * P + p];

    dweight = matmul_at_b(dout_t, cache.cols); // O x K, sum over (b,p) ascending

    dbias = Tensor({O});
    double* pdb = dbias.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(O); ++o) {
        double s = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t p = 0; p < P; ++p) s += pd[(b * O + o) * P + p];
        pdb[o] = s;
    }

    Tensor dcols = matmul(dout_t, weight).reshaped({B, P, K});
    dinput = col2im(dcols, cache.in_c, cache.in_h, cache.in_w, g.kh, g.kw, g.sh, g.sw, g.ph, g.pw);
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape());
    const double* pi = input.data();
    double* po = out.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(input.size()); ++i)
        po[i] = pi[i] > 0.0 ? pi[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& dout, const Tensor& input) {
    if (!dout.same_shape(input))
        throw ShapeError("relu_backward: shapes " + dout.shape_str() + " vs " + input.shape_str());
    Tensor out(input.shape());
    const double* pd = dout.data();
    const double* pi = input.data();
    double* po = out.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(input.size()); ++i)
        po[i] = pi[i] > 0.0 ? pd[i] : 0.0;
    return out;
}

MaxPoolResult maxpool_forward(const Tensor& input, int kh, int kw, int stride) {
    if (input.rank() != 4)
        throw ShapeError("maxpool_forward: expected BxCxHxW, got " + input.shape_str());
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (static_cast<std::size_t>(kh) > H || static_cast<std::size_t>(kw) > W)
        throw ShapeError("maxpool_forward: window " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than input " + input.shape_str());
    const std::size_t oh = (H - kh) / stride + 1;
    const std::size_t ow = (W - kw) / stride + 1;

    MaxPoolResult res{Tensor({B, C, oh, ow}), {}};
    res.argmax.resize(B * C * oh * ow);
    const double* pi = input.data();
    double* po = res.output.data();
    std::size_t* pa = res.argmax.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bc = 0; bc < static_cast<std::ptrdiff_t>(B * C); ++bc) {
        const double* plane = pi + bc * H * W;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t best_idx = (y * stride) * W + (x * stride);
                double best = plane[best_idx];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        std::size_t idx = (y * stride + ky) * W + (x * stride + kx);
                        if (plane[idx] > best) { // strict: ties keep the first seen
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                po[bc * oh * ow + y * ow + x] = best;
                pa[bc * oh * ow + y * ow + x] = bc * H * W + best_idx;
            }
    }
    return res;
}

Tensor maxpool_backward(const Tensor& dout, const std::vector<std::size_t>& argmax,
                        const std::vector<std::size_t>& input_shape) {
    Tensor dinput(input_shape);
    const double* pd = dout.data();
    double* pi = dinput.data();
    const std::size_t B = input_shape[0], C = input_shape[1];
    const std::size_t plane = dinput.size() / (B * C);
    const std::size_t out_plane = dout.size() / (B * C);
    // windows of one (b,c) plane only touch that plane, so planes are independent
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bc = 0; bc < static_cast<std::ptrdiff_t>(B * C); ++bc) {
        (void)plane;
        for (std::size_t e = 0; e < out_plane; ++e) {
            std::size_t oi = bc * out_plane + e;
            pi[argmax[oi]] += pd[oi];
        }
    }
    return dinput;
}

Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, bool training, BnCache* cache) {
    if (input.rank() < 2)
        throw ShapeError("batchnorm_forward: expected at least BxC, got " + input.shape_str());
    const std::size_t B = input.dim(0), C = input.dim(1);
    if (C != state.channels())
        throw ShapeError("batchnorm_forward: input " + input.shape_str() + " vs state channels " +
                         std::to_string(state.channels()));
    if (training && B < 2)
        throw ArgumentError("batchnorm_forward: training mode requires batch >= 2");

    std::size_t spatial = 1;
    for (std::size_t i = 2; i < input.rank(); ++i) spatial *= input.dim(i);
    const std::size_t N = B * spatial;
    const bool va = state.mode == BnMode::VarianceAveraged;

    std::vector<double> mean(C), var(C);
    if (training) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t e = 0; e < spatial; ++e) s += input[(b * C + c) * spatial + e];
            const double m = s / static_cast<double>(N);
            double v = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t e = 0; e < spatial; ++e) {
                    double d = input[(b * C + c) * spatial + e] - m;
                    v += d * d;
                }
            mean[c] = m;
            var[c] = v / static_cast<double>(N);
        }
        for (std::size_t c = 0; c < C; ++c) {
            state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
            state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c];
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            var[c] = state.running_var[c];
        }
    }

    std::vector<double> inv_std;
    if (va) {
        double avg = 0.0;
        for (std::size_t c = 0; c < C; ++c) avg += var[c];
        avg /= static_cast<double>(C);
        inv_std.assign(1, 1.0 / std::sqrt(avg + state.epsilon));
    } else {
        inv_std.resize(C);
        for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
    }

    Tensor out(input.shape());
    Tensor xhat(input.shape());
    const double* pi = input.data();
    double* po = out.data();
    double* ph = xhat.data();
    const double* pg = state.gamma.data();
    const double* pb = state.beta.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(B); ++bi)
        for (std::size_t c = 0; c < C; ++c) {
            const double is = va ? inv_std[0] : inv_std[c];
            for (std::size_t e = 0; e < spatial; ++e) {
                std::size_t idx = (bi * C + c) * spatial + e;
                double h = (pi[idx] - mean[c]) * is;
                ph[idx] = h;
                po[idx] = pg[c] * h + pb[c];
            }
        }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->variance_averaged = va;
    }
    return out;
}

Tensor batchnorm_backward(const Tensor& dout, const BnCache& cache, const BatchNormState& state,
                          Tensor& dgamma, Tensor& dbeta) {
    const Tensor& xhat = cache.xhat;
    const std::size_t B = xhat.dim(0), C = xhat.dim(1);
    std::size_t spatial = 1;
    for (std::size_t i = 2; i < xhat.rank(); ++i) spatial *= xhat.dim(i);
    const std::size_t N = B * spatial;
    const double* pd = dout.data();
    const double* ph = xhat.data();
    const double* pg = state.gamma.data();

    dgamma = Tensor({C});
    dbeta = Tensor({C});
    std::vector<double> sum_d(C, 0.0), sum_dh(C, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
        double sd = 0.0, sdh = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t e = 0; e < spatial; ++e) {
                std::size_t idx = (b * C + c) * spatial + e;
                sd += pd[idx];
                sdh += pd[idx] * ph[idx];
            }
        sum_d[c] = sd;
        sum_dh[c] = sdh;
        dgamma[c] = sdh;
        dbeta[c] = sd;
    }

    Tensor dx(xhat.shape());
    double* px = dx.data();
    if (!cache.variance_averaged) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double k = pg[c] * cache.inv_std[c];
                const double md = sum_d[c] / static_cast<double>(N);
                const double mdh = sum_dh[c] / static_cast<double>(N);
                for (std::size_t e = 0; e < spatial; ++e) {
                    std::size_t idx = (b * C + c) * spatial + e;
                    px[idx] = k * (pd[idx] - md - ph[idx] * mdh);
                }
            }
    } else {
        // shared divisor couples the channels through the average variance
        double g_total = 0.0;
        for (std::size_t c = 0; c < C; ++c) g_total += pg[c] * sum_dh[c];
        const double is = cache.inv_std[0];
        const double cross = is * g_total / (static_cast<double>(C) * static_cast<double>(N));
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double k = pg[c] * is;
                const double md = sum_d[c] / static_cast<double>(N);
                for (std::size_t e = 0; e < spatial; ++e) {
                    std::size_t idx = (b * C + c) * spatial + e;
                    px[idx] = k * (pd[idx] - md) - ph[idx] * cross;
                }
            }
    }
    return dx;
}

Tensor dropout_forward(const Tensor& input, double rate, bool training, Rng& rng, Tensor* mask) {
    if (rate < 0.0 || rate >= 1.0)
        throw ArgumentError("dropout_forward: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) {
        if (mask) *mask = Tensor::filled(input.shape(), 1.0);
        return input;
    }
    const double scale = 1.0 / (1.0 - rate);
    Tensor m(input.shape());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < rate ? 0.0 : scale;
    Tensor out(input.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] * m[i];
    if (mask) *mask = std::move(m);
    return out;
}

Tensor dropout_backward(const Tensor& dout, const Tensor& mask) {
    Tensor out(dout.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dout[i] * mask[i];
    return out;
}

Tensor fc_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                  const Tensor& input_mean, Tensor* centered_cache) {
    if (input.rank() != 2)
        throw ShapeError("fc_forward: expected B x features, got " + input.shape_str());
    const std::size_t B = input.dim(0), I = input.dim(1), O = weight.dim(0);
    if (weight.dim(1) != I)
        throw ShapeError("fc_forward: input " + input.shape_str() + " vs weight " + weight.shape_str());
    Tensor centered = input;
    if (input_mean.size() == I) {
        double* pc = centered.data();
        const double* pm = input_mean.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t k = 0; k < I; ++k) pc[b * I + k] -= pm[k];
    } else if (input_mean.size() != 0) {
        throw ShapeError("fc_forward: input_mean size mismatch");
    }
    Tensor out = matmul(centered, transpose(weight));
    if (bias.size()) {
        double* po = out.data();
        const double* pb = bias.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o) po[b * O + o] += pb[o];
    }
    if (centered_cache) *centered_cache = std::move(centered);
    return out;
}

void fc_backward(const Tensor& dout, const Tensor& centered_input, const Tensor& weight,
                 Tensor& dweight, Tensor& dbias, Tensor& dinput) {
    const std::size_t B = dout.dim(0), O = dout.dim(1);
    dweight = matmul_at_b(dout, centered_input); // O x I
    dbias = Tensor({O});
    for (std::size_t o = 0; o < O; ++o) {
        double s = 0.0;
        for (std::size_t b = 0; b < B; ++b) s += dout[b * O + o];
        dbias[o] = s;
    }
    dinput = matmul(dout, weight); // B x I
}

} // namespace hebbseed
