#include "hebbseed/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hebbseed/error.hpp"

namespace hebbseed {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got shape " + shape_str());
    }
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("shape " + shape_str() + " does not match data length " +
                         std::to_string(data_.size()));
    }
}

Tensor Tensor::vec(std::initializer_list<double> vals) {
    return Tensor({vals.size()}, std::vector<double>(vals));
}

Tensor Tensor::mat(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix initializer");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::filled(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

double& Tensor::at(std::size_t i, std::size_t j) {
    if (rank() != 2 || i >= shape_[0] || j >= shape_[1]) {
        throw ShapeError("at(" + std::to_string(i) + "," + std::to_string(j) +
                         ") out of range for shape " + shape_str());
    }
    return data_[i * shape_[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    return const_cast<Tensor*>(this)->at(i, j);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const& {
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) && {
    return Tensor(std::move(shape), std::move(data_));
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    return shape_.empty() ? "scalar" : os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul expects rank-2 tensors, got " + a.shape_str() + " and " +
                         b.shape_str());
    }
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul inner dimensions disagree: " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    // Every path evaluates c_ij = sum_k a_ik * b_kj with k strictly
    // ascending, so the choice of kernel never changes a single bit.
    if (n <= 128 && k <= 1024 && m >= 32) {
        // tall A, small B: B stays cache-resident, accumulate j-tiles of 8
        // in registers so each output element is stored exactly once
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
            const double* arow = pa + i * k;
            double* crow = pc + i * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                const double* bcol = pb + j;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double aik = arow[kk];
                    const double* brow = bcol + kk * n;
                    for (int t = 0; t < 8; ++t) acc[t] += aik * brow[t];
                }
                for (int t = 0; t < 8; ++t) crow[j + t] = acc[t];
            }
            for (; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * pb[kk * n + j];
                crow[j] = acc;
            }
        }
    } else if (m <= 64 && n >= 512) {
        // small A, wide B: walk j-tiles in parallel, k innermost per tile
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t jt = 0; jt < static_cast<std::ptrdiff_t>((n + 7) / 8); ++jt) {
            const std::size_t j0 = static_cast<std::size_t>(jt) * 8;
            const std::size_t width = std::min<std::size_t>(8, n - j0);
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = pa + i * k;
                double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double aik = arow[kk];
                    const double* brow = pb + kk * n + j0;
                    for (std::size_t t = 0; t < width; ++t) acc[t] += aik * brow[t];
                }
                double* crow = pc + i * n + j0;
                for (std::size_t t = 0; t < width; ++t) crow[t] = acc[t];
            }
        }
    } else {
        // balanced shapes: i-k-j with the j loop carrying no reduction
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
            double* crow = pc + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = pa[i * k + kk];
                const double* brow = pb + kk * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Tensor matmul_at_b(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
        throw ShapeError("matmul_at_b expects K x M and K x N, got " + a.shape_str() + " and " +
                         b.shape_str());
    }
    const std::size_t K = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    // rank-1 updates with k outermost: both inputs stream exactly once and
    // the k order per output element stays ascending. Threads own disjoint
    // column ranges so no element is accumulated twice.
    const bool split_rows = m >= n;
#pragma omp parallel
    {
        int tid = 0, nt = 1;
#ifdef _OPENMP
        tid = omp_get_thread_num();
        nt = omp_get_num_threads();
#endif
        const std::size_t span = split_rows ? m : n;
        const std::size_t lo = span * tid / nt;
        const std::size_t hi = span * (tid + 1) / nt;
        if (hi > lo) {
            const std::size_t i0 = split_rows ? lo : 0, i1 = split_rows ? hi : m;
            const std::size_t j0 = split_rows ? 0 : lo, j1 = split_rows ? n : hi;
            for (std::size_t k = 0; k < K; ++k) {
                const double* arow = pa + k * m;
                const double* brow = pb + k * n;
                for (std::size_t i = i0; i < i1; ++i) {
                    const double aki = arow[i];
                    double* crow = pc + i * n;
                    for (std::size_t j = j0; j < j1; ++j) crow[j] += aki * brow[j];
                }
            }
        }
    }
    return c;
}

Tensor transpose(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("transpose expects rank-2 tensor, got " + m.shape_str());
    const std::size_t r = m.dim(0), c = m.dim(1);
    Tensor t({c, r});
    const double* pm = m.data();
    double* pt = t.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) pt[j * r + i] = pm[i * c + j];
    return t;
}

std::size_t conv_out_dim(std::size_t in, int k, int s, int p) {
    std::ptrdiff_t num = static_cast<std::ptrdiff_t>(in) + 2 * p - k;
    if (num < 0) {
        throw ShapeError("kernel " + std::to_string(k) + " larger than padded input " +
                         std::to_string(in + 2 * p));
    }
    return static_cast<std::size_t>(num / s + 1);
}

Tensor im2col(const Tensor& input, int kh, int kw, int sh, int sw, int ph, int pw) {
    if (input.rank() != 4) throw ShapeError("im2col expects BxCxHxW, got " + input.shape_str());
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t oh = conv_out_dim(H, kh, sh, ph);
    const std::size_t ow = conv_out_dim(W, kw, sw, pw);
    const std::size_t P = oh * ow;
    const std::size_t K = C * static_cast<std::size_t>(kh) * static_cast<std::size_t>(kw);
    Tensor cols({B, P, K});
    const double* src = input.data();
    double* dst = cols.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b) {
        const double* img = src + b * C * H * W;
        double* out = dst + b * P * K;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double* patch = out + (oy * ow + ox) * K;
                std::size_t idx = 0;
                for (std::size_t c = 0; c < C; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy) * sh + ky - ph;
                        for (int kx = 0; kx < kw; ++kx, ++idx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox) * sw + kx - pw;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H) || ix < 0 ||
                                ix >= static_cast<std::ptrdiff_t>(W)) {
                                patch[idx] = 0.0;
                            } else {
                                patch[idx] = img[(c * H + iy) * W + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return cols;
}

Tensor col2im(const Tensor& cols, std::size_t channels, std::size_t height, std::size_t width,
              int kh, int kw, int sh, int sw, int ph, int pw) {
    if (cols.rank() != 3) throw ShapeError("col2im expects BxPxK, got " + cols.shape_str());
    const std::size_t B = cols.dim(0), P = cols.dim(1), K = cols.dim(2);
    const std::size_t oh = conv_out_dim(height, kh, sh, ph);
    const std::size_t ow = conv_out_dim(width, kw, sw, pw);
    if (P != oh * ow || K != channels * static_cast<std::size_t>(kh) * static_cast<std::size_t>(kw)) {
        throw ShapeError("col2im: cols shape " + cols.shape_str() + " inconsistent with target");
    }
    Tensor img({B, channels, height, width});
    const double* src = cols.data();
    double* dst = img.data();
    // Each image accumulates serially in patch order; images are independent.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b) {
        const double* in = src + b * P * K;
        double* out = dst + b * channels * height * width;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* patch = in + (oy * ow + ox) * K;
                std::size_t idx = 0;
                for (std::size_t c = 0; c < channels; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy) * sh + ky - ph;
                        for (int kx = 0; kx < kw; ++kx, ++idx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox) * sw + kx - pw;
                            if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(height) && ix >= 0 &&
                                ix < static_cast<std::ptrdiff_t>(width)) {
                                out[(c * height + iy) * width + ix] += patch[idx];
                            }
                        }
                    }
                }
            }
        }
    }
    return img;
}

Tensor reduce_mean(const Tensor& t, const std::vector<std::size_t>& axes) {
    std::vector<bool> reduce(t.rank(), false);
    for (std::size_t ax : axes) {
        if (ax >= t.rank()) {
            throw ArgumentError("reduce_mean: axis " + std::to_string(ax) +
                                " out of range for shape " + t.shape_str());
        }
        if (reduce[ax]) throw ArgumentError("reduce_mean: duplicate axis " + std::to_string(ax));
        reduce[ax] = true;
    }
    std::vector<std::size_t> out_shape;
    std::size_t reduced_count = 1;
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (reduce[i])
            reduced_count *= t.dim(i);
        else
            out_shape.push_back(t.dim(i));
    }
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor out(out_shape);

    // strides of the input
    std::vector<std::size_t> strides(t.rank(), 1);
    for (std::size_t i = t.rank(); i-- > 1;) strides[i - 1] = strides[i] * t.dim(i);

    std::vector<std::size_t> kept, dropped;
    for (std::size_t i = 0; i < t.rank(); ++i) (reduce[i] ? dropped : kept).push_back(i);

    const double* src = t.data();
    double* dst = out.data();
    const std::size_t out_n = out.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t oi = 0; oi < static_cast<std::ptrdiff_t>(out_n); ++oi) {
        // decode output index into kept-axis coordinates
        std::size_t base = 0, rem = static_cast<std::size_t>(oi);
        for (std::size_t ki = kept.size(); ki-- > 0;) {
            std::size_t ax = kept[ki];
            base += (rem % t.dim(ax)) * strides[ax];
            rem /= t.dim(ax);
        }
        // ascending odometer over reduced axes keeps the summation order fixed
        double sum = 0.0;
        std::vector<std::size_t> coord(dropped.size(), 0);
        for (std::size_t n = 0; n < reduced_count; ++n) {
            std::size_t off = base;
            for (std::size_t di = 0; di < dropped.size(); ++di) off += coord[di] * strides[dropped[di]];
            sum += src[off];
            for (std::size_t di = dropped.size(); di-- > 0;) {
                if (++coord[di] < t.dim(dropped[di])) break;
                coord[di] = 0;
            }
        }
        dst[oi] = sum / static_cast<double>(reduced_count);
    }
    return out;
}

Tensor uniform_tensor(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

Tensor normal_tensor(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = mean + stddev * rng.normal();
    return t;
}

} // namespace hebbseed
