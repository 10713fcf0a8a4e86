#include "hebbseed/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hebbseed/error.hpp"

namespace hebbseed::oracle {

Mat naive_matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw ShapeError("naive_matmul: inner dims disagree");
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

std::vector<double> naive_conv2d(const std::vector<double>& input, std::size_t B, std::size_t C,
                                 std::size_t H, std::size_t W, const std::vector<double>& weights,
                                 const std::vector<double>& bias, std::size_t O, int kh, int kw,
                                 int sh, int sw, int ph, int pw, std::size_t& oh, std::size_t& ow) {
    oh = static_cast<std::size_t>((static_cast<std::ptrdiff_t>(H) + 2 * ph - kh) / sh + 1);
    ow = static_cast<std::size_t>((static_cast<std::ptrdiff_t>(W) + 2 * pw - kw) / sw + 1);
    std::vector<double> out(B * O * oh * ow, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double s = bias.empty() ? 0.0 : bias[o];
                    for (std::size_t c = 0; c < C; ++c)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) * sh + ky - ph;
                                std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) * sw + kx - pw;
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H) || ix < 0 ||
                                    ix >= static_cast<std::ptrdiff_t>(W))
                                    continue;
                                double v = input[((b * C + c) * H + iy) * W + ix];
                                double wv = weights[((o * C + c) * kh + ky) * kw + kx];
                                s += v * wv;
                            }
                    out[((b * O + o) * oh + y) * ow + x] = s;
                }
    return out;
}

Mat sanger_reference_delta(const Mat& weights, const std::vector<double>& x, double eta, bool relu) {
    const std::size_t n = weights.rows, d = weights.cols;
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += weights(i, k) * x[k];
        y[i] = relu ? (s > 0.0 ? s : 0.0) : s;
    }
    Mat delta(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) {
            double recon = 0.0;
            for (std::size_t j = 0; j <= i; ++j) recon += y[j] * weights(j, k);
            delta(i, k) = eta * (y[i] * (x[k] - recon));
        }
    return delta;
}

void jacobi_eigen_symmetric(const Mat& a, std::vector<double>& eigvals, Mat& eigvecs) {
    const std::size_t n = a.rows;
    if (n != a.cols) throw ShapeError("jacobi: matrix not square");
    if (n > 64) throw ArgumentError("jacobi: limited to d <= 64");
    for (double x : a.v)
        if (!std::isfinite(x)) throw ArgumentError("jacobi: non-finite input");

    Mat m = a;
    Mat v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
        if (off < 1e-24) break;

        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = m(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = m(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

    eigvals.resize(n);
    eigvecs = Mat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        eigvals[j] = diag[order[j]];
        for (std::size_t i = 0; i < n; ++i) eigvecs(i, j) = v(i, order[j]);
    }
}

PcaOracle exact_pca(const Mat& samples) {
    const std::size_t n = samples.rows, d = samples.cols;
    if (n == 0 || d == 0) throw ArgumentError("exact_pca: empty sample matrix");
    for (double x : samples.v)
        if (!std::isfinite(x)) throw ArgumentError("exact_pca: non-finite input");

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += samples(i, j);
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);

    PcaOracle out;
    out.covariance = Mat(d, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            double xa = samples(i, a) - mean[a];
            for (std::size_t b = a; b < d; ++b)
                out.covariance(a, b) += xa * (samples(i, b) - mean[b]);
        }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            out.covariance(a, b) /= static_cast<double>(n);
            out.covariance(b, a) = out.covariance(a, b);
        }

    jacobi_eigen_symmetric(out.covariance, out.eigvals, out.eigvecs);
    return out;
}

double subspace_angle(const Mat& w_rows, const Mat& v_cols) {
    if (w_rows.rows > v_cols.cols || w_rows.cols != v_cols.rows)
        throw ShapeError("subspace_angle: k x d rows vs d x k columns expected");
    double worst = 0.0;
    for (std::size_t i = 0; i < w_rows.rows; ++i) {
        double dot = 0.0, nw = 0.0, nv = 0.0;
        for (std::size_t k = 0; k < w_rows.cols; ++k) {
            dot += w_rows(i, k) * v_cols(k, i);
            nw += w_rows(i, k) * w_rows(i, k);
            nv += v_cols(k, i) * v_cols(k, i);
        }
        if (nw == 0.0 || nv == 0.0) throw ArgumentError("subspace_angle: zero vector");
        double c = std::abs(dot) / std::sqrt(nw * nv);
        c = std::min(c, 1.0);
        double angle = std::acos(c) * 57.29577951308232;
        worst = std::max(worst, angle);
    }
    return worst;
}

} // namespace hebbseed::oracle
