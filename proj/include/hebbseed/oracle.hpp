#pragma once

#include <cstddef>
#include <vector>

namespace hebbseed::oracle {

// Independent reference implementations used to validate the fast kernels
// and the learning rules. Everything here is serial, loop-level code over
// plain buffers on purpose: no dependency on the tensor library it checks.

struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

// Naive triple-loop product.
Mat naive_matmul(const Mat& a, const Mat& b);

// Direct nested-loop 2-d cross-correlation with zero padding.
// input:  B x C x H x W flat, weights: O x C x kh x kw flat, bias: O.
// Returns B x O x oh x ow flat.
std::vector<double> naive_conv2d(const std::vector<double>& input, std::size_t B, std::size_t C,
                                 std::size_t H, std::size_t W, const std::vector<double>& weights,
                                 const std::vector<double>& bias, std::size_t O, int kh, int kw,
                                 int sh, int sw, int ph, int pw, std::size_t& oh, std::size_t& ow);

// One Sanger-style update for a single input vector, written as the textbook
// double loop: delta[i][d] = eta * f(y_i) * (x[d] - sum_{j<=i} f(y_j) w[j][d]).
// f = identity when relu == false.
Mat sanger_reference_delta(const Mat& weights, const std::vector<double>& x, double eta, bool relu);

// Exact PCA of centered samples via cyclic Jacobi rotations on the sample
// covariance (1/n) X^T X. Limited to small d; eigenvalues sorted descending,
// eigvecs column-orthonormal (column i pairs with eigenvalue i).
struct PcaOracle {
    Mat covariance;               // d x d
    std::vector<double> eigvals;  // descending
    Mat eigvecs;                  // d x d, columns are eigenvectors
};

PcaOracle exact_pca(const Mat& samples);

// Jacobi eigendecomposition of a symmetric matrix (used by exact_pca and
// directly testable). Returns eigenvalues descending and matching columns.
void jacobi_eigen_symmetric(const Mat& a, std::vector<double>& eigvals, Mat& eigvecs);

// Max over row/column pairs of the principal angle in degrees between row i
// of W and column i of V, sign-agnostic. Throws on a zero vector.
double subspace_angle(const Mat& w_rows, const Mat& v_cols);

} // namespace hebbseed::oracle
