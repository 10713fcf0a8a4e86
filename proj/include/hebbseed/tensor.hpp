#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "hebbseed/rng.hpp"

namespace hebbseed {

// Dense row-major tensor of 64-bit reals. Operations return new tensors;
// nothing aliases mutable data. Safe to share read-only across threads.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vec(std::initializer_list<double> vals);
    static Tensor mat(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor filled(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // checked 2-d access, used mostly in tests
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    std::string shape_str() const; // e.g. "2x3x4"

    // same flat data under a new shape; the && overload steals the buffer
    Tensor reshaped(std::vector<std::size_t> shape) const&;
    Tensor reshaped(std::vector<std::size_t> shape) &&;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Standard matrix product with fixed loop order: the sum over the inner
// dimension is evaluated in ascending index order for every output element,
// independent of thread count.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& m);

// a^T * b for a: K x M, b: K x N without materializing the transpose.
// Same fixed summation order (ascending K per output element); suited to
// small M/N with a long shared K axis.
Tensor matmul_at_b(const Tensor& a, const Tensor& b);

// Patch extraction for convolution lowering. Input is B x C x H x W; output
// is B x P x (C*kh*kw) with P = out_h*out_w and each patch flattened in
// (channel, row, col) order. Out-of-bounds reads under padding are zero.
Tensor im2col(const Tensor& input, int kh, int kw, int sh, int sw, int ph, int pw);

// Scatter-add inverse of im2col: accumulates patch gradients back onto a
// zero-initialized B x C x H x W tensor.
Tensor col2im(const Tensor& cols, std::size_t channels, std::size_t height, std::size_t width,
              int kh, int kw, int sh, int sw, int ph, int pw);

// Arithmetic mean over the listed axes; reduced axes are removed from the
// shape (a full reduction yields a rank-1 tensor of size 1).
Tensor reduce_mean(const Tensor& t, const std::vector<std::size_t>& axes);

Tensor uniform_tensor(Rng& rng, std::vector<std::size_t> shape, double lo, double hi);
Tensor normal_tensor(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev);

std::size_t conv_out_dim(std::size_t in, int k, int s, int p);

} // namespace hebbseed
