#pragma once

#include <cstddef>
#include <vector>

#include "hebbseed/rng.hpp"
#include "hebbseed/tensor.hpp"

namespace hebbseed {

enum class BnMode { Standard, VarianceAveraged };

struct BatchNormState {
    Tensor gamma, beta;
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
    BnMode mode = BnMode::Standard;

    BatchNormState() = default;
    BatchNormState(std::size_t channels, BnMode m, double mom = 0.1, double eps = 1e-5);
    std::size_t channels() const { return gamma.size(); }
};

struct ConvGeom {
    int kh = 0, kw = 0, sh = 1, sw = 1, ph = 0, pw = 0;
};

struct ConvCache {
    Tensor cols; // (B*P) x K, already centered
    std::size_t in_h = 0, in_w = 0, in_c = 0;
};

// Cross-correlation (no kernel flip) with zero padding. weight is
// O x (C*kh*kw); input_mean (size C*kh*kw) is subtracted from every patch
// before the product, pass an empty tensor to skip centering.
Tensor conv_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                    const Tensor& input_mean, const ConvGeom& g, ConvCache* cache = nullptr);

void conv_backward(const Tensor& dout, const ConvCache& cache, const Tensor& weight,
                   const ConvGeom& g, Tensor& dweight, Tensor& dbias, Tensor& dinput);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& dout, const Tensor& input);

struct MaxPoolResult {
    Tensor output;
    std::vector<std::size_t> argmax; // flat index into the input per output element
};

MaxPoolResult maxpool_forward(const Tensor& input, int kh, int kw, int stride);
Tensor maxpool_backward(const Tensor& dout, const std::vector<std::size_t>& argmax,
                        const std::vector<std::size_t>& input_shape);

struct BnCache {
    Tensor xhat;
    std::vector<double> inv_std; // per channel (Standard) or a single shared value
    bool variance_averaged = false;
};

// Normalizes over all axes except the channel axis (axis 1). Training mode
// uses batch statistics and refreshes the running estimates; eval mode uses
// the running estimates. VarianceAveraged divides every channel by the
// square root of the mean of the per-channel variances, so the relative
// variance ordering across channels survives normalization.
Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, bool training,
                         BnCache* cache = nullptr);

Tensor batchnorm_backward(const Tensor& dout, const BnCache& cache, const BatchNormState& state,
                          Tensor& dgamma, Tensor& dbeta);

// Inverted dropout: zeros with probability rate and scales survivors by
// 1/(1-rate) in training; identity in eval. mask (if given) receives the
// applied multiplier per element.
Tensor dropout_forward(const Tensor& input, double rate, bool training, Rng& rng,
                       Tensor* mask = nullptr);
Tensor dropout_backward(const Tensor& dout, const Tensor& mask);

// Fully connected: out = (x - input_mean) W^T + b, weight O x I.
Tensor fc_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                  const Tensor& input_mean, Tensor* centered_cache = nullptr);
void fc_backward(const Tensor& dout, const Tensor& centered_input, const Tensor& weight,
                 Tensor& dweight, Tensor& dbias, Tensor& dinput);

} // namespace hebbseed
