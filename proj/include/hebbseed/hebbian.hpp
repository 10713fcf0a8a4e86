#pragma once

#include "hebbseed/tensor.hpp"

namespace hebbseed {

enum class RuleKind {
    PlainHebb,     // dw = eta * y * x
    DecayHebb,     // dw = eta * y * (x - w), every neuron
    WTA,           // decay rule applied to the closest neuron only
    LinearHPCA,    // Sanger rule, f = identity
    NonlinearHPCA, // Sanger rule with pointwise activation f (ReLU)
};

enum class HebbActivation { Identity, ReLU };

// Weights plus the running input mean used for centering. The mean is
// updated only while training; evaluation centers with the frozen value.
struct HebbianLayerState {
    Tensor weights;            // num_neurons x input_dim
    Tensor running_input_mean; // input_dim
    double mean_momentum = 0.1;
    double learning_rate = 1e-3;

    HebbianLayerState() = default;
    HebbianLayerState(std::size_t num_neurons, std::size_t input_dim, Rng& rng,
                      double eta = 1e-3, double momentum = 0.1);

    std::size_t num_neurons() const { return weights.dim(0); }
    std::size_t input_dim() const { return weights.dim(1); }
};

// Pure delta computations; none of these mutate the state.

// dW[i] = eta * y_i * x with y_i = w_i . x
Tensor plain_hebb_update(const HebbianLayerState& state, const Tensor& x);

// dW[i] = eta * y_i * (x - w_i) for every neuron
Tensor decay_hebb_update(const HebbianLayerState& state, const Tensor& x);

// Winner i* = argmin_i |x - w_i|_2 (ties to the lowest index); only row i*
// receives eta * y * (x - w_{i*}) with the linear response y = w_{i*} . x.
Tensor wta_update(const HebbianLayerState& state, const Tensor& x);

// Sanger-style rule dW[i] = eta * f(y_i) * (x - sum_{j<=i} f(y_j) w_j),
// averaged over the batch axis of X (batch x input_dim). All per-sample
// deltas are taken against the same pre-update weights and reduced in
// ascending sample order. X must already be centered.
Tensor hpca_update(const HebbianLayerState& state, const Tensor& X, RuleKind rule,
                   HebbActivation activation = HebbActivation::ReLU);

// Mean over the batch of |x - sum_{j=1..n} f(y_j) w_j|^2.
double representation_error(const HebbianLayerState& state, const Tensor& X, RuleKind rule,
                            HebbActivation activation = HebbActivation::ReLU);

// Centers X against the running mean. In training mode the running mean is
// first refreshed from the batch: mean <- (1-m)*mean + m*batch_mean.
Tensor center_inputs(HebbianLayerState& state, const Tensor& X, bool training);

// One convolutional Hebbian step: patches is B x P x D from im2col. Updates
// the running mean from the raw patches, centers them, computes per-patch
// HPCA deltas and applies the average over both B and P to the shared
// filter weights.
void conv_hebbian_step(HebbianLayerState& state, const Tensor& patches, RuleKind rule,
                       HebbActivation activation = HebbActivation::ReLU);

} // namespace hebbseed
