#pragma once

#include <vector>

#include "hebbseed/tensor.hpp"

namespace hebbseed {

struct SgdConfig {
    double lr0 = 1e-3;
    double momentum = 0.9;
    bool nesterov = true;
    double l2 = 0.0;
    int constant_epochs = 10; // lr held at lr0, then halved every halve_every
    int halve_every = 2;

    double lr(int epoch) const;
};

struct CrossEntropyResult {
    double loss;
    Tensor dlogits; // (softmax - onehot) / batch
};

// Mean over the batch of -log softmax(logits)[label], stabilized by max
// subtraction. Labels must lie in [0, K).
CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Momentum SGD with optional Nesterov correction and coupled L2:
//   g' = g + l2*w;  v <- mu*v + g';  w <- w - lr * (nesterov ? mu*v + g' : v)
void sgd_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, const SgdConfig& config, int epoch);

} // namespace hebbseed
