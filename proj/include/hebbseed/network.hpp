#pragma once

#include <array>
#include <string>
#include <vector>

#include "hebbseed/hebbian.hpp"
#include "hebbseed/layers.hpp"
#include "hebbseed/tensor.hpp"

namespace hebbseed {

enum class LayerKind { Conv, MaxPool, ReLU, Dropout, FC, BatchNorm, Flatten };

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int out_channels = 0, kh = 0, kw = 0, stride = 1, pad = 0; // conv / maxpool
    double rate = 0.0;                                         // dropout
    int out_features = 0;                                      // fc
    BnMode bn_mode = BnMode::Standard;
};

struct NetworkSpec {
    std::array<std::size_t, 3> input_shape{3, 32, 32};
    std::size_t num_classes = 10;
    std::vector<LayerSpec> layers;
    std::vector<std::pair<std::string, std::size_t>> probe_points; // ordered L1..L5

    std::size_t probe_index(const std::string& name) const; // accepts L1..L5 and "final"
    std::vector<std::size_t> shape_after(std::size_t layer_index) const; // per-sample shape
    std::size_t feature_count(const std::string& probe) const;
    void validate() const;

    std::string to_text() const;
    static NetworkSpec from_text(const std::string& text);
};

// The five-block architecture: conv(5x5)+BN+ReLU+pool / conv+BN+ReLU /
// conv+BN+ReLU+pool / conv+BN*+ReLU / FC+BN*+ReLU, then dropout+FC
// classifier. BN* switches to VarianceAveraged when hebbian_bn is set.
// width scales the filter counts (96,128,192,256 conv + 300 FC at 1.0).
NetworkSpec standard_network_spec(std::array<std::size_t, 3> input_shape, std::size_t num_classes,
                                  double width, bool pooling, bool hebbian_bn);

// Per-layer learnable state. Conv and FC layers hold their weights inside a
// HebbianLayerState so the unsupervised rules and SGD act on the same
// storage; bias stays zero for hebbian-trained layers.
struct LayerState {
    HebbianLayerState hebb; // conv / fc weights + running input mean
    Tensor bias;
    BatchNormState bn;
};

struct ParamRef {
    std::string name;
    Tensor* tensor;
    bool trainable; // participates in SGD
};

struct TapeNode {
    std::size_t layer = 0;
    Tensor input; // saved for relu; shape reference elsewhere
    ConvCache conv;
    Tensor fc_centered;
    std::vector<std::size_t> pool_argmax;
    std::vector<std::size_t> pool_in_shape;
    BnCache bn;
    Tensor dropout_mask;
};

// Linear chain of layer applications; backward consumes nodes exactly once
// in reverse order.
struct Tape {
    std::vector<TapeNode> nodes;
};

class Network {
public:
    NetworkSpec spec;
    std::vector<LayerState> states;

    static Network build(const NetworkSpec& spec, Rng& rng, double hebb_lr = 1e-3,
                         double mean_momentum = 0.1, double bn_momentum = 0.1,
                         double bn_eps = 1e-5);

    // Runs layers [0, upto]; pass spec.layers.size()-1 (or npos) for a full
    // forward. Training mode uses batch stats in BN (mutating running
    // estimates) and applies dropout from rng.
    Tensor forward(const Tensor& input, bool training, Rng* dropout_rng = nullptr,
                   Tape* tape = nullptr, std::size_t upto = static_cast<std::size_t>(-1));

    // Output of the named probe point, flattened to B x features.
    Tensor forward_to_probe(const Tensor& input, const std::string& probe, bool training,
                            Rng* dropout_rng = nullptr);

    // Reverse pass from dlogits; fills grads aligned with trainable_params().
    void backward(const Tape& tape, const Tensor& dlogits, std::vector<Tensor>& grads);

    std::vector<ParamRef> params();           // everything, for checkpointing
    std::vector<ParamRef> trainable_params(); // SGD-visible subset

    // Indices of conv/FC layers the unsupervised phase trains (classifier FC excluded).
    std::vector<std::size_t> hebbian_layers() const;

    // Training-mode forward that stops after recording the inputs feeding
    // the first `count` hebbian layers (all of them when count is npos).
    std::vector<Tensor> collect_hebbian_inputs(const Tensor& input, bool training,
                                               std::size_t count = static_cast<std::size_t>(-1));

    // Switch every BN layer to Standard mode (used when fine-tuning starts).
    void set_all_bn_standard();
};

} // namespace hebbseed
