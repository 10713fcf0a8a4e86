#pragma once

#include <string>
#include <vector>

#include "hebbseed/data.hpp"
#include "hebbseed/network.hpp"
#include "hebbseed/sgd.hpp"

namespace hebbseed {

// One per-epoch metrics row, persisted as CSV for aggregation.
struct RunRecord {
    std::string run_id;
    std::uint64_t seed = 0;
    double regime = 100.0;
    std::string method;
    std::string probe;
    int epoch = 0;
    double train_acc = -1.0; // negative means not applicable (emitted empty)
    double val_acc = -1.0;
    double loss = 0.0;
    double lr = 0.0;
};

// Index of the epoch with the highest validation accuracy, earliest on ties.
std::size_t early_stop_select(const std::vector<RunRecord>& records);

// Fraction of rows whose label is among the k largest logits (ties resolved
// by lower class index first).
double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k);

struct LinearClassifier {
    Tensor weight; // K x D
    Tensor bias;   // K
};

struct ClassifierTrainResult {
    LinearClassifier clf; // best-epoch weights
    std::vector<RunRecord> records;
    int best_epoch = 0;
    double test_acc = 0.0;
};

// Trains dropout + FC on frozen, cached features with SGD and early
// stopping; the feature extractor is untouched by construction.
ClassifierTrainResult train_classifier(const Tensor& train_feats,
                                       const std::vector<int>& train_labels,
                                       const Tensor& val_feats, const std::vector<int>& val_labels,
                                       const Tensor& test_feats,
                                       const std::vector<int>& test_labels, std::size_t num_classes,
                                       const SgdConfig& sgd, int epochs, std::size_t batch,
                                       double dropout_rate, int top_k, Rng rng,
                                       const RunRecord& proto);

struct EndToEndTrainResult {
    std::vector<RunRecord> records;
    int best_epoch = 0;
    double test_acc = 0.0;
};

// Supervised training of every layer (scratch BP baseline, or fine-tuning
// when net starts from a Hebbian checkpoint). The network is left holding
// the best-epoch weights.
EndToEndTrainResult train_end_to_end(Network& net, const Dataset& data,
                                     const std::vector<std::size_t>& labeled_idx,
                                     const std::vector<std::size_t>& val_idx,
                                     const Dataset& test_data, const SgdConfig& sgd, int epochs,
                                     std::size_t batch, int top_k, Rng rng,
                                     const RunRecord& proto);

// Gathers images[idx] into a batch tensor.
Tensor gather_images(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t start,
                     std::size_t count);
std::vector<int> gather_labels(const Dataset& data, const std::vector<std::size_t>& idx,
                               std::size_t start, std::size_t count);

// Eval-mode probe features for the given indices, in batches.
Tensor extract_features(Network& net, const Dataset& data, const std::vector<std::size_t>& idx,
                        const std::string& probe, std::size_t batch);

// Eval-mode top-k accuracy of the full network over the given indices.
double evaluate_network(Network& net, const Dataset& data, const std::vector<std::size_t>& idx,
                        std::size_t batch, int top_k);

} // namespace hebbseed
