#include "hebbseed/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "hebbseed/error.hpp"

namespace hebbseed {

std::size_t early_stop_select(const std::vector<RunRecord>& records) {
    if (records.empty()) throw ArgumentError("early_stop_select: no records");
    std::size_t best = 0;
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].val_acc > records[best].val_acc) best = i; // strict: ties stay earliest
    return best;
}

double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, int k) {
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    std::size_t hits = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = logits.data() + b * K;
        const double target = row[labels[b]];
        // rank of the label: count classes strictly better, or equal with a
        // lower index (deterministic tie-break)
        std::size_t better = 0;
        for (std::size_t c = 0; c < K; ++c) {
            if (row[c] > target ||
                (row[c] == target && c < static_cast<std::size_t>(labels[b])))
                ++better;
        }
        if (better < static_cast<std::size_t>(k)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

Tensor gather_images(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t start,
                     std::size_t count) {
    std::vector<std::size_t> shape = data.images.shape();
    shape[0] = count;
    Tensor out(shape);
    const std::size_t per = data.images.size() / data.size();
    for (std::size_t i = 0; i < count; ++i) {
        const double* src = data.images.data() + idx[start + i] * per;
        std::copy(src, src + per, out.data() + i * per);
    }
    return out;
}

std::vector<int> gather_labels(const Dataset& data, const std::vector<std::size_t>& idx,
                               std::size_t start, std::size_t count) {
    std::vector<int> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = data.labels[idx[start + i]];
    return out;
}

Tensor extract_features(Network& net, const Dataset& data, const std::vector<std::size_t>& idx,
                        const std::string& probe, std::size_t batch) {
    const std::size_t n = idx.size();
    const std::size_t dim = net.spec.feature_count(probe);
    Tensor out({n, dim});
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t count = std::min(batch, n - start);
        Tensor in = gather_images(data, idx, start, count);
        Tensor f = net.forward_to_probe(in, probe, /*training=*/false);
        std::copy(f.data(), f.data() + f.size(), out.data() + start * dim);
    }
    return out;
}

double evaluate_network(Network& net, const Dataset& data, const std::vector<std::size_t>& idx,
                        std::size_t batch, int top_k) {
    const std::size_t n = idx.size();
    double hits = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t count = std::min(batch, n - start);
        Tensor in = gather_images(data, idx, start, count);
        Tensor logits = net.forward(in, /*training=*/false);
        hits += topk_accuracy(logits, gather_labels(data, idx, start, count), top_k) *
                static_cast<double>(count);
    }
    return hits / static_cast<double>(n);
}

namespace {

Tensor rows_of(const Tensor& feats, const std::vector<std::size_t>& order, std::size_t start,
               std::size_t count) {
    const std::size_t dim = feats.dim(1);
    Tensor out({count, dim});
    for (std::size_t i = 0; i < count; ++i) {
        const double* src = feats.data() + order[start + i] * dim;
        std::copy(src, src + dim, out.data() + i * dim);
    }
    return out;
}

} // namespace

ClassifierTrainResult train_classifier(const Tensor& train_feats,
                                       const std::vector<int>& train_labels,
                                       const Tensor& val_feats, const std::vector<int>& val_labels,
                                       const Tensor& test_feats,
                                       const std::vector<int>& test_labels, std::size_t num_classes,
                                       const SgdConfig& sgd, int epochs, std::size_t batch,
                                       double dropout_rate, int top_k, Rng rng,
                                       const RunRecord& proto) {
    if (train_labels.empty()) throw ArgumentError("train_classifier: empty labeled set");
    const std::size_t n = train_feats.dim(0), dim = train_feats.dim(1);

    ClassifierTrainResult res;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    Rng init_rng = rng.derive("clf-init");
    res.clf.weight = uniform_tensor(init_rng, {num_classes, dim}, -bound, bound);
    res.clf.bias = Tensor({num_classes});
    LinearClassifier best = res.clf;

    std::vector<Tensor*> params{&res.clf.weight, &res.clf.bias};
    std::vector<Tensor> velocity{Tensor({num_classes, dim}), Tensor({num_classes})};
    Tensor no_mean;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng order_rng = rng.derive("clf-order").derive(static_cast<std::uint64_t>(epoch));
        order_rng.shuffle(order);
        Rng drop_rng = rng.derive("clf-dropout").derive(static_cast<std::uint64_t>(epoch));

        double loss_sum = 0.0, acc_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            Tensor x = rows_of(train_feats, order, start, count);
            std::vector<int> y(count);
            for (std::size_t i = 0; i < count; ++i) y[i] = train_labels[order[start + i]];

            Tensor mask;
            Tensor dropped = dropout_forward(x, dropout_rate, /*training=*/true, drop_rng, &mask);
            Tensor logits = fc_forward(dropped, res.clf.weight, res.clf.bias, no_mean);
            CrossEntropyResult ce = cross_entropy(logits, y);

            Tensor dw, db, dx;
            fc_backward(ce.dlogits, dropped, res.clf.weight, dw, db, dx);
            std::vector<Tensor> grads;
            grads.push_back(std::move(dw));
            grads.push_back(std::move(db));
            sgd_step(params, grads, velocity, sgd, epoch);

            loss_sum += ce.loss * static_cast<double>(count);
            acc_sum += topk_accuracy(logits, y, top_k) * static_cast<double>(count);
            seen += count;
        }

        Tensor val_logits = fc_forward(val_feats, res.clf.weight, res.clf.bias, no_mean);
        RunRecord rec = proto;
        rec.epoch = epoch;
        rec.train_acc = acc_sum / static_cast<double>(seen);
        rec.val_acc = topk_accuracy(val_logits, val_labels, top_k);
        rec.loss = loss_sum / static_cast<double>(seen);
        rec.lr = sgd.lr(epoch);
        res.records.push_back(rec);
        if (epoch == 0 || rec.val_acc > res.records[res.best_epoch].val_acc) {
            res.best_epoch = epoch;
            best = res.clf;
        }
    }

    res.clf = best;
    Tensor test_logits = fc_forward(test_feats, res.clf.weight, res.clf.bias, no_mean);
    res.test_acc = topk_accuracy(test_logits, test_labels, top_k);
    return res;
}

EndToEndTrainResult train_end_to_end(Network& net, const Dataset& data,
                                     const std::vector<std::size_t>& labeled_idx,
                                     const std::vector<std::size_t>& val_idx,
                                     const Dataset& test_data, const SgdConfig& sgd, int epochs,
                                     std::size_t batch, int top_k, Rng rng,
                                     const RunRecord& proto) {
    if (labeled_idx.empty()) throw ArgumentError("train_end_to_end: empty labeled set");
    EndToEndTrainResult res;

    std::vector<ParamRef> trainables = net.trainable_params();
    std::vector<Tensor*> params;
    std::vector<Tensor> velocity;
    for (ParamRef& p : trainables) {
        params.push_back(p.tensor);
        velocity.emplace_back(p.tensor->shape());
    }

    std::vector<Tensor> best_params;
    for (Tensor* p : params) best_params.push_back(*p);
    std::vector<std::pair<Tensor, Tensor>> best_bn; // running mean/var snapshots
    auto snapshot_bn = [&net](std::vector<std::pair<Tensor, Tensor>>& dst) {
        dst.clear();
        for (LayerState& st : net.states)
            if (st.bn.channels()) dst.emplace_back(st.bn.running_mean, st.bn.running_var);
    };
    auto restore_bn = [&net](const std::vector<std::pair<Tensor, Tensor>>& src) {
        std::size_t i = 0;
        for (LayerState& st : net.states)
            if (st.bn.channels()) {
                st.bn.running_mean = src[i].first;
                st.bn.running_var = src[i].second;
                ++i;
            }
    };
    snapshot_bn(best_bn);

    std::vector<std::size_t> order = labeled_idx;
    std::vector<std::size_t> test_all(test_data.size());
    std::iota(test_all.begin(), test_all.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng order_rng = rng.derive("e2e-order").derive(static_cast<std::uint64_t>(epoch));
        order_rng.shuffle(order);
        Rng drop_rng = rng.derive("e2e-dropout").derive(static_cast<std::uint64_t>(epoch));

        double loss_sum = 0.0, acc_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t count = std::min(batch, order.size() - start);
            if (count < 2) continue; // BN training mode needs at least two rows
            Tensor x = gather_images(data, order, start, count);
            std::vector<int> y = gather_labels(data, order, start, count);

            Tape tape;
            Tensor logits = net.forward(x, /*training=*/true, &drop_rng, &tape);
            CrossEntropyResult ce = cross_entropy(logits, y);
            std::vector<Tensor> grads;
            net.backward(tape, ce.dlogits, grads);
            sgd_step(params, grads, velocity, sgd, epoch);

            loss_sum += ce.loss * static_cast<double>(count);
            acc_sum += topk_accuracy(logits, y, top_k) * static_cast<double>(count);
            seen += count;
        }

        RunRecord rec = proto;
        rec.epoch = epoch;
        rec.train_acc = seen ? acc_sum / static_cast<double>(seen) : -1.0;
        rec.val_acc = evaluate_network(net, data, val_idx, 256, top_k);
        rec.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        rec.lr = sgd.lr(epoch);
        res.records.push_back(rec);
        if (epoch == 0 || rec.val_acc > res.records[res.best_epoch].val_acc) {
            res.best_epoch = epoch;
            for (std::size_t p = 0; p < params.size(); ++p) best_params[p] = *params[p];
            snapshot_bn(best_bn);
        }
    }

    for (std::size_t p = 0; p < params.size(); ++p) *params[p] = best_params[p];
    restore_bn(best_bn);
    res.test_acc = evaluate_network(net, test_data, test_all, 256, top_k);
    return res;
}

} // namespace hebbseed
