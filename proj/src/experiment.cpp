#include "hebbseed/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "hebbseed/error.hpp"

namespace hebbseed {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += fmt(v[i]);
    }
    return s;
}

std::string fmt_list(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += v[i];
    }
    return s;
}

std::string fmt_list(const std::vector<std::uint64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ArgumentError("config: bad boolean for " + key + ": '" + v + "'");
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

ExperimentConfig ExperimentConfig::defaults_for(const std::string& dataset) {
    ExperimentConfig cfg;
    cfg.dataset = dataset;
    if (dataset == "cifar100")
        cfg.l2_end_to_end = 1e-2;
    else if (dataset == "tinyimagenet")
        cfg.l2_end_to_end = 5e-3;
    else
        cfg.l2_end_to_end = 5e-2;
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::vector<std::string> order;
    std::string line;
    while (std::getline(is, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            bool blank = true;
            for (char c : line)
                if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
            if (blank) continue;
            throw FormatError("config: expected 'key = value', got '" + line + "'");
        }
        auto trim = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t\r");
            std::size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (kv.count(key)) throw FormatError("config: duplicate key '" + key + "'");
        kv[key] = value;
        order.push_back(key);
    }

    ExperimentConfig cfg = defaults_for(kv.count("dataset") ? kv["dataset"] : "cifar10");
    for (const std::string& key : order) {
        const std::string& v = kv[key];
        if (key == "dataset")
            cfg.dataset = v;
        else if (key == "data_dir")
            cfg.data_dir = v;
        else if (key == "out_dir")
            cfg.out_dir = v;
        else if (key == "val_fraction")
            cfg.val_fraction = std::stod(v);
        else if (key == "regimes") {
            cfg.regimes.clear();
            for (const std::string& s : split_list(v)) cfg.regimes.push_back(std::stod(s));
        } else if (key == "methods")
            cfg.methods = split_list(v);
        else if (key == "probes")
            cfg.probes = split_list(v);
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (const std::string& s : split_list(v)) cfg.seeds.push_back(std::stoull(s));
        } else if (key == "epochs")
            cfg.epochs = std::stoi(v);
        else if (key == "hebb_epochs")
            cfg.hebb_epochs = std::stoi(v);
        else if (key == "ft_epochs")
            cfg.ft_epochs = std::stoi(v);
        else if (key == "batch")
            cfg.batch = std::stoul(v);
        else if (key == "lr")
            cfg.lr = std::stod(v);
        else if (key == "momentum")
            cfg.momentum = std::stod(v);
        else if (key == "nesterov")
            cfg.nesterov = parse_bool(v, key);
        else if (key == "l2_end_to_end")
            cfg.l2_end_to_end = std::stod(v);
        else if (key == "l2_classifier")
            cfg.l2_classifier = std::stod(v);
        else if (key == "dropout")
            cfg.dropout = std::stod(v);
        else if (key == "hebb_lr")
            cfg.hebb_lr = std::stod(v);
        else if (key == "hebb_rule")
            cfg.hebb_rule = v;
        else if (key == "mean_momentum")
            cfg.mean_momentum = std::stod(v);
        else if (key == "bn_momentum")
            cfg.bn_momentum = std::stod(v);
        else if (key == "bn_epsilon")
            cfg.bn_epsilon = std::stod(v);
        else if (key == "width")
            cfg.width = std::stod(v);
        else if (key == "pooling")
            cfg.pooling = parse_bool(v, key);
        else if (key == "layerwise")
            cfg.layerwise = parse_bool(v, key);
        else if (key == "train_images")
            cfg.train_images = std::stoul(v);
        else if (key == "val_images")
            cfg.val_images = std::stoul(v);
        else if (key == "test_images")
            cfg.test_images = std::stoul(v);
        else if (key == "top_k")
            cfg.top_k = std::stoi(v);
        else
            throw ArgumentError("config: unknown key '" + key + "'");
        cfg.overridden.push_back(key);
    }
    if (cfg.hebb_rule != "nonlinear-hpca" && cfg.hebb_rule != "linear-hpca")
        throw ArgumentError("config: hebb_rule must be nonlinear-hpca or linear-hpca");
    return cfg;
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream os;
    os << "dataset = " << dataset << '\n';
    os << "data_dir = " << data_dir << '\n';
    os << "out_dir = " << out_dir << '\n';
    os << "val_fraction = " << fmt(val_fraction) << '\n';
    os << "regimes = " << fmt_list(regimes) << '\n';
    os << "methods = " << fmt_list(methods) << '\n';
    os << "probes = " << fmt_list(probes) << '\n';
    os << "seeds = " << fmt_list(seeds) << '\n';
    os << "epochs = " << epochs << '\n';
    os << "hebb_epochs = " << hebb_epochs << '\n';
    os << "ft_epochs = " << ft_epochs << '\n';
    os << "batch = " << batch << '\n';
    os << "lr = " << fmt(lr) << '\n';
    os << "momentum = " << fmt(momentum) << '\n';
    os << "nesterov = " << (nesterov ? "true" : "false") << '\n';
    os << "l2_end_to_end = " << fmt(l2_end_to_end) << '\n';
    os << "l2_classifier = " << fmt(l2_classifier) << '\n';
    os << "dropout = " << fmt(dropout) << '\n';
    os << "hebb_lr = " << fmt(hebb_lr) << '\n';
    os << "hebb_rule = " << hebb_rule << '\n';
    os << "mean_momentum = " << fmt(mean_momentum) << '\n';
    os << "bn_momentum = " << fmt(bn_momentum) << '\n';
    os << "bn_epsilon = " << fmt(bn_epsilon) << '\n';
    os << "width = " << fmt(width) << '\n';
    os << "pooling = " << (pooling ? "true" : "false") << '\n';
    os << "layerwise = " << (layerwise ? "true" : "false") << '\n';
    os << "train_images = " << train_images << '\n';
    os << "val_images = " << val_images << '\n';
    os << "test_images = " << test_images << '\n';
    os << "top_k = " << top_k << '\n';
    return os.str();
}

int ExperimentConfig::resolve_top_k(std::size_t num_classes) const {
    if (top_k > 0) return top_k;
    return num_classes >= 100 ? 5 : 1;
}

double ExperimentConfig::effective_val_fraction() const {
    if (train_images > 0 && val_images > 0)
        return static_cast<double>(val_images) / static_cast<double>(train_images + val_images);
    return val_fraction;
}

RuleKind ExperimentConfig::rule_kind() const {
    return hebb_rule == "linear-hpca" ? RuleKind::LinearHPCA : RuleKind::NonlinearHPCA;
}

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a(to_text()); }

double t_critical_975(std::size_t df) {
    static const double table[30] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                     2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                     2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                     2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (df == 0) throw ArgumentError("t_critical_975: zero degrees of freedom");
    if (df <= 30) return table[df - 1];
    return 1.96;
}

std::vector<ResultRow> aggregate(const std::vector<CellResult>& cells, int top_k) {
    std::map<std::tuple<double, std::string, std::string>, std::vector<double>> groups;
    std::vector<std::tuple<double, std::string, std::string>> order;
    for (const CellResult& c : cells) {
        auto key = std::make_tuple(c.regime, c.method, c.probe);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(c.test_acc);
    }
    std::vector<ResultRow> rows;
    for (const auto& key : order) {
        const std::vector<double>& v = groups[key];
        ResultRow row;
        row.regime = std::get<0>(key);
        row.method = std::get<1>(key);
        row.probe = std::get<2>(key);
        row.n_seeds = v.size();
        row.top_k = top_k;
        double sum = 0.0;
        for (double x : v) sum += x;
        row.mean_acc = sum / static_cast<double>(v.size());
        if (v.size() >= 2) {
            double ss = 0.0;
            for (double x : v) ss += (x - row.mean_acc) * (x - row.mean_acc);
            double s = std::sqrt(ss / static_cast<double>(v.size() - 1));
            row.ci_halfwidth =
                t_critical_975(v.size() - 1) * s / std::sqrt(static_cast<double>(v.size()));
        } else {
            row.ci_halfwidth = -1.0;
            std::cerr << "warning: single seed for (" << row.regime << "," << row.method << ","
                      << row.probe << "); CI omitted\n";
        }
        rows.push_back(row);
    }
    return rows;
}

void write_records_csv(const std::string& path, const std::vector<RunRecord>& records,
                       std::uint64_t config_hash) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path);
    os << "# config " << hex64(config_hash) << '\n';
    os << "run_id,seed,regime,method,probe,epoch,train_acc,val_acc,loss,lr\n";
    for (const RunRecord& r : records) {
        os << r.run_id << ',' << r.seed << ',' << fmt(r.regime) << ',' << r.method << ',' << r.probe
           << ',' << r.epoch << ',' << (r.train_acc < 0 ? "" : fmt(r.train_acc)) << ','
           << (r.val_acc < 0 ? "" : fmt(r.val_acc)) << ',' << fmt(r.loss) << ',' << fmt(r.lr)
           << '\n';
    }
}

void write_results_csv(const std::string& path, const std::vector<CellResult>& cells,
                       std::uint64_t config_hash) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path);
    os << "# config " << hex64(config_hash) << '\n';
    os << "seed,regime,method,probe,best_epoch,test_acc\n";
    for (const CellResult& c : cells)
        os << c.seed << ',' << fmt(c.regime) << ',' << c.method << ',' << c.probe << ','
           << c.best_epoch << ',' << fmt(c.test_acc) << '\n';
}

void write_table_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path);
    os << "regime,method,probe,mean_acc,ci95_halfwidth,n_seeds,top_k\n";
    for (const ResultRow& r : rows)
        os << fmt(r.regime) << ',' << r.method << ',' << r.probe << ',' << fmt(r.mean_acc) << ','
           << (r.ci_halfwidth < 0 ? "" : fmt(r.ci_halfwidth)) << ',' << r.n_seeds << ','
           << r.top_k << '\n';
}

void write_table_txt(const std::string& path, const std::vector<ResultRow>& rows,
                     const std::string& dataset, std::size_t n_seeds) {
    // probes become columns; (regime, method) become rows
    std::vector<std::string> probes;
    std::vector<std::pair<double, std::string>> row_keys;
    for (const ResultRow& r : rows) {
        if (std::find(probes.begin(), probes.end(), r.probe) == probes.end())
            probes.push_back(r.probe);
        auto key = std::make_pair(r.regime, r.method);
        if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end())
            row_keys.push_back(key);
    }
    std::map<std::tuple<double, std::string, std::string>, const ResultRow*> lookup;
    for (const ResultRow& r : rows) lookup[{r.regime, r.method, r.probe}] = &r;

    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path);
    const int k = rows.empty() ? 1 : rows.front().top_k;
    os << dataset << ": top-" << k << " test accuracy (%), mean with 95% CI half-width over "
       << n_seeds << " seed(s)\n\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-8s %-9s", "regime", "method");
    os << buf;
    for (const std::string& p : probes) {
        std::snprintf(buf, sizeof(buf), " %-16s", p.c_str());
        os << buf;
    }
    os << '\n';
    for (const auto& [regime, method] : row_keys) {
        std::snprintf(buf, sizeof(buf), "%-8s %-9s", (fmt(regime) + "%").c_str(), method.c_str());
        os << buf;
        for (const std::string& p : probes) {
            auto it = lookup.find({regime, method, p});
            if (it == lookup.end()) {
                std::snprintf(buf, sizeof(buf), " %-16s", "-");
            } else if (it->second->ci_halfwidth < 0) {
                std::snprintf(buf, sizeof(buf), " %-16.2f", 100.0 * it->second->mean_acc);
            } else {
                char cell[48];
                std::snprintf(cell, sizeof(cell), "%.2f +-%.2f", 100.0 * it->second->mean_acc,
                              100.0 * it->second->ci_halfwidth);
                std::snprintf(buf, sizeof(buf), " %-16s", cell);
            }
            os << buf;
        }
        os << '\n';
    }
}

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg, Dataset train, Dataset test)
    : cfg_(std::move(cfg)), train_ds_(std::move(train)), test_ds_(std::move(test)) {
    train_ds_.validate();
    test_ds_.validate();
    top_k_ = cfg_.resolve_top_k(train_ds_.num_classes);
}

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.dataset == "cifar10") {
        train_ds_ = load_cifar10(cfg_.data_dir);
        test_ds_ = load_cifar10_test(cfg_.data_dir);
    } else if (cfg_.dataset == "cifar100") {
        train_ds_ = load_cifar100(cfg_.data_dir);
        test_ds_ = load_cifar100_test(cfg_.data_dir);
    } else if (cfg_.dataset == "synth10") {
        std::size_t train_n = cfg_.train_images ? cfg_.train_images + cfg_.val_images : 6000;
        std::size_t test_n = cfg_.test_images ? cfg_.test_images : 1000;
        train_ds_ = make_synthetic_images(train_n, 10, 77);
        test_ds_ = make_synthetic_images(test_n, 10, 78);
        test_ds_.name = "synth10-test";
    } else {
        throw ArgumentError("unknown dataset '" + cfg_.dataset + "'");
    }
    if (cfg_.dataset != "synth10" && cfg_.train_images > 0)
        train_ds_ = train_ds_.head(cfg_.train_images + cfg_.val_images);
    if (cfg_.dataset != "synth10" && cfg_.test_images > 0)
        test_ds_ = test_ds_.head(cfg_.test_images);
    train_ds_.validate();
    test_ds_.validate();
    top_k_ = cfg_.resolve_top_k(train_ds_.num_classes);
}

NetworkSpec ExperimentRunner::backbone_spec(bool hebbian_bn) const {
    return standard_network_spec({3, train_ds_.images.dim(2), train_ds_.images.dim(3)},
                                 train_ds_.num_classes, cfg_.width, cfg_.pooling, hebbian_bn);
}

RegimeSplit ExperimentRunner::split_for(double regime, std::uint64_t seed) const {
    return make_split(train_ds_, cfg_.effective_val_fraction(), regime, seed);
}

std::string ExperimentRunner::run_id(std::uint64_t seed, double regime, const std::string& method,
                                     const std::string& probe) const {
    return hex64(fnv1a(cfg_.to_text() + "|" + std::to_string(seed) + "|" + fmt(regime) + "|" +
                       method + "|" + probe));
}

namespace {

// Representation error of one hebbian layer on a fixed evaluation batch.
double layer_repr_error(Network& net, std::size_t layer_idx, const Tensor& input, RuleKind rule) {
    const LayerSpec& l = net.spec.layers[layer_idx];
    LayerState& st = net.states[layer_idx];
    Tensor patches;
    if (l.kind == LayerKind::Conv) {
        Tensor cols = im2col(input, l.kh, l.kw, l.stride, l.stride, l.pad, l.pad);
        std::vector<std::size_t> flat{cols.dim(0) * cols.dim(1), cols.dim(2)};
        patches = std::move(cols).reshaped(flat);
    } else {
        patches = input;
    }
    Tensor centered = center_inputs(st.hebb, patches, /*training=*/false);
    return representation_error(st.hebb, centered, rule);
}

void hebbian_update_layer(Network& net, std::size_t layer_idx, const Tensor& input,
                          RuleKind rule) {
    const LayerSpec& l = net.spec.layers[layer_idx];
    LayerState& st = net.states[layer_idx];
    if (l.kind == LayerKind::Conv) {
        Tensor patches = im2col(input, l.kh, l.kw, l.stride, l.stride, l.pad, l.pad);
        conv_hebbian_step(st.hebb, patches, rule);
    } else {
        conv_hebbian_step(st.hebb, input.reshaped({input.dim(0), 1, input.dim(1)}), rule);
    }
}

} // namespace

Network ExperimentRunner::pretrain(std::uint64_t seed, std::vector<RunRecord>* records) {
    NetworkSpec spec = backbone_spec(/*hebbian_bn=*/true);
    Rng init = Rng(seed).derive("net-init");
    Network net = Network::build(spec, init, cfg_.hebb_lr, cfg_.mean_momentum, cfg_.bn_momentum,
                                 cfg_.bn_epsilon);
    const RuleKind rule = cfg_.rule_kind();

    // the unsupervised phase sees the whole training pool; labels never read
    RegimeSplit pool_split = split_for(100.0, seed);
    std::vector<std::size_t> pool = pool_split.train_pool();

    std::vector<std::size_t> hebb = net.hebbian_layers();
    const std::size_t eval_count = std::min<std::size_t>(cfg_.batch, pool.size());
    Tensor eval_batch = gather_images(train_ds_, pool, 0, eval_count);

    auto record_errors = [&](int epoch, std::size_t active_layers) {
        if (!records) return;
        std::vector<Tensor> inputs =
            net.collect_hebbian_inputs(eval_batch, /*training=*/false, active_layers);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            RunRecord rec;
            rec.run_id = run_id(seed, 100.0, "hpca", "pretrain");
            rec.seed = seed;
            rec.regime = 100.0;
            rec.method = "hpca";
            rec.probe = "pretrain-L" + std::to_string(k + 1);
            rec.epoch = epoch;
            rec.loss = layer_repr_error(net, hebb[k], inputs[k], rule);
            rec.lr = cfg_.hebb_lr;
            records->push_back(rec);
        }
    };

    auto run_epoch = [&](int epoch, std::size_t active_layers, std::size_t update_layer) {
        std::vector<std::size_t> order = pool;
        Rng order_rng = Rng(seed).derive("pretrain-order").derive(static_cast<std::uint64_t>(epoch) +
                                                                  1315423911ULL * update_layer);
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg_.batch) {
            const std::size_t count = std::min(cfg_.batch, order.size() - start);
            if (count < 2) continue;
            Tensor x = gather_images(train_ds_, order, start, count);
            std::vector<Tensor> inputs = net.collect_hebbian_inputs(x, /*training=*/true,
                                                                    active_layers);
            if (cfg_.layerwise) {
                hebbian_update_layer(net, hebb[update_layer], inputs.back(), rule);
            } else {
                for (std::size_t k = 0; k < inputs.size(); ++k)
                    hebbian_update_layer(net, hebb[k], inputs[k], rule);
            }
        }
    };

    if (cfg_.layerwise) {
        for (std::size_t k = 0; k < hebb.size(); ++k) {
            record_errors(-1 - static_cast<int>(k), k + 1);
            for (int epoch = 0; epoch < cfg_.hebb_epochs; ++epoch) run_epoch(epoch, k + 1, k);
        }
        record_errors(cfg_.hebb_epochs, hebb.size());
    } else {
        record_errors(-1, hebb.size());
        for (int epoch = 0; epoch < cfg_.hebb_epochs; ++epoch) {
            run_epoch(epoch, hebb.size(), 0);
            record_errors(epoch, hebb.size());
        }
    }
    return net;
}

Network ExperimentRunner::pretrain_cached(std::uint64_t seed, const std::string& dir,
                                          std::vector<RunRecord>* records) {
    const std::string path =
        (fs::path(dir) / ("ckpt_seed" + std::to_string(seed) + ".bin")).string();
    if (fs::exists(path)) return load_checkpoint(path);
    std::vector<RunRecord> own;
    Network net = pretrain(seed, records ? records : &own);
    save_checkpoint(net, path);
    if (!records)
        write_records_csv(path + ".records.csv", own, cfg_.config_hash());
    return net;
}

Network ExperimentRunner::train_bp_backbone(std::uint64_t seed, double regime,
                                            const RegimeSplit& split,
                                            std::vector<RunRecord>& records,
                                            std::vector<CellResult>& results, bool want_final) {
    NetworkSpec spec = backbone_spec(/*hebbian_bn=*/false);
    Rng init = Rng(seed).derive("bp-init");
    Network net = Network::build(spec, init, cfg_.hebb_lr, cfg_.mean_momentum, cfg_.bn_momentum,
                                 cfg_.bn_epsilon);
    SgdConfig sgd;
    sgd.lr0 = cfg_.lr;
    sgd.momentum = cfg_.momentum;
    sgd.nesterov = cfg_.nesterov;
    sgd.l2 = cfg_.l2_end_to_end;

    RunRecord proto;
    proto.run_id = run_id(seed, regime, "bp", "final");
    proto.seed = seed;
    proto.regime = regime;
    proto.method = "bp";
    proto.probe = "final";

    Rng train_rng = Rng(seed).derive("bp-train-r" + fmt(regime));
    EndToEndTrainResult r = train_end_to_end(net, train_ds_, split.labeled_idx, split.val_idx,
                                             test_ds_, sgd, cfg_.epochs, cfg_.batch, top_k_,
                                             train_rng, proto);
    records.insert(records.end(), r.records.begin(), r.records.end());
    if (want_final) results.push_back({seed, regime, "bp", "final", r.best_epoch, r.test_acc});
    return net;
}

Network ExperimentRunner::fine_tune_backbone(const Network& pretrained, std::uint64_t seed,
                                             double regime, const RegimeSplit& split,
                                             std::vector<RunRecord>& records,
                                             std::vector<CellResult>& results, bool want_final) {
    Network net = pretrained;
    if (cfg_.ft_epochs > 0) {
        // the modified BN was only ever motivated for the Hebbian phase:
        // switch to standard BN and re-estimate running stats in one pass
        net.set_all_bn_standard();
        std::size_t last_bn = 0;
        for (std::size_t i = 0; i < net.spec.layers.size(); ++i)
            if (net.spec.layers[i].kind == LayerKind::BatchNorm) last_bn = i;
        for (std::size_t start = 0; start < split.labeled_idx.size(); start += cfg_.batch) {
            const std::size_t count = std::min(cfg_.batch, split.labeled_idx.size() - start);
            if (count < 2) continue;
            Tensor x = gather_images(train_ds_, split.labeled_idx, start, count);
            net.forward(x, /*training=*/true, nullptr, nullptr, last_bn);
        }

        SgdConfig sgd;
        sgd.lr0 = cfg_.lr;
        sgd.momentum = cfg_.momentum;
        sgd.nesterov = cfg_.nesterov;
        sgd.l2 = cfg_.l2_end_to_end;

        RunRecord proto;
        proto.run_id = run_id(seed, regime, "hpca-ft", "final");
        proto.seed = seed;
        proto.regime = regime;
        proto.method = "hpca-ft";
        proto.probe = "final";

        Rng train_rng = Rng(seed).derive("ft-train-r" + fmt(regime));
        EndToEndTrainResult r = train_end_to_end(net, train_ds_, split.labeled_idx, split.val_idx,
                                                 test_ds_, sgd, cfg_.ft_epochs, cfg_.batch, top_k_,
                                                 train_rng, proto);
        records.insert(records.end(), r.records.begin(), r.records.end());
        if (want_final)
            results.push_back({seed, regime, "hpca-ft", "final", r.best_epoch, r.test_acc});
    } else if (want_final) {
        std::vector<std::size_t> all(test_ds_.size());
        std::iota(all.begin(), all.end(), 0);
        results.push_back(
            {seed, regime, "hpca-ft", "final", 0, evaluate_network(net, test_ds_, all, 256, top_k_)});
    }
    return net;
}

void ExperimentRunner::probe_cell(Network& backbone, std::uint64_t seed, double regime,
                                  const std::string& method, const std::string& probe,
                                  const RegimeSplit& split, std::vector<RunRecord>& records,
                                  std::vector<CellResult>& results) {
    // the final classifier sits on L5 features; probing "final" for a frozen
    // backbone trains exactly that classifier
    const std::string cut = (probe == "final") ? "L5" : probe;

    Tensor train_feats = extract_features(backbone, train_ds_, split.labeled_idx, cut, cfg_.batch);
    std::vector<int> train_labels;
    for (std::size_t i : split.labeled_idx) train_labels.push_back(train_ds_.labels[i]);
    Tensor val_feats = extract_features(backbone, train_ds_, split.val_idx, cut, cfg_.batch);
    std::vector<int> val_labels;
    for (std::size_t i : split.val_idx) val_labels.push_back(train_ds_.labels[i]);
    std::vector<std::size_t> test_idx(test_ds_.size());
    std::iota(test_idx.begin(), test_idx.end(), 0);
    Tensor test_feats = extract_features(backbone, test_ds_, test_idx, cut, cfg_.batch);

    SgdConfig sgd;
    sgd.lr0 = cfg_.lr;
    sgd.momentum = cfg_.momentum;
    sgd.nesterov = cfg_.nesterov;
    sgd.l2 = cfg_.l2_classifier;

    RunRecord proto;
    proto.run_id = run_id(seed, regime, method, probe);
    proto.seed = seed;
    proto.regime = regime;
    proto.method = method;
    proto.probe = probe;

    Rng rng = Rng(seed).derive("probe-r" + fmt(regime) + "-" + probe);
    ClassifierTrainResult r = train_classifier(train_feats, train_labels, val_feats, val_labels,
                                               test_feats, test_ds_.labels, train_ds_.num_classes,
                                               sgd, cfg_.epochs, cfg_.batch, cfg_.dropout, top_k_,
                                               rng, proto);
    records.insert(records.end(), r.records.begin(), r.records.end());
    results.push_back({seed, regime, method, probe, r.best_epoch, r.test_acc});
}

void ExperimentRunner::run_cell(std::uint64_t seed, double regime, const std::string& method,
                                const std::vector<std::string>& probes, Network* pretrained,
                                std::vector<RunRecord>& records,
                                std::vector<CellResult>& results) {
    RegimeSplit split = split_for(regime, seed);
    const bool want_final = std::find(probes.begin(), probes.end(), "final") != probes.end();

    Network backbone;
    if (method == "bp") {
        backbone = train_bp_backbone(seed, regime, split, records, results, want_final);
    } else if (method == "hpca") {
        if (!pretrained) throw ArgumentError("hpca cell needs a pretrained checkpoint");
        backbone = *pretrained;
    } else if (method == "hpca-ft") {
        if (!pretrained) throw ArgumentError("hpca-ft cell needs a pretrained checkpoint");
        backbone = fine_tune_backbone(*pretrained, seed, regime, split, records, results,
                                      want_final);
    } else {
        throw ArgumentError("unknown method '" + method + "'");
    }

    for (const std::string& probe : probes) {
        if (probe == "final" && method != "hpca") continue; // already recorded
        probe_cell(backbone, seed, regime, method, probe, split, records, results);
    }
}

std::string ExperimentRunner::sweep() {
    const std::string sweep_id = hex64(cfg_.config_hash());
    const fs::path dir = fs::path(cfg_.out_dir) / sweep_id;
    fs::create_directories(dir);

    std::vector<RunRecord> records;
    std::vector<CellResult> results;

    const bool needs_pretrain =
        std::find(cfg_.methods.begin(), cfg_.methods.end(), "hpca") != cfg_.methods.end() ||
        std::find(cfg_.methods.begin(), cfg_.methods.end(), "hpca-ft") != cfg_.methods.end();

    // manifest first: config, dataset identity, split sizes, nesting checks
    std::ostringstream manifest;
    manifest << "hebbseed-manifest 1\n";
    manifest << "sweep_id " << sweep_id << '\n';
    manifest << "dataset " << train_ds_.name << " fingerprint "
             << hex64(dataset_fingerprint(train_ds_)) << " train " << train_ds_.size() << " test "
             << test_ds_.size() << " classes " << train_ds_.num_classes << '\n';
    manifest << "top_k " << top_k_ << '\n';
    manifest << "config_begin\n" << cfg_.to_text() << "config_end\n";
    manifest << "overridden "
             << (cfg_.overridden.empty() ? std::string("none") : fmt_list(cfg_.overridden))
             << '\n';
    for (std::uint64_t seed : cfg_.seeds) {
        std::vector<double> sorted_regimes = cfg_.regimes;
        std::sort(sorted_regimes.begin(), sorted_regimes.end());
        std::vector<std::size_t> prev;
        for (double r : sorted_regimes) {
            RegimeSplit s = split_for(r, seed);
            manifest << "split seed=" << seed << " r=" << fmt(r)
                     << " labeled=" << s.labeled_idx.size()
                     << " unlabeled=" << s.unlabeled_idx.size() << " val=" << s.val_idx.size();
            if (!prev.empty()) {
                bool nested = std::includes(s.labeled_idx.begin(), s.labeled_idx.end(),
                                            prev.begin(), prev.end());
                manifest << " nested=" << (nested ? "ok" : "VIOLATION");
                if (!nested)
                    throw ArgumentError("regime nesting violated for seed " +
                                        std::to_string(seed));
            }
            manifest << '\n';
            prev = s.labeled_idx;
        }
    }
    {
        std::ofstream mf(dir / "manifest");
        mf << manifest.str();
    }

    for (std::uint64_t seed : cfg_.seeds) {
        std::optional<Network> pretrained;
        // pretraining records go to a per-seed sidecar so that a re-run with
        // cached checkpoints still reproduces records.csv byte for byte
        if (needs_pretrain) pretrained = pretrain_cached(seed, dir.string(), nullptr);
        for (const std::string& method : cfg_.methods) {
            for (double regime : cfg_.regimes) {
                run_cell(seed, regime, method, cfg_.probes,
                         pretrained ? &*pretrained : nullptr, records, results);
            }
        }
    }

    write_records_csv((dir / "records.csv").string(), records, cfg_.config_hash());
    write_results_csv((dir / "results.csv").string(), results, cfg_.config_hash());
    std::vector<ResultRow> rows = aggregate(results, top_k_);
    write_table_csv((dir / "table.csv").string(), rows);
    write_table_txt((dir / "table.txt").string(), rows, train_ds_.name, cfg_.seeds.size());
    return dir.string();
}

void write_default_config(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write config: " + path);
    os << cfg.to_text();
}

} // namespace hebbseed
