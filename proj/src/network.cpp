#include "hebbseed/network.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hebbseed/error.hpp"

namespace hebbseed {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::size_t scaled(int base, double width) {
    long v = std::lround(base * width);
    return static_cast<std::size_t>(v < 1 ? 1 : v);
}

} // namespace

std::size_t NetworkSpec::probe_index(const std::string& name) const {
    if (name == "final" || name == "Final") return layers.size() - 1;
    for (const auto& [pname, idx] : probe_points)
        if (pname == name) return idx;
    throw ArgumentError("unknown probe point '" + name + "'");
}

std::vector<std::size_t> NetworkSpec::shape_after(std::size_t layer_index) const {
    std::vector<std::size_t> s{input_shape[0], input_shape[1], input_shape[2]};
    for (std::size_t i = 0; i <= layer_index && i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
        case LayerKind::Conv:
            s = {static_cast<std::size_t>(l.out_channels), conv_out_dim(s[1], l.kh, l.stride, l.pad),
                 conv_out_dim(s[2], l.kw, l.stride, l.pad)};
            break;
        case LayerKind::MaxPool:
            s = {s[0], (s[1] - l.kh) / l.stride + 1, (s[2] - l.kw) / l.stride + 1};
            break;
        case LayerKind::Flatten: {
            std::size_t n = 1;
            for (std::size_t d : s) n *= d;
            s = {n};
            break;
        }
        case LayerKind::FC:
            s = {static_cast<std::size_t>(l.out_features)};
            break;
        default:
            break;
        }
    }
    return s;
}

std::size_t NetworkSpec::feature_count(const std::string& probe) const {
    std::vector<std::size_t> s = shape_after(probe_index(probe));
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw ArgumentError("network spec has no layers");
    if (!probe_points.empty()) {
        if (probe_points.size() != 5)
            throw ArgumentError("expected exactly five probe points, got " +
                                std::to_string(probe_points.size()));
        const LayerSpec& last = layers.back();
        if (last.kind != LayerKind::FC ||
            static_cast<std::size_t>(last.out_features) != num_classes)
            throw ArgumentError("final layer must be an FC classifier mapping to num_classes");
        // VarianceAveraged is reserved for the blocks above the L3 cut.
        std::size_t l3 = probe_index("L3");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].kind == LayerKind::BatchNorm &&
                layers[i].bn_mode == BnMode::VarianceAveraged && i <= l3)
                throw ArgumentError("VarianceAveraged BatchNorm is only allowed above layer 3");
        }
    }
    for (const LayerSpec& l : layers) {
        if (l.kind == LayerKind::Dropout && (l.rate < 0.0 || l.rate >= 1.0))
            throw ArgumentError("dropout rate must be in [0,1)");
    }
}

std::string NetworkSpec::to_text() const {
    std::ostringstream os;
    os << "hebbseed-net 1\n";
    os << "input " << input_shape[0] << ' ' << input_shape[1] << ' ' << input_shape[2] << '\n';
    os << "classes " << num_classes << '\n';
    for (const LayerSpec& l : layers) {
        switch (l.kind) {
        case LayerKind::Conv:
            os << "layer conv " << l.out_channels << ' ' << l.kh << ' ' << l.kw << ' ' << l.stride
               << ' ' << l.pad << '\n';
            break;
        case LayerKind::MaxPool:
            os << "layer maxpool " << l.kh << ' ' << l.kw << ' ' << l.stride << '\n';
            break;
        case LayerKind::ReLU:
            os << "layer relu\n";
            break;
        case LayerKind::Dropout:
            os << "layer dropout " << fmt_double(l.rate) << '\n';
            break;
        case LayerKind::FC:
            os << "layer fc " << l.out_features << '\n';
            break;
        case LayerKind::BatchNorm:
            os << "layer batchnorm "
               << (l.bn_mode == BnMode::VarianceAveraged ? "varavg" : "standard") << '\n';
            break;
        case LayerKind::Flatten:
            os << "layer flatten\n";
            break;
        }
    }
    for (const auto& [name, idx] : probe_points) os << "probe " << name << ' ' << idx << '\n';
    os << "end\n";
    return os.str();
}

NetworkSpec NetworkSpec::from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    NetworkSpec spec;
    spec.layers.clear();
    if (!std::getline(is, line) || line != "hebbseed-net 1")
        throw FormatError("bad network spec header: '" + line + "'");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line == "end") return spec;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "input") {
            ls >> spec.input_shape[0] >> spec.input_shape[1] >> spec.input_shape[2];
        } else if (tok == "classes") {
            ls >> spec.num_classes;
        } else if (tok == "probe") {
            std::string name;
            std::size_t idx;
            ls >> name >> idx;
            spec.probe_points.emplace_back(name, idx);
        } else if (tok == "layer") {
            std::string kind;
            ls >> kind;
            LayerSpec l;
            if (kind == "conv") {
                l.kind = LayerKind::Conv;
                ls >> l.out_channels >> l.kh >> l.kw >> l.stride >> l.pad;
            } else if (kind == "maxpool") {
                l.kind = LayerKind::MaxPool;
                ls >> l.kh >> l.kw >> l.stride;
            } else if (kind == "relu") {
                l.kind = LayerKind::ReLU;
            } else if (kind == "dropout") {
                l.kind = LayerKind::Dropout;
                ls >> l.rate;
            } else if (kind == "fc") {
                l.kind = LayerKind::FC;
                ls >> l.out_features;
            } else if (kind == "batchnorm") {
                l.kind = LayerKind::BatchNorm;
                std::string mode;
                ls >> mode;
                if (mode == "varavg")
                    l.bn_mode = BnMode::VarianceAveraged;
                else if (mode == "standard")
                    l.bn_mode = BnMode::Standard;
                else
                    throw FormatError("unknown batchnorm mode '" + mode + "'");
            } else if (kind == "flatten") {
                l.kind = LayerKind::Flatten;
            } else {
                throw FormatError("unknown layer kind '" + kind + "'");
            }
            if (ls.fail()) throw FormatError("malformed layer line: '" + line + "'");
            spec.layers.push_back(l);
        } else {
            throw FormatError("unknown spec line: '" + line + "'");
        }
    }
    throw FormatError("network spec missing 'end'");
}

NetworkSpec standard_network_spec(std::array<std::size_t, 3> input_shape, std::size_t num_classes,
                                  double width, bool pooling, bool hebbian_bn) {
    NetworkSpec spec;
    spec.input_shape = input_shape;
    spec.num_classes = num_classes;
    const BnMode upper = hebbian_bn ? BnMode::VarianceAveraged : BnMode::Standard;
    auto conv = [](int o, int k, int s, int p) {
        LayerSpec l;
        l.kind = LayerKind::Conv;
        l.out_channels = o;
        l.kh = l.kw = k;
        l.stride = s;
        l.pad = p;
        return l;
    };
    auto bn = [](BnMode m) {
        LayerSpec l;
        l.kind = LayerKind::BatchNorm;
        l.bn_mode = m;
        return l;
    };
    auto relu = [] {
        LayerSpec l;
        l.kind = LayerKind::ReLU;
        return l;
    };
    auto pool = [] {
        LayerSpec l;
        l.kind = LayerKind::MaxPool;
        l.kh = l.kw = 2;
        l.stride = 2;
        return l;
    };

    auto probe = [&spec](const char* name) {
        spec.probe_points.emplace_back(name, spec.layers.size() - 1);
    };

    // block 1
    spec.layers.push_back(conv(static_cast<int>(scaled(96, width)), 5, 1, 2));
    spec.layers.push_back(bn(BnMode::Standard));
    spec.layers.push_back(relu());
    if (pooling) spec.layers.push_back(pool());
    probe("L1");
    // block 2
    spec.layers.push_back(conv(static_cast<int>(scaled(128, width)), 3, 1, 1));
    spec.layers.push_back(bn(BnMode::Standard));
    spec.layers.push_back(relu());
    probe("L2");
    // block 3
    spec.layers.push_back(conv(static_cast<int>(scaled(192, width)), 3, 1, 1));
    spec.layers.push_back(bn(BnMode::Standard));
    spec.layers.push_back(relu());
    if (pooling) spec.layers.push_back(pool());
    probe("L3");
    // block 4
    spec.layers.push_back(conv(static_cast<int>(scaled(256, width)), 3, 1, 1));
    spec.layers.push_back(bn(upper));
    spec.layers.push_back(relu());
    probe("L4");
    // block 5
    {
        LayerSpec l;
        l.kind = LayerKind::Flatten;
        spec.layers.push_back(l);
    }
    {
        LayerSpec l;
        l.kind = LayerKind::FC;
        l.out_features = static_cast<int>(scaled(300, width));
        spec.layers.push_back(l);
    }
    spec.layers.push_back(bn(upper));
    spec.layers.push_back(relu());
    probe("L5");
    // classifier
    {
        LayerSpec l;
        l.kind = LayerKind::Dropout;
        l.rate = 0.5;
        spec.layers.push_back(l);
    }
    {
        LayerSpec l;
        l.kind = LayerKind::FC;
        l.out_features = static_cast<int>(num_classes);
        spec.layers.push_back(l);
    }
    spec.validate();
    return spec;
}

Network Network::build(const NetworkSpec& spec, Rng& rng, double hebb_lr, double mean_momentum,
                       double bn_momentum, double bn_eps) {
    spec.validate();
    Network net;
    net.spec = spec;
    net.states.resize(spec.layers.size());
    std::vector<std::size_t> cur{spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerState& st = net.states[i];
        Rng sub = rng.derive(i + 1);
        switch (l.kind) {
        case LayerKind::Conv: {
            std::size_t K = cur[0] * static_cast<std::size_t>(l.kh) * static_cast<std::size_t>(l.kw);
            st.hebb = HebbianLayerState(static_cast<std::size_t>(l.out_channels), K, sub, hebb_lr,
                                        mean_momentum);
            st.bias = Tensor({static_cast<std::size_t>(l.out_channels)});
            break;
        }
        case LayerKind::FC: {
            std::size_t in = 1;
            for (std::size_t d : cur) in *= d;
            st.hebb = HebbianLayerState(static_cast<std::size_t>(l.out_features), in, sub, hebb_lr,
                                        mean_momentum);
            st.bias = Tensor({static_cast<std::size_t>(l.out_features)});
            break;
        }
        case LayerKind::BatchNorm:
            st.bn = BatchNormState(cur[0], l.bn_mode, bn_momentum, bn_eps);
            break;
        default:
            break;
        }
        cur = spec.shape_after(i);
    }
    return net;
}

Tensor Network::forward(const Tensor& input, bool training, Rng* dropout_rng, Tape* tape,
                        std::size_t upto) {
    if (upto == static_cast<std::size_t>(-1)) upto = spec.layers.size() - 1;
    Tensor cur = input;
    for (std::size_t i = 0; i <= upto; ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerState& st = states[i];
        TapeNode node;
        node.layer = i;
        switch (l.kind) {
        case LayerKind::Conv: {
            ConvGeom g{l.kh, l.kw, l.stride, l.stride, l.pad, l.pad};
            cur = conv_forward(cur, st.hebb.weights, st.bias, st.hebb.running_input_mean, g,
                               tape ? &node.conv : nullptr);
            break;
        }
        case LayerKind::MaxPool: {
            if (tape) {
                node.pool_in_shape = cur.shape();
                MaxPoolResult r = maxpool_forward(cur, l.kh, l.kw, l.stride);
                node.pool_argmax = std::move(r.argmax);
                cur = std::move(r.output);
            } else {
                cur = maxpool_forward(cur, l.kh, l.kw, l.stride).output;
            }
            break;
        }
        case LayerKind::ReLU:
            if (tape) node.input = cur;
            cur = relu_forward(cur);
            break;
        case LayerKind::Dropout: {
            if (training && l.rate > 0.0 && dropout_rng == nullptr)
                throw ArgumentError("dropout in training mode needs an rng");
            Rng dummy(0);
            cur = dropout_forward(cur, l.rate, training, dropout_rng ? *dropout_rng : dummy,
                                  tape ? &node.dropout_mask : nullptr);
            break;
        }
        case LayerKind::FC:
            cur = fc_forward(cur, st.hebb.weights, st.bias, st.hebb.running_input_mean,
                             tape ? &node.fc_centered : nullptr);
            break;
        case LayerKind::BatchNorm:
            cur = batchnorm_forward(cur, st.bn, training, tape ? &node.bn : nullptr);
            break;
        case LayerKind::Flatten: {
            if (tape) node.pool_in_shape = cur.shape();
            std::size_t B = cur.dim(0);
            std::size_t rest = cur.size() / B;
            cur = std::move(cur).reshaped({B, rest});
            break;
        }
        }
        if (tape) tape->nodes.push_back(std::move(node));
    }
    return cur;
}

Tensor Network::forward_to_probe(const Tensor& input, const std::string& probe, bool training,
                                 Rng* dropout_rng) {
    std::size_t idx = spec.probe_index(probe);
    Tensor out = forward(input, training, dropout_rng, nullptr, idx);
    std::size_t B = out.dim(0);
    std::size_t rest = out.size() / B;
    return std::move(out).reshaped({B, rest});
}

void Network::backward(const Tape& tape, const Tensor& dlogits, std::vector<Tensor>& grads) {
    std::vector<std::pair<Tensor, Tensor>> by_layer(spec.layers.size());
    Tensor cur = dlogits;
    for (std::size_t n = tape.nodes.size(); n-- > 0;) {
        const TapeNode& node = tape.nodes[n];
        const LayerSpec& l = spec.layers[node.layer];
        LayerState& st = states[node.layer];
        switch (l.kind) {
        case LayerKind::Conv: {
            ConvGeom g{l.kh, l.kw, l.stride, l.stride, l.pad, l.pad};
            Tensor dw, db, dx;
            conv_backward(cur, node.conv, st.hebb.weights, g, dw, db, dx);
            by_layer[node.layer] = {std::move(dw), std::move(db)};
            cur = std::move(dx);
            break;
        }
        case LayerKind::MaxPool:
            cur = maxpool_backward(cur, node.pool_argmax, node.pool_in_shape);
            break;
        case LayerKind::ReLU:
            cur = relu_backward(cur, node.input);
            break;
        case LayerKind::Dropout:
            cur = dropout_backward(cur, node.dropout_mask);
            break;
        case LayerKind::FC: {
            Tensor dw, db, dx;
            fc_backward(cur, node.fc_centered, st.hebb.weights, dw, db, dx);
            by_layer[node.layer] = {std::move(dw), std::move(db)};
            cur = std::move(dx);
            break;
        }
        case LayerKind::BatchNorm: {
            Tensor dg, db;
            Tensor dx = batchnorm_backward(cur, node.bn, st.bn, dg, db);
            by_layer[node.layer] = {std::move(dg), std::move(db)};
            cur = std::move(dx);
            break;
        }
        case LayerKind::Flatten:
            cur = std::move(cur).reshaped(node.pool_in_shape);
            break;
        }
    }
    grads.clear();
    std::size_t limit = tape.nodes.empty() ? 0 : tape.nodes.back().layer + 1;
    for (std::size_t i = 0; i < limit; ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::Conv || l.kind == LayerKind::FC ||
            l.kind == LayerKind::BatchNorm) {
            grads.push_back(std::move(by_layer[i].first));
            grads.push_back(std::move(by_layer[i].second));
        }
    }
}

std::vector<ParamRef> Network::params() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        switch (spec.layers[i].kind) {
        case LayerKind::Conv:
        case LayerKind::FC:
            out.push_back({p + "weight", &states[i].hebb.weights, true});
            out.push_back({p + "bias", &states[i].bias, true});
            out.push_back({p + "input_mean", &states[i].hebb.running_input_mean, false});
            break;
        case LayerKind::BatchNorm:
            out.push_back({p + "gamma", &states[i].bn.gamma, true});
            out.push_back({p + "beta", &states[i].bn.beta, true});
            out.push_back({p + "running_mean", &states[i].bn.running_mean, false});
            out.push_back({p + "running_var", &states[i].bn.running_var, false});
            break;
        default:
            break;
        }
    }
    return out;
}

std::vector<ParamRef> Network::trainable_params() {
    std::vector<ParamRef> out;
    for (ParamRef& p : params())
        if (p.trainable) out.push_back(p);
    return out;
}

std::vector<std::size_t> Network::hebbian_layers() const {
    std::vector<std::size_t> out;
    std::size_t last_fc = spec.layers.size();
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].kind == LayerKind::FC) last_fc = i;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Conv) out.push_back(i);
        if (spec.layers[i].kind == LayerKind::FC && i != last_fc) out.push_back(i);
    }
    return out;
}

std::vector<Tensor> Network::collect_hebbian_inputs(const Tensor& input, bool training,
                                                    std::size_t count) {
    std::vector<std::size_t> hebb = hebbian_layers();
    if (count < hebb.size()) hebb.resize(count);
    if (hebb.empty()) return {};
    std::vector<Tensor> inputs;
    Tensor cur = input;
    for (std::size_t i = 0; i <= hebb.back(); ++i) {
        if (inputs.size() < hebb.size() && i == hebb[inputs.size()]) inputs.push_back(cur);
        if (i == hebb.back()) break; // the last recorded layer's output is not needed
        const LayerSpec& l = spec.layers[i];
        LayerState& st = states[i];
        switch (l.kind) {
        case LayerKind::Conv: {
            ConvGeom g{l.kh, l.kw, l.stride, l.stride, l.pad, l.pad};
            cur = conv_forward(cur, st.hebb.weights, st.bias, st.hebb.running_input_mean, g);
            break;
        }
        case LayerKind::MaxPool:
            cur = maxpool_forward(cur, l.kh, l.kw, l.stride).output;
            break;
        case LayerKind::ReLU:
            cur = relu_forward(cur);
            break;
        case LayerKind::FC:
            cur = fc_forward(cur, st.hebb.weights, st.bias, st.hebb.running_input_mean);
            break;
        case LayerKind::BatchNorm:
            cur = batchnorm_forward(cur, st.bn, training);
            break;
        case LayerKind::Flatten: {
            std::size_t B = cur.dim(0);
            std::size_t rest = cur.size() / B;
            cur = std::move(cur).reshaped({B, rest});
            break;
        }
        case LayerKind::Dropout:
            break; // unsupervised phase never reaches the classifier dropout
        }
    }
    return inputs;
}

void Network::set_all_bn_standard() {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::BatchNorm) {
            spec.layers[i].bn_mode = BnMode::Standard;
            states[i].bn.mode = BnMode::Standard;
        }
    }
}

} // namespace hebbseed
