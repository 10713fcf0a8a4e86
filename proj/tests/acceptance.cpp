// Acceptance suite: one line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "hebbseed/experiment.hpp"
#include "hebbseed/selfcheck.hpp"

using namespace hebbseed;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    std::printf("%s  criterion %2d (%s): %s [%.1fs]\n", pass ? "PASS" : "FAIL", number,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run(int number, const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    auto t0 = Clock::now();
    bool pass = false;
    std::string detail;
    try {
        auto [p, d] = fn();
        pass = p;
        detail = d;
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    report(number, name, pass, detail, secs);
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// ---- criterion 3: finite differences over every layer kind + composed net

void separate(Tensor& t, double margin = 5e-3) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::abs(t[i]) < margin) t[i] += (t[i] >= 0 ? margin : -margin);
        t[i] += 1e-4 * static_cast<double>(i % 97);
    }
}

double check_tensor_grad(Tensor& x, const Tensor& r, const std::function<Tensor()>& fwd,
                         const Tensor& analytic, double h = 1e-5) {
    double worst = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, x.size() / 40);
    for (std::size_t i = 0; i < x.size(); i += stride) {
        double keep = x[i];
        x[i] = keep + h;
        Tensor up = fwd();
        x[i] = keep - h;
        Tensor down = fwd();
        x[i] = keep;
        double lu = 0, ld = 0;
        for (std::size_t e = 0; e < up.size(); ++e) {
            lu += up[e] * r[e];
            ld += down[e] * r[e];
        }
        worst = std::max(worst, rel_err(analytic[i], (lu - ld) / (2 * h)));
    }
    return worst;
}

std::pair<bool, std::string> gradient_correctness() {
    Rng shape_rng(2024);
    double worst = 0.0;
    int shapes_checked = 0;

    for (int trial = 0; trial < 18; ++trial) {
        const std::size_t B = 2 + shape_rng.uniform_index(2);
        const std::size_t C = 1 + shape_rng.uniform_index(3);
        const std::size_t H = 4 + shape_rng.uniform_index(5);
        const std::size_t W = 4 + shape_rng.uniform_index(5);
        const std::size_t O = 1 + shape_rng.uniform_index(4);
        const int k = 1 + 2 * static_cast<int>(shape_rng.uniform_index(2)); // 1 or 3
        Rng rng(1000 + trial);

        switch (trial % 5) {
        case 0: { // conv
            ConvGeom g{k, k, 1, 1, k / 2, k / 2};
            Tensor x = uniform_tensor(rng, {B, C, H, W}, -1.0, 1.0);
            Tensor w = uniform_tensor(rng, {O, C * static_cast<std::size_t>(k) * static_cast<std::size_t>(k)}, -0.5, 0.5);
            Tensor bias = uniform_tensor(rng, {O}, -0.1, 0.1);
            Tensor none;
            ConvCache cache;
            Tensor out = conv_forward(x, w, bias, none, g, &cache);
            Tensor r = uniform_tensor(rng, out.shape(), -1.0, 1.0);
            Tensor dw, db, dx;
            conv_backward(r, cache, w, g, dw, db, dx);
            auto fwd = [&] { return conv_forward(x, w, bias, none, g); };
            worst = std::max({worst, check_tensor_grad(x, r, fwd, dx),
                              check_tensor_grad(w, r, fwd, dw), check_tensor_grad(bias, r, fwd, db)});
            break;
        }
        case 1: { // maxpool
            Tensor x = uniform_tensor(rng, {B, C, H & ~1u, W & ~1u}, -1.0, 1.0);
            separate(x);
            MaxPoolResult res = maxpool_forward(x, 2, 2, 2);
            Tensor r = uniform_tensor(rng, res.output.shape(), -1.0, 1.0);
            Tensor dx = maxpool_backward(r, res.argmax, x.shape());
            auto fwd = [&] { return maxpool_forward(x, 2, 2, 2).output; };
            worst = std::max(worst, check_tensor_grad(x, r, fwd, dx, 1e-6));
            break;
        }
        case 2: { // relu
            Tensor x = uniform_tensor(rng, {B, C * H * W}, -1.0, 1.0);
            separate(x);
            Tensor r = uniform_tensor(rng, x.shape(), -1.0, 1.0);
            Tensor dx = relu_backward(r, x);
            auto fwd = [&] { return relu_forward(x); };
            worst = std::max(worst, check_tensor_grad(x, r, fwd, dx, 1e-6));
            break;
        }
        case 3: { // batchnorm, both modes
            BnMode mode = trial % 2 ? BnMode::Standard : BnMode::VarianceAveraged;
            BatchNormState st(C, mode);
            Rng grng(50 + trial);
            st.gamma = uniform_tensor(grng, {C}, 0.5, 1.5);
            st.beta = uniform_tensor(grng, {C}, -0.5, 0.5);
            Tensor x = uniform_tensor(rng, {4, C, 3, 3}, -1.0, 1.0);
            Tensor r = uniform_tensor(rng, x.shape(), -1.0, 1.0);
            BnCache cache;
            batchnorm_forward(x, st, true, &cache);
            Tensor dg, db;
            Tensor dx = batchnorm_backward(r, cache, st, dg, db);
            auto fwd = [&] { return batchnorm_forward(x, st, true); };
            worst = std::max({worst, check_tensor_grad(x, r, fwd, dx),
                              check_tensor_grad(st.gamma, r, fwd, dg),
                              check_tensor_grad(st.beta, r, fwd, db)});
            break;
        }
        case 4: { // fc
            Tensor x = uniform_tensor(rng, {B, C * H}, -1.0, 1.0);
            Tensor w = uniform_tensor(rng, {O + 1, C * H}, -0.5, 0.5);
            Tensor bias = uniform_tensor(rng, {O + 1}, -0.2, 0.2);
            Tensor none, centered;
            fc_forward(x, w, bias, none, &centered);
            Tensor r = uniform_tensor(rng, {B, O + 1}, -1.0, 1.0);
            Tensor dw, db, dx;
            fc_backward(r, centered, w, dw, db, dx);
            auto fwd = [&] { return fc_forward(x, w, bias, none); };
            worst = std::max({worst, check_tensor_grad(x, r, fwd, dx),
                              check_tensor_grad(w, r, fwd, dw), check_tensor_grad(bias, r, fwd, db)});
            break;
        }
        }
        ++shapes_checked;
    }

    // composed six-layer network through cross-entropy, three random shapes
    for (int trial = 0; trial < 3; ++trial) {
        NetworkSpec spec = standard_network_spec({3, 8, 8}, 3, 0.04, true, true);
        // drop classifier dropout randomness for the check
        for (LayerSpec& l : spec.layers)
            if (l.kind == LayerKind::Dropout) l.rate = 0.0;
        Rng rng(300 + trial);
        Network net = Network::build(spec, rng);
        Tensor x = uniform_tensor(rng, {2, 3, 8, 8}, -1.0, 1.0);
        separate(x, 1e-3);
        std::vector<int> labels = {trial % 3, (trial + 1) % 3};

        Tape tape;
        Tensor logits = net.forward(x, true, nullptr, &tape);
        CrossEntropyResult ce = cross_entropy(logits, labels);
        std::vector<Tensor> grads;
        net.backward(tape, ce.dlogits, grads);
        std::vector<ParamRef> params = net.trainable_params();
        const double h = 1e-5;
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor& t = *params[p].tensor;
            const std::size_t stride = std::max<std::size_t>(1, t.size() / 6);
            for (std::size_t i = 0; i < t.size(); i += stride) {
                double keep = t[i];
                t[i] = keep + h;
                double up = cross_entropy(net.forward(x, true), labels).loss;
                t[i] = keep - h;
                double down = cross_entropy(net.forward(x, true), labels).loss;
                t[i] = keep;
                worst = std::max(worst, rel_err(grads[p][i], (up - down) / (2 * h)));
            }
        }
        ++shapes_checked;
    }

    std::ostringstream os;
    os << "worst relative error " << worst << " over " << shapes_checked
       << " random shapes (limit 1e-4)";
    return {worst < 1e-4 && shapes_checked >= 20, os.str()};
}

// ---- criterion 4: modified BN contract

std::pair<bool, std::string> modified_bn_contract() {
    Rng rng(404);
    bool ok = true;
    std::ostringstream os;
    const std::size_t C = 5, B = 64;

    // VarianceAveraged: argsort preserved exactly, mean of output variances 1
    BatchNormState va(C, BnMode::VarianceAveraged, 0.1, 1e-12);
    Tensor x({B, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            x[b * C + c] = (0.2 + 0.8 * static_cast<double>(c)) * rng.normal() +
                           0.3 * static_cast<double>(c);
    Tensor y = batchnorm_forward(x, va, true);

    auto vars_of = [&](const Tensor& t) {
        std::vector<double> vars(C);
        for (std::size_t c = 0; c < C; ++c) {
            double m = 0;
            for (std::size_t b = 0; b < B; ++b) m += t[b * C + c];
            m /= B;
            double v = 0;
            for (std::size_t b = 0; b < B; ++b) v += (t[b * C + c] - m) * (t[b * C + c] - m);
            vars[c] = v / B;
        }
        return vars;
    };
    auto argsort = [&](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        return idx;
    };
    std::vector<double> vin = vars_of(x), vout = vars_of(y);
    if (argsort(vin) != argsort(vout)) {
        ok = false;
        os << "variance argsort not preserved; ";
    }
    double mean_var = 0;
    for (double v : vout) mean_var += v;
    mean_var /= C;
    if (std::abs(mean_var - 1.0) > 1e-6) {
        ok = false;
        os << "mean output variance " << mean_var << "; ";
    }

    // Standard: every channel normalized to unit variance
    BatchNormState st(C, BnMode::Standard, 0.1, 1e-12);
    Tensor z = batchnorm_forward(x, st, true);
    std::vector<double> vz = vars_of(z);
    for (double v : vz)
        if (std::abs(v - 1.0) > 1e-6) {
            ok = false;
            os << "standard-mode channel variance " << v << "; ";
        }
    if (ok)
        os << "argsort preserved exactly; VA mean-var and standard per-channel var within 1e-6";
    return {ok, os.str()};
}

// ---- criteria 7/8: desk-scale directional runs

struct DeskData {
    Dataset train, test;
    std::string source;
};

DeskData desk_dataset() {
    DeskData d;
    const char* env = std::getenv("HEBBSEED_CIFAR10_DIR");
    std::string dir = env ? env : "data/cifar-10-batches-bin";
    if (fs::exists(fs::path(dir) / "data_batch_1.bin")) {
        d.train = load_cifar10(dir).head(6000);
        d.test = load_cifar10_test(dir).head(1000);
        d.source = "cifar10 (" + dir + ")";
    } else {
        d.train = make_synthetic_images(6000, 10, 77);
        d.test = make_synthetic_images(1000, 10, 78);
        d.test.name = "synth10-test";
        d.source = "synth10 (CIFAR-10 binaries not present)";
    }
    return d;
}

ExperimentConfig desk_config() {
    ExperimentConfig cfg = ExperimentConfig::defaults_for("cifar10");
    cfg.train_images = 5000;
    cfg.val_images = 1000;
    cfg.test_images = 1000;
    cfg.seeds = {1, 2, 3};
    // quarter width and a short unsupervised budget keep the three-seed
    // directional run inside the CPU budget of this suite
    cfg.width = 0.25;
    cfg.hebb_epochs = 2;
    return cfg;
}

struct DeskResults {
    std::vector<double> bp_l3, hpca_l3;      // 1% regime
    std::vector<double> hpca_final, ft_final; // 5% regime
    std::string source;
};

DeskResults run_desk_protocol() {
    DeskData data = desk_dataset();
    ExperimentConfig cfg = desk_config();
    ExperimentRunner runner(cfg, data.train.head(6000), data.test);

    DeskResults out;
    out.source = data.source;
    for (std::uint64_t seed : cfg.seeds) {
        Network pre = runner.pretrain(seed, nullptr);
        std::vector<RunRecord> records;
        std::vector<CellResult> results;
        runner.run_cell(seed, 1.0, "hpca", {"L3"}, &pre, records, results);
        runner.run_cell(seed, 1.0, "bp", {"L3"}, nullptr, records, results);
        runner.run_cell(seed, 5.0, "hpca", {"final"}, &pre, records, results);
        runner.run_cell(seed, 5.0, "hpca-ft", {"final"}, &pre, records, results);
        for (const CellResult& c : results) {
            if (c.regime == 1.0 && c.method == "hpca" && c.probe == "L3")
                out.hpca_l3.push_back(c.test_acc);
            if (c.regime == 1.0 && c.method == "bp" && c.probe == "L3")
                out.bp_l3.push_back(c.test_acc);
            if (c.regime == 5.0 && c.method == "hpca" && c.probe == "final")
                out.hpca_final.push_back(c.test_acc);
            if (c.regime == 5.0 && c.method == "hpca-ft" && c.probe == "final")
                out.ft_final.push_back(c.test_acc);
        }
        std::printf("       [seed %llu] 1%%-L3: hpca %.4f vs bp %.4f | 5%%-final: hpca %.4f, "
                    "hpca-ft %.4f\n",
                    static_cast<unsigned long long>(seed), out.hpca_l3.back(), out.bp_l3.back(),
                    out.hpca_final.back(), out.ft_final.back());
        std::fflush(stdout);
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// ---- criteria 9/10 helpers (micro scale)

ExperimentConfig micro_cfg() {
    ExperimentConfig cfg = ExperimentConfig::defaults_for("synth10");
    cfg.dataset = "synth10";
    cfg.train_images = 160;
    cfg.val_images = 40;
    cfg.test_images = 40;
    cfg.width = 0.06;
    cfg.batch = 16;
    cfg.epochs = 3;
    cfg.hebb_epochs = 1;
    cfg.ft_epochs = 1;
    return cfg;
}

} // namespace

int main() {
    std::printf("hebbseed acceptance suite\n");

    run(1, "hpca-pca oracle equivalence", [] {
        selfcheck::CheckResult r = selfcheck::hpca_pca_equivalence();
        return std::make_pair(r.pass, r.detail);
    });
    run(2, "wta centroid recovery", [] {
        selfcheck::CheckResult r = selfcheck::wta_centroid_recovery();
        return std::make_pair(r.pass, r.detail);
    });
    run(3, "gradient correctness", gradient_correctness);
    run(4, "modified batchnorm contract", modified_bn_contract);
    run(5, "conv weight-sharing averaging", [] {
        selfcheck::CheckResult r = selfcheck::conv_update_averaging();
        return std::make_pair(r.pass, r.detail);
    });
    run(6, "schedule and regime counts", [] {
        selfcheck::CheckResult r = selfcheck::schedule_and_regime_counts();
        return std::make_pair(r.pass, r.detail);
    });

    // 9: cell re-run reproduces records bit for bit
    run(9, "determinism of cell re-runs", [] {
        ExperimentConfig cfg = micro_cfg();
        ExperimentRunner runner(cfg);
        Network pre = runner.pretrain(1, nullptr);
        auto run_once = [&] {
            std::vector<RunRecord> rec;
            std::vector<CellResult> res;
            runner.run_cell(1, 25.0, "hpca", {"L3"}, &pre, rec, res);
            runner.run_cell(1, 25.0, "bp", {"final"}, nullptr, rec, res);
            const std::string path = "acc_records_tmp.csv";
            write_records_csv(path, rec, cfg.config_hash());
            std::ifstream is(path);
            std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
            std::remove(path.c_str());
            return s;
        };
        std::string a = run_once(), b = run_once();
        return std::make_pair(a == b && !a.empty(),
                              a == b ? std::string("records.csv identical across re-runs")
                                     : std::string("records differ between re-runs"));
    });

    // 10: labels never reach the unsupervised phase
    run(10, "labels-unused contract", [] {
        ExperimentConfig cfg = micro_cfg();
        ExperimentRunner r1(cfg);
        Network a = r1.pretrain(3, nullptr);
        Dataset scrubbed = r1.train_data();
        for (int& l : scrubbed.labels) l = 0; // delete all label information
        ExperimentRunner r2(cfg, scrubbed, r1.test_data());
        Network b = r2.pretrain(3, nullptr);
        std::vector<ParamRef> pa = a.params(), pb = b.params();
        for (std::size_t p = 0; p < pa.size(); ++p)
            for (std::size_t i = 0; i < pa[p].tensor->size(); ++i)
                if ((*pa[p].tensor)[i] != (*pb[p].tensor)[i])
                    return std::make_pair(false, std::string("checkpoint differs at ") +
                                                     pa[p].name);
        return std::make_pair(true, std::string("checkpoints bit-identical with labels deleted"));
    });

    // 7/8 share the expensive desk-scale runs
    {
        auto t0 = Clock::now();
        DeskResults desk = run_desk_protocol();
        double secs = std::chrono::duration<double>(Clock::now() - t0).count();

        double hpca = mean_of(desk.hpca_l3), bp = mean_of(desk.bp_l3);
        const double chance = 0.1;
        std::ostringstream os7;
        os7 << desk.source << ": mean HPCA L3 " << hpca * 100 << "% vs BP " << bp * 100
            << "% at 1% regime; chance x1.5 = " << chance * 150 << "%";
        report(7, "directional sample efficiency", hpca > bp && hpca > 1.5 * chance, os7.str(),
               secs);

        double hf = mean_of(desk.hpca_final), ft = mean_of(desk.ft_final);
        std::ostringstream os8;
        os8 << "mean HPCA+FT " << ft * 100 << "% vs HPCA " << hf * 100
            << "% at 5% regime, final probe (tolerance -0.5pp)";
        report(8, "fine-tuning does not collapse", ft >= hf - 0.005, os8.str(), 0.0);
    }

    std::printf("%s (%d failure%s)\n", g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES",
                g_failures, g_failures == 1 ? "" : "s");
    return g_failures == 0 ? 0 : 1;
}
