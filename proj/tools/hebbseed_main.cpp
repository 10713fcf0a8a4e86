#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "hebbseed/checkpoint.hpp"
#include "hebbseed/error.hpp"
#include "hebbseed/experiment.hpp"
#include "hebbseed/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace hebbseed;

namespace {

struct FetchDefaults {
    const char* url;
    const char* sha256;
};

FetchDefaults fetch_defaults(const std::string& dataset) {
    if (dataset == "cifar10")
        return {"https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
                "c32a1d4ab5d03f1284b67883e8d87530b7f98ce78ebab6cc77a1b481e7c19ed0"};
    if (dataset == "cifar100")
        return {"https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz",
                "58938ed2446fce988bcf03b1e6226a317a56140cfb0f9fd1d9e0ee4e95b1cdfb"};
    return {"", ""};
}

ExperimentConfig load_config_arg(const std::string& config_path, const std::string& dataset) {
    if (!config_path.empty()) return ExperimentConfig::load(config_path);
    return ExperimentConfig::defaults_for(dataset.empty() ? "cifar10" : dataset);
}

int cmd_report(const std::string& runs_dir) {
    std::vector<CellResult> cells;
    std::string config_line;
    std::string dataset = "runs";
    std::size_t files = 0;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir))
        if (entry.is_regular_file() && entry.path().filename() == "results.csv")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    std::set<std::uint64_t> seeds;
    for (const fs::path& p : paths) {
        std::ifstream is(p);
        std::string line;
        std::getline(is, line);
        if (config_line.empty())
            config_line = line;
        else if (config_line != line)
            throw ArgumentError("report: inconsistent run manifests under " + runs_dir +
                                " (config hashes differ); refusing to aggregate");
        std::getline(is, line); // header
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            CellResult c;
            std::istringstream ls(line);
            std::string tok;
            std::getline(ls, tok, ',');
            c.seed = std::stoull(tok);
            std::getline(ls, tok, ',');
            c.regime = std::stod(tok);
            std::getline(ls, c.method, ',');
            std::getline(ls, c.probe, ',');
            std::getline(ls, tok, ',');
            c.best_epoch = std::stoi(tok);
            std::getline(ls, tok, ',');
            c.test_acc = std::stod(tok);
            cells.push_back(c);
            seeds.insert(c.seed);
        }
        ++files;
    }
    if (cells.empty()) {
        std::cerr << "report: no results.csv found under " << runs_dir << "\n";
        return 1;
    }
    std::vector<ResultRow> rows = aggregate(cells, 1);
    write_table_csv((fs::path(runs_dir) / "table.csv").string(), rows);
    write_table_txt((fs::path(runs_dir) / "table.txt").string(), rows, dataset, seeds.size());
    std::cout << "aggregated " << cells.size() << " cells from " << files << " file(s) into "
              << runs_dir << "/table.{csv,txt}\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hebbseed: Hebbian-PCA semi-supervised training harness"};
    app.require_subcommand(1);

    // fetch
    auto* fetch = app.add_subcommand("fetch", "download/verify/extract a dataset archive");
    std::string fetch_dataset_name, fetch_dir = "data", fetch_url, fetch_sha;
    bool fetch_no_verify = false;
    fetch->add_option("dataset", fetch_dataset_name, "cifar10 or cifar100")->required();
    fetch->add_option("--dir", fetch_dir, "target directory");
    fetch->add_option("--url", fetch_url, "archive URL (default: official host)");
    fetch->add_option("--sha256", fetch_sha, "expected archive SHA-256");
    fetch->add_flag("--no-verify", fetch_no_verify, "skip checksum verification");

    // pretrain
    auto* pretrain = app.add_subcommand("pretrain", "unsupervised Hebbian pre-training");
    std::string pre_config, pre_out = "ckpt.bin", pre_dataset;
    std::uint64_t pre_seed = 1;
    pretrain->add_option("--config", pre_config, "config file");
    pretrain->add_option("--dataset", pre_dataset, "dataset when no config file is given");
    pretrain->add_option("--seed", pre_seed, "RNG seed");
    pretrain->add_option("--out", pre_out, "checkpoint output path");

    // train
    auto* train = app.add_subcommand("train", "train/evaluate one cell");
    std::string tr_config, tr_method, tr_probe = "final", tr_ckpt, tr_out, tr_dataset;
    std::uint64_t tr_seed = 1;
    double tr_regime = 100.0;
    train->add_option("--config", tr_config, "config file");
    train->add_option("--dataset", tr_dataset, "dataset when no config file is given");
    train->add_option("--method", tr_method, "bp | hpca | hpca-ft")->required();
    train->add_option("--probe", tr_probe, "L1..L5 or final");
    train->add_option("--regime", tr_regime, "labeled percentage r");
    train->add_option("--ckpt", tr_ckpt, "pretrained checkpoint (hpca / hpca-ft)");
    train->add_option("--seed", tr_seed, "RNG seed");
    train->add_option("--out", tr_out, "output directory");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "full (seed x regime x method x probe) grid");
    std::string sw_config;
    sweep->add_option("--config", sw_config, "config file")->required();

    // verify-oracle
    app.add_subcommand("verify-oracle", "run the learning-rule oracle checks");

    // report
    auto* report = app.add_subcommand("report", "re-aggregate results into tables");
    std::string rep_runs;
    report->add_option("--runs", rep_runs, "directory holding run outputs")->required();

    // init-config
    auto* initcfg = app.add_subcommand("init-config", "write a config file with all defaults");
    std::string ic_dataset = "cifar10", ic_out = "hebbseed.conf";
    initcfg->add_option("--dataset", ic_dataset, "dataset the defaults target");
    initcfg->add_option("--out", ic_out, "output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fetch->parsed()) {
            FetchDefaults d = fetch_defaults(fetch_dataset_name);
            std::string url = fetch_url.empty() ? d.url : fetch_url;
            std::string sha = fetch_no_verify ? "" : (fetch_sha.empty() ? d.sha256 : fetch_sha);
            std::string where = hebbseed::fetch_dataset(fetch_dataset_name, fetch_dir, url, sha);
            std::cout << "dataset ready at " << where << "\n";
            return 0;
        }
        if (pretrain->parsed()) {
            ExperimentConfig cfg = load_config_arg(pre_config, pre_dataset);
            if (!pre_dataset.empty()) cfg.dataset = pre_dataset;
            ExperimentRunner runner(cfg);
            std::vector<RunRecord> records;
            Network net = runner.pretrain(pre_seed, &records);
            save_checkpoint(net, pre_out);
            write_records_csv(pre_out + ".records.csv", records, cfg.config_hash());
            std::cout << "checkpoint written to " << pre_out << " ("
                      << records.size() << " pretrain records)\n";
            return 0;
        }
        if (train->parsed()) {
            ExperimentConfig cfg = load_config_arg(tr_config, tr_dataset);
            if (!tr_dataset.empty()) cfg.dataset = tr_dataset;
            ExperimentRunner runner(cfg);
            std::optional<Network> pre;
            if (tr_method != "bp") {
                if (tr_ckpt.empty())
                    throw ArgumentError("--ckpt is required for method " + tr_method);
                pre = load_checkpoint(tr_ckpt);
            }
            std::vector<RunRecord> records;
            std::vector<CellResult> results;
            runner.run_cell(tr_seed, tr_regime, tr_method, {tr_probe}, pre ? &*pre : nullptr,
                            records, results);
            std::string out = tr_out.empty()
                                  ? "runs/cell-" + runner.run_id(tr_seed, tr_regime, tr_method,
                                                                 tr_probe)
                                  : tr_out;
            fs::create_directories(out);
            write_records_csv((fs::path(out) / "records.csv").string(), records,
                              cfg.config_hash());
            write_results_csv((fs::path(out) / "results.csv").string(), results,
                              cfg.config_hash());
            for (const CellResult& c : results)
                std::cout << c.method << " r=" << c.regime << "% probe=" << c.probe
                          << " test_acc=" << c.test_acc << " (best epoch " << c.best_epoch
                          << ")\n";
            std::cout << "records in " << out << "\n";
            return 0;
        }
        if (sweep->parsed()) {
            ExperimentConfig cfg = ExperimentConfig::load(sw_config);
            ExperimentRunner runner(cfg);
            std::string dir = runner.sweep();
            std::cout << "sweep complete: " << dir << "\n";
            std::ifstream table(fs::path(dir) / "table.txt");
            std::cout << table.rdbuf();
            return 0;
        }
        if (app.get_subcommand("verify-oracle")->parsed()) {
            int failures = 0;
            for (const auto& r : selfcheck::run_all()) {
                std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail
                          << "\n";
                if (!r.pass) ++failures;
            }
            return failures == 0 ? 0 : 1;
        }
        if (report->parsed()) return cmd_report(rep_runs);
        if (initcfg->parsed()) {
            write_default_config(ic_out, ExperimentConfig::defaults_for(ic_dataset));
            std::cout << "defaults written to " << ic_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
