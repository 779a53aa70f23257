#pragma once

// Subcommands of the mmadv tool. run() returns the process exit code:
// 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mmadv/attacks.hpp"
#include "mmadv/dataset.hpp"
#include "mmadv/defense.hpp"
#include "mmadv/evalreport.hpp"
#include "mmadv/nn.hpp"
#include "run_config.hpp"

#ifndef MMADV_CODE_HASH
#define MMADV_CODE_HASH "unknown"
#endif

namespace mmadv::cli {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "1.0.0";

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- file helpers --------------------------------------------------------------

inline std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw data_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw data_error("cannot write " + p.string());
    os << text;
    if (!os) throw data_error("write failed: " + p.string());
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

inline void prepare_out(const fs::path& out, const RunConfig& cfg, const std::string& command) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw data_error("cannot create " + out.string() + ": " + ec.message());
    write_file(out / "resolved_config.json", to_json(cfg).dump(2) + "\n");
    write_file(out / "VERSION", std::string("mmadv ") + kVersion + "\ncode_hash " + MMADV_CODE_HASH + "\ncommand " + command + "\n");
}

inline json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw data_error(p.string() + ": " + e.what());
    }
}

struct DataDir {
    Dataset train, val, test;
    std::string train_hash;
    std::uint64_t seed = 0;
};

inline DataDir load_data_dir(const fs::path& dir, const RunConfig& cfg) {
    DataDir d;
    d.train = load_dataset((dir / "dataset_train.csv").string());
    d.val = load_dataset((dir / "dataset_val.csv").string());
    d.test = load_dataset((dir / "dataset_test.csv").string());
    d.train_hash = file_hash(dir / "dataset_train.csv");
    for (const Dataset* part : {&d.train, &d.val, &d.test})
        if (part->config_hash != cfg.network.hash())
            throw data_error("dataset in " + dir.string() + " was generated with a different network config");
    const auto it = d.train.provenance.find("seed");
    if (it == d.train.provenance.end()) throw data_error("dataset: missing seed provenance");
    d.seed = static_cast<std::uint64_t>(std::stoull(it->second));
    return d;
}

struct ModelSet {
    std::vector<Model> models;
    Arch arch = Arch::m1;
    std::string mode;
    std::string id;  // e.g. m2-standard
    json meta;
};

inline ModelSet load_model_dir(const fs::path& dir, const RunConfig& cfg) {
    ModelSet s;
    s.meta = read_json(dir / "meta.json");
    s.arch = parse_arch(s.meta.at("arch").get<std::string>());
    s.mode = s.meta.at("mode").get<std::string>();
    s.id = std::string(to_string(s.arch)) + "-" + s.mode;
    for (int j = 0; j < cfg.network.L; ++j) {
        Model m = load_model((dir / ("cell" + std::to_string(j) + ".model")).string());
        if (m.config_hash != cfg.network.hash()) throw data_error("checkpoint " + std::to_string(j) + " has a different network config");
        if (m.cell != j || m.input_dim() != cfg.network.input_dim() || m.K != cfg.network.K)
            throw data_error("checkpoint " + std::to_string(j) + " does not match the configured network");
        s.models.push_back(std::move(m));
    }
    return s;
}

inline std::vector<double> parse_eps_list(const std::string& text) {
    std::vector<double> out;
    for (auto f : split_fields(text)) {
        double e = 0.0;
        try {
            e = parse_double(f);
        } catch (const data_error&) {
            throw usage_error("--eps: not a number: '" + std::string(f) + "'");
        }
        if (!(e >= 0.0 && e < 0.5)) throw usage_error("--eps: epsilon must lie in [0, 0.5)");
        out.push_back(e);
    }
    return out;
}

inline std::vector<AttackKind> parse_attack_list(const std::string& text) {
    std::vector<AttackKind> out;
    try {
        for (auto f : split_fields(text)) out.push_back(parse_attack(f));
    } catch (const std::invalid_argument& e) {
        throw usage_error(std::string("--attack: ") + e.what());
    }
    return out;
}

inline std::string eps_tag(double e) { return "eps" + fmt_exact(e); }

// --- verify --------------------------------------------------------------------

struct VerifyResult {
    int files = 0;
    std::vector<std::string> problems;
};

/// Invariant scan of one dataset. Adversarial files (adv_epsilon provenance)
/// are checked against `clean` for the epsilon ball and unchanged targets.
inline void verify_dataset(const Dataset& d, const std::string& name, const NetworkConfig* cfg, const Dataset* clean,
                           VerifyResult& r) {
    ++r.files;
    auto bad = [&](const std::string& what) { r.problems.push_back(name + ": " + what); };
    if (cfg && d.config_hash != cfg->hash()) bad("config hash differs from the configured network");
    const double tol = 1e-9;
    const bool adversarial = d.provenance.count("adv_epsilon") > 0;
    NetworkConfig geo;
    if (cfg) geo = *cfg;
    geo.L = d.L;
    geo.K = d.K;
    for (const auto& s : d.samples) {
        const std::string id = " (id " + std::to_string(s.id) + ")";
        if (s.powers.minCoeff() < 0.0) bad("negative power" + id);
        if (s.sums != cell_sums(s.powers, d.L, d.K)) bad("cell sums disagree with powers" + id);
        if (s.sums.maxCoeff() > d.pmax_mw + tol) bad("cell sum exceeds Pmax" + id);
        if (!s.positions.allFinite()) bad("non-finite position" + id);
        if (!adversarial && cfg) {
            const UEDrop drop = drop_from_positions(s.positions);
            const double side = geo.network_side_m();
            for (int l = 0; l < d.L; ++l)
                for (int k = 0; k < d.K; ++k) {
                    const Vec2 p = drop.at(l, k, d.K);
                    if (p.x < 0 || p.x > side || p.y < 0 || p.y > side) bad("UE outside the network area" + id);
                    if (wrapped_distance(p, bs_position(l, geo), geo) < geo.min_bs_distance_m) bad("UE inside the exclusion disc" + id);
                }
        }
    }
    if (adversarial) {
        if (!clean) {
            bad("adversarial file needs --clean to check the epsilon ball");
            return;
        }
        const double eps = parse_double(d.provenance.at("adv_epsilon"));
        if (d.size() != clean->size()) {
            bad("record count differs from the clean reference");
            return;
        }
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto& a = d.samples[i];
            const auto& c = clean->samples[i];
            if (a.id != c.id) bad("record order differs from the clean reference");
            else if ((a.positions - c.positions).cwiseAbs().maxCoeff() > eps + 1e-12) bad("outside the epsilon ball (id " + std::to_string(a.id) + ")");
            else if (a.powers != c.powers) bad("targets differ from the clean reference (id " + std::to_string(a.id) + ")");
        }
    }
}

inline VerifyResult verify_path(const fs::path& path, const NetworkConfig* cfg, const Dataset* clean) {
    VerifyResult r;
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".csv" &&
                (e.path().filename().string().rfind("dataset_", 0) == 0 || e.path().filename().string().rfind("adv_", 0) == 0))
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) throw data_error("verify: no dataset files under " + path.string());
    for (const auto& f : files) verify_dataset(load_dataset(f.string()), f.filename().string(), cfg, clean, r);
    return r;
}

// --- commands --------------------------------------------------------------------

struct Options {
    std::string config;
    long long seed = -1;
    std::string arch = "m1";
    std::string precoder;
    std::string mode = "standard";
    std::string attack;
    std::string eps;
    std::string out;
    std::string data;
    std::string models;
    std::string std_models;
    std::string surrogate;
    std::string victim;
    std::string direction;
    std::string adv_models;
    std::string clean;
    std::string goal = "min";
    double se_eps = 0.3;
    std::vector<std::string> inputs;
    bool verify = false;
};

inline RunConfig resolve_config(const Options& o) {
    if (o.config.empty()) throw usage_error("--config is required");
    RunConfig c = load_run_config(o.config);
    if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.precoder.empty()) {
        try {
            c.dataset.precoder = parse_precoder(o.precoder);
        } catch (const std::invalid_argument& e) {
            throw usage_error(e.what());
        }
    }
    if (!o.attack.empty()) c.attack.attacks = parse_attack_list(o.attack);
    if (!o.eps.empty()) c.attack.epsilons = parse_eps_list(o.eps);
    return c;
}

inline void require(const std::string& v, const char* flag) {
    if (v.empty()) throw usage_error(std::string(flag) + " is required");
}

inline int cmd_generate(const Options& o, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    require(o.out, "--out");
    const fs::path out(o.out);
    prepare_out(out, cfg, "generate");
    const auto& dc = cfg.dataset;
    const int n = dc.n_train + dc.n_val + dc.n_test;
    GenerationLog glog;
    const Dataset all = generate_dataset(cfg.network, n, dc.precoder, cfg.dataset_seed(), dc.threads, &glog);
    const double dn = n;
    const DatasetSplit sp = split(all, {dc.n_train / dn, dc.n_val / dn, dc.n_test / dn}, cfg.split_seed());
    if (static_cast<int>(sp.train.size()) != dc.n_train || static_cast<int>(sp.val.size()) != dc.n_val)
        throw data_error("split sizes do not match the configured counts");
    auto save = [&](Dataset d, const char* part) {
        d.provenance["split"] = part;
        save_dataset((out / (std::string("dataset_") + part + ".csv")).string(), d);
    };
    save(sp.train, "train");
    save(sp.val, "val");
    save(sp.test, "test");
    json meta;
    meta["n"] = n;
    meta["regenerated"] = glog.regenerated;
    meta["dataset_hash"] = file_hash(out / "dataset_train.csv");
    meta["normalization_hash"] = normalization_stats(sp.train).hash();
    write_file(out / "meta.json", meta.dump(2) + "\n");
    log << "generated " << n << " samples (" << glog.regenerated << " redrawn) into " << out.string() << "\n";
    if (o.verify) {
        const VerifyResult r = verify_path(out, &cfg.network, nullptr);
        for (const auto& p : r.problems) log << "verify: " << p << "\n";
        if (!r.problems.empty()) throw data_error("verify: " + std::to_string(r.problems.size()) + " invariant violations");
        log << "verify: " << r.files << " files ok\n";
    }
    return 0;
}

inline void write_history(const fs::path& p, const std::vector<TrainResult>& res) {
    std::ostringstream os;
    os << "cell,epoch,train_loss,val_loss\n";
    for (std::size_t j = 0; j < res.size(); ++j)
        for (const auto& h : res[j].history) os << j << ',' << h.epoch << ',' << fmt_exact(h.train_loss) << ',' << fmt_exact(h.val_loss) << '\n';
    write_file(p, os.str());
}

inline int cmd_train(const Options& o, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    require(o.data, "--data");
    require(o.out, "--out");
    Arch arch;
    try {
        arch = parse_arch(o.arch);
    } catch (const std::invalid_argument& e) {
        throw usage_error(e.what());
    }
    if (arch == Arch::custom) throw usage_error("--arch must be m1 or m2");
    if (o.mode != "standard" && o.mode != "adversarial") throw usage_error("--mode must be standard or adversarial");
    const DataDir data = load_data_dir(o.data, cfg);
    const fs::path out(o.out);
    prepare_out(out, cfg, "train");
    const NormalizationStats stats = normalization_stats(data.train);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train_seed(arch);

    json meta;
    meta["arch"] = to_string(arch);
    meta["mode"] = o.mode;
    meta["precoder"] = data.train.provenance.count("precoder") ? data.train.provenance.at("precoder") : "";
    meta["dataset_hash"] = data.train_hash;
    meta["normalization_hash"] = stats.hash();

    std::vector<TrainResult> res;
    if (o.mode == "standard") {
        res = train_cells(arch, cfg.network, stats, {data.train}, {data.val}, tc);
    } else {
        require(o.std_models, "--std (standard checkpoints)");
        const ModelSet f_std = load_model_dir(o.std_models, cfg);
        double eps = cfg.defense.epsilon;
        if (!o.eps.empty()) {
            const auto list = parse_eps_list(o.eps);
            if (list.size() != 1) throw usage_error("--eps takes a single value in adversarial mode");
            eps = list.front();
        }
        AttackConfig ac = cfg.attack_config(AttackKind::pgdm, eps);
        ac.goal = AttackGoal::maximize;
        const AdvDataset adv_tr = generate_adv_dataset(f_std.models, data.train, ac);
        const AdvDataset adv_val = generate_adv_dataset(f_std.models, data.val, ac);
        for (std::size_t j = 0; j < adv_tr.size(); ++j) {
            save_dataset((out / ("adv_train_cell" + std::to_string(j) + ".csv")).string(), adv_tr[j]);
            save_dataset((out / ("adv_val_cell" + std::to_string(j) + ".csv")).string(), adv_val[j]);
        }
        meta["epsilon"] = eps;
        meta["source_models"] = f_std.id;
        res = adversarial_train(adv_tr, adv_val, arch, cfg.network, stats, tc);
    }
    json cells = json::array();
    for (std::size_t j = 0; j < res.size(); ++j) {
        res[j].model.arch = arch;
        save_model((out / ("cell" + std::to_string(j) + ".model")).string(), res[j].model);
        cells.push_back({{"cell", j},
                         {"epochs", res[j].history.size()},
                         {"best_epoch", res[j].best_epoch},
                         {"best_val_loss", res[j].best_val_loss},
                         {"early_stopped", res[j].early_stopped},
                         {"model_hash", model_hash(res[j].model)}});
        log << "cell " << j << ": " << res[j].history.size() << " epochs, best val loss " << fmt_sig(res[j].best_val_loss, 6)
            << " at epoch " << res[j].best_epoch << "\n";
    }
    meta["cells"] = cells;
    write_history(out / "history.csv", res);
    write_file(out / "meta.json", meta.dump(2) + "\n");
    return 0;
}

inline void save_adv_examples(const fs::path& out, const std::string& stem, const Dataset& clean, const std::vector<Eigen::MatrixXd>& adv,
                              const std::vector<Model>& models, const AttackConfig& ac) {
    for (std::size_t j = 0; j < adv.size(); ++j) {
        Dataset d = clean;
        d.provenance["adv_cell"] = std::to_string(j);
        d.provenance["adv_attack"] = to_string(ac.kind);
        d.provenance["adv_goal"] = to_string(ac.goal);
        d.provenance["adv_epsilon"] = fmt_exact(ac.epsilon);
        d.provenance["adv_source_model"] = model_hash(models[j]);
        for (std::size_t i = 0; i < d.size(); ++i) d.samples[i].positions = adv[j].col(static_cast<Eigen::Index>(i));
        save_dataset((out / (stem + "_cell" + std::to_string(j) + ".csv")).string(), d);
    }
}

inline int cmd_attack(const Options& o, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    require(o.data, "--data");
    require(o.models, "--models");
    require(o.out, "--out");
    const DataDir data = load_data_dir(o.data, cfg);
    const ModelSet ms = load_model_dir(o.models, cfg);
    const fs::path out(o.out);
    prepare_out(out, cfg, "attack");
    const Eigen::MatrixXd X = input_matrix(data.test);
    std::vector<AttackReport> reports;
    for (AttackKind k : cfg.attack.attacks)
        for (double e : cfg.attack.epsilons) {
            const AttackConfig ac = cfg.attack_config(k, e);
            std::vector<Eigen::MatrixXd> adv;
            AttackReport r = evaluate_attack(ms.models, X, ac, cfg.network.pmax_mw, &adv);
            r.model_id = ms.id;
            save_adv_examples(out, std::string("adv_") + to_string(k) + "_" + eps_tag(e), data.test, adv, ms.models, ac);
            log << ms.id << ' ' << to_string(k) << " eps=" << fmt_exact(e) << " rate=" << fmt_sig(r.aggregate_rate(), 4) << "\n";
            reports.push_back(std::move(r));
        }
    ReportBundle b;
    b.attacks = reports;
    emit_report(b, out.string());
    json meta;
    meta["model"] = ms.id;
    meta["models_meta"] = ms.meta;
    meta["dataset_hash"] = data.train_hash;
    write_file(out / "meta.json", meta.dump(2) + "\n");
    return 0;
}

inline int cmd_transfer(const Options& o, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    require(o.data, "--data");
    require(o.surrogate, "--surrogate");
    require(o.victim, "--victim");
    require(o.out, "--out");
    const DataDir data = load_data_dir(o.data, cfg);
    const ModelSet sur = load_model_dir(o.surrogate, cfg);
    const ModelSet vic = load_model_dir(o.victim, cfg);
    const std::string direction = std::string(to_string(sur.arch)) + "-" + to_string(vic.arch);
    if (!o.direction.empty() && o.direction != direction)
        throw data_error("--direction " + o.direction + " does not match the checkpoints (" + direction + ")");
    const fs::path out(o.out);
    prepare_out(out, cfg, "transfer");
    const Eigen::MatrixXd X = input_matrix(data.test);
    ReportBundle b;
    for (AttackKind k : cfg.attack.attacks)
        for (double e : cfg.attack.epsilons) {
            TransferReport r = transfer_eval(sur.models, sur.id, vic.models, vic.id, X, cfg.attack_config(k, e), cfg.network.pmax_mw);
            log << sur.id << " -> " << vic.id << ' ' << to_string(k) << " eps=" << fmt_exact(e)
                << " transfer=" << fmt_sig(r.transfer.aggregate_rate(), 4) << " whitebox=" << fmt_sig(r.whitebox.aggregate_rate(), 4) << "\n";
            b.transfers.push_back(std::move(r));
        }
    emit_report(b, out.string());
    json meta;
    meta["surrogate"] = sur.id;
    meta["victim"] = vic.id;
    meta["direction"] = direction;
    meta["dataset_hash"] = data.train_hash;
    write_file(out / "meta.json", meta.dump(2) + "\n");
    return 0;
}

/// Consolidates attack/transfer runs; with --data and --models also emits sum-SE CDFs.
inline int cmd_report(const Options& o, std::ostream& log) {
    require(o.out, "--out");
    const fs::path out(o.out);
    std::ostringstream white, black;
    white << "run,model,mode," << attack_csv_header() << '\n';
    black << "run," << transfer_csv_header() << '\n';
    int n_white = 0, n_black = 0;
    std::vector<fs::path> inputs;
    for (const auto& in : o.inputs) {
        if (!fs::is_directory(in)) throw data_error("report: not a directory: " + in);
        inputs.push_back(in);
    }
    std::sort(inputs.begin(), inputs.end());
    for (const auto& in : inputs) {
        const std::string run = in.filename().string();
        if (fs::exists(in / "attack_report.csv")) {
            const json meta = read_json(in / "meta.json");
            std::istringstream is(read_file(in / "attack_report.csv"));
            std::string line;
            std::getline(is, line);
            const std::string model = meta.at("model").get<std::string>();
            const std::string mode = meta.at("models_meta").at("mode").get<std::string>();
            while (std::getline(is, line))
                if (!line.empty()) {
                    white << run << ',' << model << ',' << mode << ',' << line << '\n';
                    ++n_white;
                }
        }
        if (fs::exists(in / "transfer_report.csv")) {
            std::istringstream is(read_file(in / "transfer_report.csv"));
            std::string line;
            std::getline(is, line);
            while (std::getline(is, line))
                if (!line.empty()) {
                    black << run << ',' << line << '\n';
                    ++n_black;
                }
        }
    }
    const bool want_se = !o.models.empty();
    if (n_white + n_black == 0 && !want_se) throw data_error("report: no attack or transfer reports found in the inputs");

    RunConfig cfg;
    if (want_se || !o.config.empty()) cfg = resolve_config(o);
    prepare_out(out, cfg, "report");
    if (n_white) write_file(out / "whitebox.csv", white.str());
    if (n_black) write_file(out / "blackbox.csv", black.str());

    if (want_se) {
        require(o.data, "--data");
        const DataDir data = load_data_dir(o.data, cfg);
        const ModelSet std_models = load_model_dir(o.models, cfg);
        const Precoder kind = data.test.provenance.count("precoder") ? parse_precoder(data.test.provenance.at("precoder")) : cfg.dataset.precoder;
        const std::vector<GainTable> gains = dataset_gains(data.test, kind, cfg.network, data.seed);
        const SEConfig se = cfg.se_config();
        const int K = cfg.network.K;
        const Eigen::MatrixXd X = input_matrix(data.test);
        if (!(o.se_eps >= 0.0 && o.se_eps < 0.5)) throw usage_error("--se-eps must lie in [0, 0.5)");
        AttackConfig ac = cfg.attack_config(AttackKind::pgdm, o.se_eps);
        if (!o.attack.empty()) {
            const auto kinds = parse_attack_list(o.attack);
            if (kinds.size() != 1) throw usage_error("report: --attack takes a single attack for the SE curves");
            ac.kind = kinds.front();
        }
        if (o.goal == "min") ac.goal = AttackGoal::minimize;
        else if (o.goal == "max") ac.goal = AttackGoal::maximize;
        else throw usage_error("--goal must be min or max");
        auto crafted = [&](const std::vector<Model>& ms) {
            std::vector<Eigen::MatrixXd> v;
            for (const auto& m : ms) v.push_back(craft(m, X, ac));
            return v;
        };
        ReportBundle b;
        const auto adv_std = crafted(std_models.models);
        b.cdfs.emplace_back("truth", sum_se_cdf(gains, truth_powers(data.test), cfg.network, se));
        b.cdfs.emplace_back("clean", sum_se_cdf(gains, dnn_powers(std_models.models, {X}, K), cfg.network, se));
        b.cdfs.emplace_back("attacked", sum_se_cdf(gains, dnn_powers(std_models.models, adv_std, K), cfg.network, se));
        b.cdfs.emplace_back("attacked_rescale", sum_se_cdf(gains, dnn_powers(std_models.models, adv_std, K, &data.test), cfg.network, se));
        if (!o.adv_models.empty()) {
            const ModelSet adv_models = load_model_dir(o.adv_models, cfg);
            b.cdfs.emplace_back("advtrained_rescale",
                                sum_se_cdf(gains, dnn_powers(adv_models.models, crafted(adv_models.models), K, &data.test), cfg.network, se));
        }
        emit_report(b, out.string());
        json meta;
        meta["se_tau_c"] = se.tau_c;
        meta["se_tau_d"] = se.tau_d;
        meta["se_attack"] = to_string(ac.kind);
        meta["se_goal"] = to_string(ac.goal);
        meta["se_epsilon"] = ac.epsilon;
        for (const auto& [name, cdf] : b.cdfs) meta["median_sum_se"][name] = cdf_median(cdf);
        write_file(out / "se_meta.json", meta.dump(2) + "\n");
        for (const auto& [name, cdf] : b.cdfs) log << "sum SE median " << name << ": " << fmt_sig(cdf_median(cdf), 5) << "\n";
    }
    log << "report: " << n_white << " white-box rows, " << n_black << " black-box rows\n";
    return 0;
}

inline int cmd_verify(const Options& o, std::ostream& log) {
    require(o.data, "--data");
    RunConfig cfg;
    const bool have_cfg = !o.config.empty();
    if (have_cfg) cfg = resolve_config(o);
    Dataset clean;
    if (!o.clean.empty()) clean = load_dataset(o.clean);
    const VerifyResult r = verify_path(o.data, have_cfg ? &cfg.network : nullptr, o.clean.empty() ? nullptr : &clean);
    for (const auto& p : r.problems) log << "verify: " << p << "\n";
    log << "verify: " << r.files << " files, " << r.problems.size() << " problems\n";
    return r.problems.empty() ? 0 : 2;
}

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Adversarial attacks on learned massive-MIMO power allocation"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* c) {
        c->add_option("--config", o.config, "JSON run configuration");
        c->add_option("--seed", o.seed, "root seed (overrides the config)");
        c->add_option("--out", o.out, "output directory");
    };
    auto* gen = app.add_subcommand("generate", "generate and split the dataset");
    common(gen);
    gen->add_option("--precoder", o.precoder, "mr or mmse");
    gen->add_flag("--verify", o.verify, "run the invariant scan on the result");

    auto* tr = app.add_subcommand("train", "train one model per cell");
    common(tr);
    tr->add_option("--data", o.data, "dataset directory");
    tr->add_option("--arch", o.arch, "m1 or m2");
    tr->add_option("--precoder", o.precoder, "mr or mmse");
    tr->add_option("--mode", o.mode, "standard or adversarial");
    tr->add_option("--std", o.std_models, "standard checkpoints (adversarial mode)");
    tr->add_option("--eps", o.eps, "adversarial training epsilon");

    auto* at = app.add_subcommand("attack", "white-box attacks on the test split");
    common(at);
    at->add_option("--data", o.data, "dataset directory");
    at->add_option("--models", o.models, "checkpoint directory");
    at->add_option("--attack", o.attack, "comma-separated list of fgsm,pgdm,mifgsm,random");
    at->add_option("--eps", o.eps, "comma-separated epsilon list (meters)");
    at->add_option("--arch", o.arch, "ignored; the checkpoints carry their architecture");
    at->add_option("--precoder", o.precoder, "mr or mmse");

    auto* tf = app.add_subcommand("transfer", "black-box transfer from a surrogate to a victim");
    common(tf);
    tf->add_option("--data", o.data, "dataset directory");
    tf->add_option("--surrogate", o.surrogate, "surrogate checkpoint directory");
    tf->add_option("--victim", o.victim, "victim checkpoint directory");
    tf->add_option("--direction", o.direction, "expected direction, e.g. m1-m2");
    tf->add_option("--attack", o.attack, "comma-separated attack list");
    tf->add_option("--eps", o.eps, "comma-separated epsilon list (meters)");

    auto* rp = app.add_subcommand("report", "consolidate reports and emit sum-SE CDFs");
    common(rp);
    rp->add_option("--in", o.inputs, "attack or transfer output directories");
    rp->add_option("--data", o.data, "dataset directory (SE curves)");
    rp->add_option("--models", o.models, "standard checkpoints (SE curves)");
    rp->add_option("--adv-models", o.adv_models, "adversarially trained checkpoints (SE curves)");
    rp->add_option("--attack", o.attack, "attack used for the SE curves (default pgdm)");
    rp->add_option("--se-eps", o.se_eps, "epsilon used for the SE curves");
    rp->add_option("--goal", o.goal, "min or max: direction of the SE-curve attack");

    auto* vf = app.add_subcommand("verify", "invariant scan of dataset and adversarial-example files");
    vf->add_option("--config", o.config, "JSON run configuration");
    vf->add_option("--data", o.data, "dataset file or directory");
    vf->add_option("--clean", o.clean, "clean dataset the adversarial files were derived from");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, log, err);
        return code == 0 ? 0 : 1;
    }
    try {
        if (gen->parsed()) return cmd_generate(o, log);
        if (tr->parsed()) return cmd_train(o, log);
        if (at->parsed()) return cmd_attack(o, log);
        if (tf->parsed()) return cmd_transfer(o, log);
        if (rp->parsed()) return cmd_report(o, log);
        if (vf->parsed()) return cmd_verify(o, log);
    } catch (const usage_error& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    } catch (const numerical_error& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const data_error& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace mmadv::cli
