#pragma once

// JSON run configuration for the mmadv command-line tool. Unknown keys are
// rejected; every field has a default, so "{}" is a valid config.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "mmadv/attacks.hpp"
#include "mmadv/evalreport.hpp"
#include "mmadv/geometry.hpp"
#include "mmadv/nn.hpp"

namespace mmadv::cli {

using json = nlohmann::ordered_json;

struct DatasetConfig {
    int n_train = 5000;
    int n_val = 500;
    int n_test = 500;
    Precoder precoder = Precoder::mr;
    unsigned threads = 0;
};

struct AttackDefaults {
    std::vector<AttackKind> attacks{AttackKind::fgsm, AttackKind::pgdm, AttackKind::mifgsm, AttackKind::random};
    std::vector<double> epsilons{0.1, 0.2, 0.3};
    double alpha = 0.01;
    int Q = 40;
    double mu = 0.1;
    int I = 10;
    double beta = -1.0;  // negative: epsilon / I
    AttackGoal goal = AttackGoal::maximize;
};

struct DefenseConfig {
    double epsilon = 0.2;
};

struct RunConfig {
    std::uint64_t seed = 1;
    NetworkConfig network;
    DatasetConfig dataset;
    TrainConfig train;  // train.seed is derived from `seed`, not read
    AttackDefaults attack;
    DefenseConfig defense;
    SEConfig se;
    bool se_set = false;

    SEConfig se_config() const { return se_set ? se : SEConfig::for_network(network); }

    AttackConfig attack_config(AttackKind kind, double eps) const {
        AttackConfig a;
        a.kind = kind;
        a.epsilon = eps;
        a.alpha = attack.alpha;
        a.Q = attack.Q;
        a.mu = attack.mu;
        a.I = attack.I;
        a.beta = attack.beta;
        a.goal = attack.goal;
        a.seed = derive_seed(seed, "random-perturbation");
        return a;
    }

    std::uint64_t dataset_seed() const { return derive_seed(seed, "dataset"); }
    std::uint64_t split_seed() const { return derive_seed(seed, "split"); }
    /// Shared by standard and adversarial training of one architecture.
    std::uint64_t train_seed(Arch arch) const { return derive_seed(seed, std::string("train-") + to_string(arch)); }
};

namespace detail {

inline void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw data_error(std::string("config: '") + section + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw data_error(std::string("config: unknown key '") + k + "' in " + section);
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw data_error(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
    using detail::read;
    RunConfig c;
    detail::reject_unknown(j, "top level", {"seed", "network", "dataset", "train", "attack", "defense", "se"});
    read(j, "seed", c.seed);
    if (j.contains("network")) {
        const auto& n = j["network"];
        detail::reject_unknown(n, "network",
                               {"L", "K", "M", "pmax_mw", "noise_dbm", "noise_var_mw", "cell_side_m", "min_bs_distance_m", "pathloss_ref_db",
                                "pathloss_exponent", "pathloss_ref_distance_m", "pilot_power_mw", "mc_realizations", "bandwidth_hz"});
        auto& nc = c.network;
        read(n, "L", nc.L);
        read(n, "K", nc.K);
        read(n, "M", nc.M);
        read(n, "pmax_mw", nc.pmax_mw);
        if (n.contains("noise_dbm") && n.contains("noise_var_mw")) throw data_error("config: give noise_dbm or noise_var_mw, not both");
        read(n, "noise_var_mw", nc.noise_var_mw);
        if (n.contains("noise_dbm")) {
            double dbm = 0.0;
            read(n, "noise_dbm", dbm);
            nc.noise_var_mw = dbm_to_mw(dbm);
        }
        read(n, "cell_side_m", nc.cell_side_m);
        read(n, "min_bs_distance_m", nc.min_bs_distance_m);
        read(n, "pathloss_ref_db", nc.pathloss_ref_db);
        read(n, "pathloss_exponent", nc.pathloss_exponent);
        read(n, "pathloss_ref_distance_m", nc.pathloss_ref_distance_m);
        read(n, "pilot_power_mw", nc.pilot_power_mw);
        read(n, "mc_realizations", nc.mc_realizations);
        read(n, "bandwidth_hz", nc.bandwidth_hz);
    }
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        detail::reject_unknown(d, "dataset", {"n_train", "n_val", "n_test", "precoder", "threads"});
        read(d, "n_train", c.dataset.n_train);
        read(d, "n_val", c.dataset.n_val);
        read(d, "n_test", c.dataset.n_test);
        read(d, "threads", c.dataset.threads);
        if (d.contains("precoder")) {
            std::string p;
            read(d, "precoder", p);
            c.dataset.precoder = parse_precoder(p);
        }
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        detail::reject_unknown(t, "train", {"learning_rate", "beta1", "beta2", "adam_eps", "batch_size", "max_epochs", "patience"});
        read(t, "learning_rate", c.train.learning_rate);
        read(t, "beta1", c.train.beta1);
        read(t, "beta2", c.train.beta2);
        read(t, "adam_eps", c.train.adam_eps);
        read(t, "batch_size", c.train.batch_size);
        read(t, "max_epochs", c.train.max_epochs);
        read(t, "patience", c.train.patience);
    }
    if (j.contains("attack")) {
        const auto& a = j["attack"];
        detail::reject_unknown(a, "attack", {"attacks", "epsilons", "alpha", "Q", "mu", "I", "beta", "goal"});
        if (a.contains("attacks")) {
            std::vector<std::string> names;
            read(a, "attacks", names);
            c.attack.attacks.clear();
            for (const auto& s : names) c.attack.attacks.push_back(parse_attack(s));
        }
        read(a, "epsilons", c.attack.epsilons);
        read(a, "alpha", c.attack.alpha);
        read(a, "Q", c.attack.Q);
        read(a, "mu", c.attack.mu);
        read(a, "I", c.attack.I);
        read(a, "beta", c.attack.beta);
        if (a.contains("goal")) {
            std::string g;
            read(a, "goal", g);
            if (g == "max") c.attack.goal = AttackGoal::maximize;
            else if (g == "min") c.attack.goal = AttackGoal::minimize;
            else throw data_error("config: attack.goal must be 'max' or 'min'");
        }
    }
    if (j.contains("defense")) {
        const auto& d = j["defense"];
        detail::reject_unknown(d, "defense", {"epsilon"});
        read(d, "epsilon", c.defense.epsilon);
    }
    if (j.contains("se")) {
        const auto& s = j["se"];
        detail::reject_unknown(s, "se", {"tau_c", "tau_d"});
        c.se = SEConfig::for_network(c.network);
        read(s, "tau_c", c.se.tau_c);
        read(s, "tau_d", c.se.tau_d);
        c.se_set = true;
    }
    return c;
}

/// Throws data_error on any out-of-range value.
inline void validate(const RunConfig& c) {
    try {
        c.network.validate();
        TrainConfig t = c.train;
        t.validate();
        c.se_config().validate();
        for (double e : c.attack.epsilons) c.attack_config(AttackKind::pgdm, e).validate();
        c.attack_config(AttackKind::pgdm, c.defense.epsilon).validate();
    } catch (const std::invalid_argument& e) {
        throw data_error(std::string("config: ") + e.what());
    }
    if (c.dataset.n_train < 1 || c.dataset.n_val < 1 || c.dataset.n_test < 1)
        throw data_error("config: dataset sizes must be >= 1");
    if (c.attack.attacks.empty() || c.attack.epsilons.empty()) throw data_error("config: empty attack or epsilon list");
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("cannot read config " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw data_error("config " + path + ": " + e.what());
    }
    RunConfig c = parse_run_config(j);
    validate(c);
    return c;
}

/// Fully resolved configuration; parse_run_config(to_json(c)) reproduces c.
inline json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    const auto& n = c.network;
    j["network"] = {{"L", n.L},
                    {"K", n.K},
                    {"M", n.M},
                    {"pmax_mw", n.pmax_mw},
                    {"noise_var_mw", n.noise_var_mw},
                    {"cell_side_m", n.cell_side_m},
                    {"min_bs_distance_m", n.min_bs_distance_m},
                    {"pathloss_ref_db", n.pathloss_ref_db},
                    {"pathloss_exponent", n.pathloss_exponent},
                    {"pathloss_ref_distance_m", n.pathloss_ref_distance_m},
                    {"pilot_power_mw", n.pilot_power_mw},
                    {"mc_realizations", n.mc_realizations},
                    {"bandwidth_hz", n.bandwidth_hz}};
    j["dataset"] = {{"n_train", c.dataset.n_train},
                    {"n_val", c.dataset.n_val},
                    {"n_test", c.dataset.n_test},
                    {"precoder", to_string(c.dataset.precoder)},
                    {"threads", c.dataset.threads}};
    j["train"] = {{"learning_rate", c.train.learning_rate}, {"beta1", c.train.beta1},       {"beta2", c.train.beta2},
                  {"adam_eps", c.train.adam_eps},           {"batch_size", c.train.batch_size}, {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience}};
    json attacks = json::array();
    for (auto k : c.attack.attacks) attacks.push_back(to_string(k));
    j["attack"] = {{"attacks", attacks},   {"epsilons", c.attack.epsilons}, {"alpha", c.attack.alpha},
                   {"Q", c.attack.Q},       {"mu", c.attack.mu},             {"I", c.attack.I},
                   {"beta", c.attack.beta}, {"goal", to_string(c.attack.goal)}};
    j["defense"] = {{"epsilon", c.defense.epsilon}};
    const SEConfig se = c.se_config();
    j["se"] = {{"tau_c", se.tau_c}, {"tau_d", se.tau_d}};
    return j;
}

}  // namespace mmadv::cli
