#pragma once

// Spectral efficiency, sum-SE CDFs, black-box transfer evaluation and CSV
// report emission / parsing.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmadv/attacks.hpp"
#include "mmadv/channel.hpp"
#include "mmadv/common.hpp"
#include "mmadv/defense.hpp"
#include "mmadv/nn.hpp"

namespace mmadv {

struct SEConfig {
    int tau_c = 200;
    int tau_d = 185;

    /// tau_c = 200, tau_d = 190 - tau_p with tau_p = K.
    static SEConfig for_network(const NetworkConfig& cfg) { return {200, 190 - cfg.K}; }

    void validate() const {
        if (!(tau_c > 0 && tau_d > 0 && tau_d <= tau_c)) throw std::invalid_argument("SEConfig: need 0 < tau_d <= tau_c");
    }
    double prelog() const { return static_cast<double>(tau_d) / static_cast<double>(tau_c); }
};

inline double spectral_efficiency(double gamma, const SEConfig& se) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("spectral_efficiency: gamma must be >= 0");
    return se.prelog() * std::log2(1.0 + gamma);
}

/// Sum over all UEs of the SE achieved by powers `rho` (mW, cell-major).
inline double sum_se(const GainTable& g, const Eigen::Ref<const Eigen::VectorXd>& rho, const NetworkConfig& cfg, const SEConfig& se) {
    const Eigen::VectorXd gamma = sinr(g, rho, cfg);
    double total = 0.0;
    for (Eigen::Index u = 0; u < gamma.size(); ++u) total += spectral_efficiency(gamma(u), se);
    return total;
}

enum class PowerSource { truth, clean, attacked, attacked_rescale, advtrained_rescale };

inline const char* to_string(PowerSource s) {
    switch (s) {
        case PowerSource::truth: return "truth";
        case PowerSource::clean: return "clean";
        case PowerSource::attacked: return "attacked";
        case PowerSource::attacked_rescale: return "attacked_rescale";
        case PowerSource::advtrained_rescale: return "advtrained_rescale";
    }
    return "?";
}

struct CdfPoint {
    double value = 0.0;
    double cdf = 0.0;
    friend bool operator==(const CdfPoint&, const CdfPoint&) = default;
};

/// Empirical CDF over all values: sorted, point i (1-based) has cdf i/N.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("empirical_cdf: no samples");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("empirical_cdf: non-finite value");
    std::sort(values.begin(), values.end());
    std::vector<CdfPoint> out(values.size());
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = {values[i], static_cast<double>(i + 1) / n};
    return out;
}

/// Lower median of the CDF's sample values.
inline double cdf_median(const std::vector<CdfPoint>& cdf) {
    if (cdf.empty()) throw std::invalid_argument("cdf_median: empty");
    return cdf[(cdf.size() - 1) / 2].value;
}

/// DNN powers of every cell, one column per sample (LK x N). Cell j's model sees
/// inputs[j] (or inputs[0] when a single matrix is shared). Entries clamped at 0;
/// with `truth` given, each cell is rescaled to the true cell sum.
inline Eigen::MatrixXd dnn_powers(const std::vector<Model>& models, const std::vector<Eigen::MatrixXd>& inputs, int K,
                                  const Dataset* truth = nullptr) {
    if (models.empty() || inputs.empty()) throw std::invalid_argument("dnn_powers: no models or inputs");
    const Eigen::Index N = inputs.front().cols();
    const auto L = static_cast<Eigen::Index>(models.size());
    Eigen::MatrixXd P(L * K, N);
    for (std::size_t j = 0; j < models.size(); ++j) {
        const auto& X = inputs.size() == 1 ? inputs.front() : inputs.at(j);
        const Eigen::MatrixXd out = forward_batch(models[j], X).topRows(K).cwiseMax(0.0);
        const auto row = static_cast<Eigen::Index>(j) * K;
        for (Eigen::Index c = 0; c < N; ++c) {
            if (truth)
                P.col(c).segment(row, K) = rescale_powers(out.col(c), truth->samples[static_cast<std::size_t>(c)].sums(static_cast<Eigen::Index>(j))).powers;
            else
                P.col(c).segment(row, K) = out.col(c);
        }
    }
    return P;
}

inline Eigen::MatrixXd truth_powers(const Dataset& d) {
    Eigen::MatrixXd P(d.L * d.K, static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) P.col(static_cast<Eigen::Index>(i)) = d.samples[i].powers;
    return P;
}

/// Sum SE per sample for power columns P, each evaluated on its own sample's gains.
inline std::vector<double> sum_se_values(const std::vector<GainTable>& gains, const Eigen::MatrixXd& P, const NetworkConfig& cfg,
                                         const SEConfig& se) {
    if (gains.size() != static_cast<std::size_t>(P.cols())) throw std::invalid_argument("sum_se_values: gains/powers size mismatch");
    se.validate();
    std::vector<double> v;
    v.reserve(gains.size());
    for (std::size_t i = 0; i < gains.size(); ++i) v.push_back(sum_se(gains[i], P.col(static_cast<Eigen::Index>(i)), cfg, se));
    return v;
}

inline std::vector<CdfPoint> sum_se_cdf(const std::vector<GainTable>& gains, const Eigen::MatrixXd& P, const NetworkConfig& cfg,
                                        const SEConfig& se) {
    return empirical_cdf(sum_se_values(gains, P, cfg, se));
}

/// Gains of every sample, rebuilt from stored positions with the dataset's seed.
inline std::vector<GainTable> dataset_gains(const Dataset& d, Precoder kind, const NetworkConfig& cfg, std::uint64_t dataset_seed) {
    std::vector<GainTable> g;
    g.reserve(d.size());
    for (const auto& s : d.samples) g.push_back(sample_gains(s, kind, cfg, dataset_seed));
    return g;
}

// --- transferability ---------------------------------------------------------

struct TransferReport {
    std::string surrogate_id;
    std::string victim_id;
    AttackReport transfer;  // crafted on surrogate, scored on victim
    AttackReport whitebox;  // crafted and scored on victim
};

inline TransferReport transfer_eval(const std::vector<Model>& surrogate, const std::string& surrogate_id,
                                    const std::vector<Model>& victim, const std::string& victim_id, const Eigen::MatrixXd& X,
                                    const AttackConfig& cfg, double pmax) {
    TransferReport r;
    r.surrogate_id = surrogate_id;
    r.victim_id = victim_id;
    r.transfer = evaluate_transfer(surrogate, victim, X, cfg, pmax);
    r.transfer.model_id = victim_id;
    r.whitebox = evaluate_attack(victim, X, cfg, pmax);
    r.whitebox.model_id = victim_id;
    return r;
}

// --- CSV emission and parsing --------------------------------------------------

inline const char* transfer_csv_header() { return "surrogate,victim,cell,attack,epsilon,d_eps_cm,n,infeasible,rate"; }
inline const char* cdf_csv_header() { return "sum_se_bps_hz,cdf"; }

inline void write_attack_csv(std::ostream& os, const std::vector<AttackReport>& reports) {
    os << attack_csv_header() << '\n';
    for (const auto& r : reports) write_attack_rows(os, r);
}

/// Transfer rows, then the matched white-box rows labeled surrogate = victim.
inline void write_transfer_csv(std::ostream& os, const std::vector<TransferReport>& reports) {
    os << transfer_csv_header() << '\n';
    for (const auto& r : reports) write_attack_rows(os, r.transfer, r.surrogate_id + ',' + r.victim_id + ',');
    for (const auto& r : reports) write_attack_rows(os, r.whitebox, r.victim_id + ',' + r.victim_id + ',');
}

inline void write_cdf_csv(std::ostream& os, const std::vector<CdfPoint>& cdf) {
    if (cdf.empty()) throw std::invalid_argument("write_cdf_csv: empty CDF");
    os << cdf_csv_header() << '\n';
    for (const auto& p : cdf) os << fmt_exact(p.value) << ',' << fmt_exact(p.cdf) << '\n';
}

struct ReportRow {
    std::string surrogate;  // empty for attack reports
    std::string victim;
    int cell = -1;  // -1 for the aggregate row
    AttackKind attack = AttackKind::pgdm;
    double epsilon = 0.0;
    double d_eps_cm = 0.0;
    long long n = 0;
    long long infeasible = 0;
    double rate = 0.0;
    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// Parses an attack or transfer CSV (detected from the header).
inline std::vector<ReportRow> read_report_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw data_error("report: empty file");
    const bool transfer = line == transfer_csv_header();
    if (!transfer && line != attack_csv_header()) throw data_error("report: unexpected header '" + line + "'");
    std::vector<ReportRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != (transfer ? 9u : 7u)) throw data_error("report: wrong field count in '" + line + "'");
        ReportRow r;
        std::size_t c = 0;
        if (transfer) {
            r.surrogate = std::string(f[c++]);
            r.victim = std::string(f[c++]);
        }
        r.cell = f[c] == "all" ? -1 : static_cast<int>(parse_int(f[c]));
        ++c;
        r.attack = parse_attack(f[c++]);
        r.epsilon = parse_double(f[c++]);
        r.d_eps_cm = parse_double(f[c++]);
        r.n = parse_int(f[c++]);
        r.infeasible = parse_int(f[c++]);
        r.rate = parse_double(f[c++]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<CdfPoint> read_cdf_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != cdf_csv_header()) throw data_error("cdf: unexpected header");
    std::vector<CdfPoint> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 2) throw data_error("cdf: wrong field count");
        out.push_back({parse_double(f[0]), parse_double(f[1])});
    }
    return out;
}

struct ReportBundle {
    std::vector<AttackReport> attacks;
    std::vector<TransferReport> transfers;
    std::vector<std::pair<std::string, std::vector<CdfPoint>>> cdfs;  // (name, curve)
};

/// Writes attack_report.csv, transfer_report.csv and cdf_<name>.csv into `dir`
/// for the non-empty parts of the bundle.
inline std::vector<std::string> emit_report(const ReportBundle& b, const std::string& dir) {
    if (b.attacks.empty() && b.transfers.empty() && b.cdfs.empty()) throw std::invalid_argument("emit_report: nothing to write");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw data_error("cannot create " + dir + ": " + ec.message());
    std::vector<std::string> written;
    auto open = [&](const std::string& name) {
        const std::string path = (std::filesystem::path(dir) / name).string();
        std::ofstream os(path, std::ios::binary);
        if (!os) throw data_error("cannot write " + path);
        written.push_back(path);
        return os;
    };
    if (!b.attacks.empty()) {
        auto os = open("attack_report.csv");
        write_attack_csv(os, b.attacks);
    }
    if (!b.transfers.empty()) {
        auto os = open("transfer_report.csv");
        write_transfer_csv(os, b.transfers);
    }
    for (const auto& [name, cdf] : b.cdfs) {
        auto os = open("cdf_" + name + ".csv");
        write_cdf_csv(os, cdf);
    }
    return written;
}

}  // namespace mmadv
