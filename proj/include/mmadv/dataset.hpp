#pragma once

// Supervised dataset: UE positions (2LK reals, meters) -> max-product powers
// (L*K reals, mW) and per-cell power sums.
//
// File format, one header line then one record per line:
//   format=mmadv-dataset/1,config_hash=<hex>,L=<int>,K=<int>,M=<int>,Pmax=<num>
//   # key=value            (optional provenance lines)
//   id,x,y,...(2LK positions),p_00,...,p_{L-1,K-1},s_0,...,s_{L-1}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mmadv/channel.hpp"
#include "mmadv/common.hpp"
#include "mmadv/geometry.hpp"
#include "mmadv/powopt.hpp"

namespace mmadv {

struct Sample {
    long long id = 0;
    Eigen::VectorXd positions;  // 2LK: cell 0 ue 0 x, y, cell 0 ue 1 x, y, ...
    Eigen::VectorXd powers;     // L*K, mW, cell-major
    Eigen::VectorXd sums;       // L, mW

    friend bool operator==(const Sample& a, const Sample& b) {
        return a.id == b.id && a.positions == b.positions && a.powers == b.powers && a.sums == b.sums;
    }
};

struct Dataset {
    std::string config_hash;
    int L = 0;
    int K = 0;
    int M = 0;
    double pmax_mw = 0.0;
    std::map<std::string, std::string> provenance;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    /// Same header, no samples.
    Dataset like() const {
        Dataset d = *this;
        d.samples.clear();
        return d;
    }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Dataset empty_dataset(const NetworkConfig& cfg) {
    Dataset d;
    d.config_hash = cfg.hash();
    d.L = cfg.L;
    d.K = cfg.K;
    d.M = cfg.M;
    d.pmax_mw = cfg.pmax_mw;
    return d;
}

/// Generated positions are rounded to 9 significant digits to keep files compact.
inline double quantize_position(double v) { return parse_double(fmt_sig(v, 9)); }

inline Eigen::VectorXd positions_vector(const UEDrop& drop) {
    Eigen::VectorXd x(2 * static_cast<Eigen::Index>(drop.positions.size()));
    for (std::size_t u = 0; u < drop.positions.size(); ++u) {
        x(2 * static_cast<Eigen::Index>(u)) = drop.positions[u].x;
        x(2 * static_cast<Eigen::Index>(u) + 1) = drop.positions[u].y;
    }
    return x;
}

inline UEDrop drop_from_positions(const Eigen::Ref<const Eigen::VectorXd>& x) {
    UEDrop d;
    for (Eigen::Index u = 0; u < x.size() / 2; ++u) d.positions.push_back({x(2 * u), x(2 * u + 1)});
    return d;
}

inline Eigen::VectorXd cell_sums(const Eigen::VectorXd& powers, int L, int K) {
    Eigen::VectorXd s(L);
    for (int j = 0; j < L; ++j) s(j) = power_sum(powers.segment(j * K, K));
    return s;
}

/// Seed of the Monte-Carlo gain estimate for sample `id`. Depends only on the
/// dataset seed and id so gains can be rebuilt from a stored record.
inline std::uint64_t sample_gains_seed(std::uint64_t seed, long long id) {
    return derive_seed(seed, {static_cast<std::uint64_t>(id), 1});
}

inline std::uint64_t sample_drop_seed(std::uint64_t seed, long long id, int attempt) {
    return derive_seed(seed, {static_cast<std::uint64_t>(id), 0, static_cast<std::uint64_t>(attempt)});
}

/// Gains for a stored sample, recomputed from its positions.
inline GainTable sample_gains(const Sample& s, Precoder kind, const NetworkConfig& cfg, std::uint64_t dataset_seed) {
    return estimate_gains(drop_from_positions(s.positions), kind, cfg, sample_gains_seed(dataset_seed, s.id));
}

struct GenerationLog {
    int regenerated = 0;
    int unconverged_attempts = 0;
};

namespace detail {

inline Sample make_sample(const NetworkConfig& cfg, Precoder kind, std::uint64_t seed, long long id, GenerationLog& log) {
    for (int attempt = 0;; ++attempt) {
        UEDrop drop = drop_ues(cfg, sample_drop_seed(seed, id, attempt));
        for (auto& p : drop.positions) p = {quantize_position(p.x), quantize_position(p.y)};
        try {
            const GainTable g = estimate_gains(drop, kind, cfg, sample_gains_seed(seed, id));
            const PowerAllocation alloc = maxprod_solve(g, cfg);
            if (!alloc.converged) {
                ++log.unconverged_attempts;
                throw numerical_error("solver did not converge");
            }
            Sample s;
            s.id = id;
            s.positions = positions_vector(drop);
            s.powers = alloc.rho;
            s.sums = cell_sums(s.powers, cfg.L, cfg.K);
            return s;
        } catch (const std::runtime_error&) {
            ++log.regenerated;
            if (attempt >= 20) throw;
        }
    }
}

}  // namespace detail

/// n samples: drop -> Monte-Carlo gains -> max-product powers, sample i using
/// seeds derived from (seed, first_id + i). Samples whose solve fails are
/// redrawn; more than 1% redraws aborts with numerical_error.
inline Dataset generate_dataset(const NetworkConfig& cfg, int n, Precoder kind, std::uint64_t seed,
                                unsigned threads = 0, GenerationLog* log_out = nullptr, long long first_id = 0) {
    cfg.validate();
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(n));

    Dataset d = empty_dataset(cfg);
    d.provenance["seed"] = std::to_string(seed);
    d.provenance["precoder"] = to_string(kind);
    d.provenance["first_id"] = std::to_string(first_id);
    d.samples.resize(static_cast<std::size_t>(n));
    std::vector<GenerationLog> logs(threads);
    std::vector<std::exception_ptr> errors(threads);
    auto work = [&](unsigned t) {
        try {
            for (int i = static_cast<int>(t); i < n; i += static_cast<int>(threads))
                d.samples[static_cast<std::size_t>(i)] = detail::make_sample(cfg, kind, seed, first_id + i, logs[t]);
        } catch (...) {
            errors[t] = std::current_exception();
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    GenerationLog total;
    for (const auto& l : logs) {
        total.regenerated += l.regenerated;
        total.unconverged_attempts += l.unconverged_attempts;
    }
    if (log_out) *log_out = total;
    if (total.regenerated * 100 > n)
        throw numerical_error("generate_dataset: regeneration rate above 1% (" + std::to_string(total.regenerated) + " of " +
                              std::to_string(n) + ")");
    return d;
}

// --- persistence -----------------------------------------------------------

inline void write_dataset(std::ostream& os, const Dataset& d) {
    os << "format=mmadv-dataset/1,config_hash=" << d.config_hash << ",L=" << d.L << ",K=" << d.K << ",M=" << d.M
       << ",Pmax=" << fmt_exact(d.pmax_mw) << '\n';
    for (const auto& [k, v] : d.provenance) os << "# " << k << '=' << v << '\n';
    std::string line;
    for (const auto& s : d.samples) {
        line = std::to_string(s.id);
        for (Eigen::Index i = 0; i < s.positions.size(); ++i) (line += ',') += fmt_exact(s.positions(i));
        for (Eigen::Index i = 0; i < s.powers.size(); ++i) (line += ',') += fmt_exact(s.powers(i));
        for (Eigen::Index i = 0; i < s.sums.size(); ++i) (line += ',') += fmt_exact(s.sums(i));
        os << line << '\n';
    }
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline Dataset read_dataset(std::istream& is) {
    Dataset d;
    std::string line;
    if (!std::getline(is, line)) throw data_error("dataset: empty file");
    std::map<std::string, std::string, std::less<>> header;
    for (auto field : split_fields(line)) {
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) throw data_error("dataset: malformed header field");
        header.emplace(std::string(field.substr(0, eq)), std::string(field.substr(eq + 1)));
    }
    auto need = [&](const char* key) -> const std::string& {
        auto it = header.find(key);
        if (it == header.end()) throw data_error(std::string("dataset: header missing ") + key);
        return it->second;
    };
    if (need("format") != "mmadv-dataset/1") throw data_error("dataset: unsupported format " + need("format"));
    d.config_hash = need("config_hash");
    d.L = static_cast<int>(parse_int(need("L")));
    d.K = static_cast<int>(parse_int(need("K")));
    d.M = static_cast<int>(parse_int(need("M")));
    d.pmax_mw = parse_double(need("Pmax"));
    if (d.L < 1 || d.K < 1) throw data_error("dataset: bad dimensions");

    const int U = d.L * d.K;
    const std::size_t expected = 1 + 2 * static_cast<std::size_t>(U) + static_cast<std::size_t>(U) + static_cast<std::size_t>(d.L);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string_view body(line);
            body.remove_prefix(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) throw data_error("dataset: malformed provenance line");
            d.provenance[std::string(body.substr(0, eq))] = std::string(body.substr(eq + 1));
            continue;
        }
        const auto f = split_fields(line);
        if (f.size() != expected) throw data_error("dataset: record has " + std::to_string(f.size()) + " fields, expected " +
                                                   std::to_string(expected));
        Sample s;
        s.id = parse_int(f[0]);
        s.positions.resize(2 * U);
        s.powers.resize(U);
        s.sums.resize(d.L);
        std::size_t c = 1;
        for (int i = 0; i < 2 * U; ++i) s.positions(i) = parse_double(f[c++]);
        for (int i = 0; i < U; ++i) s.powers(i) = parse_double(f[c++]);
        for (int i = 0; i < d.L; ++i) s.sums(i) = parse_double(f[c++]);
        if (s.sums != cell_sums(s.powers, d.L, d.K)) throw data_error("dataset: stored sums disagree with powers, id " + std::to_string(s.id));
        d.samples.push_back(std::move(s));
    }
    return d;
}

inline void save_dataset(const std::string& path, const Dataset& d) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot write " + path);
    write_dataset(os, d);
    if (!os) throw data_error("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error("cannot read " + path);
    return read_dataset(is);
}

// --- splitting and normalization -------------------------------------------

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    Dataset train, val, test;
};

/// Seeded shuffle, then contiguous train / val / test slices of sizes
/// round(f_train n), round(f_val n) and the remainder.
inline DatasetSplit split(const Dataset& d, SplitFractions fr, std::uint64_t seed) {
    if (fr.train < 0 || fr.val < 0 || fr.test < 0 || std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must be nonnegative and sum to 1");
    const std::size_t n = d.size();
    if (n == 0) throw std::invalid_argument("split: empty dataset");
    const auto n_train = static_cast<std::size_t>(std::llround(fr.train * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(fr.val * static_cast<double>(n))));
    const std::size_t n_test = n - n_train - n_val;
    if ((fr.train > 0 && n_train == 0) || (fr.val > 0 && n_val == 0) || (fr.test > 0 && n_test == 0))
        throw std::invalid_argument("split: a requested part would be empty");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    DatasetSplit out{d.like(), d.like(), d.like()};
    for (std::size_t i = 0; i < n; ++i) {
        auto& part = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
        part.samples.push_back(d.samples[order[i]]);
    }
    return out;
}

struct NormalizationStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    double power_scale = 1.0;  // mW

    std::string hash() const {
        std::string s = fmt_exact(power_scale);
        for (Eigen::Index i = 0; i < mean.size(); ++i) (s += ',') += fmt_exact(mean(i));
        for (Eigen::Index i = 0; i < std.size(); ++i) (s += ',') += fmt_exact(std(i));
        return hex64(fnv1a64(s));
    }
    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Per-coordinate mean and (population) std of the training positions, std
/// floored at 1e-6; power scale Pmax.
inline NormalizationStats normalization_stats(const Dataset& train) {
    if (train.empty()) throw std::invalid_argument("normalization_stats: empty training split");
    const Eigen::Index D = train.samples.front().positions.size();
    const double n = static_cast<double>(train.size());
    NormalizationStats st;
    st.mean = Eigen::VectorXd::Zero(D);
    for (const auto& s : train.samples) st.mean += s.positions;
    st.mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(D);
    for (const auto& s : train.samples) var += (s.positions - st.mean).cwiseAbs2();
    st.std = (var / n).cwiseSqrt().cwiseMax(1e-6);
    st.power_scale = train.pmax_mw;
    return st;
}

/// Positions as columns of a (2LK x N) matrix.
inline Eigen::MatrixXd input_matrix(const Dataset& d) {
    if (d.empty()) return {};
    Eigen::MatrixXd X(d.samples.front().positions.size(), static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = d.samples[i].positions;
    return X;
}

/// Targets of cell j as columns of a ((K+1) x N) matrix: K powers then their sum, mW.
inline Eigen::MatrixXd target_matrix(const Dataset& d, int cell) {
    const int K = d.K;
    Eigen::MatrixXd T(K + 1, static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        T.col(c).head(K) = d.samples[i].powers.segment(cell * K, K);
        T(K, c) = d.samples[i].sums(cell);
    }
    return T;
}

}  // namespace mmadv
