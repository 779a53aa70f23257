#pragma once

// Channel statistics, Rayleigh channel draws, pilot-contaminated MMSE
// estimation, MR / M-MMSE precoding and Monte-Carlo estimation of the
// average channel gain a_jk and interference gains b_lijk.

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mmadv/common.hpp"
#include "mmadv/geometry.hpp"

namespace mmadv {

using cplx = std::complex<double>;

enum class Precoder { mr, mmse };

inline const char* to_string(Precoder p) { return p == Precoder::mr ? "mr" : "mmse"; }

inline Precoder parse_precoder(std::string_view s) {
    if (s == "mr") return Precoder::mr;
    if (s == "mmse" || s == "m-mmse") return Precoder::mmse;
    throw std::invalid_argument("unknown precoder '" + std::string(s) + "'");
}

/// Large-scale gains. beta(j, u) is the gain from BS j to UE u = l*K + k.
/// Only the uncorrelated model R = beta * I is provided.
struct ChannelStats {
    Eigen::MatrixXd beta;  // L x (L*K)

    double at(int bs, int l, int k, int K) const { return beta(bs, l * K + k); }
};

/// Per-BS channel matrices: H[j] is M x (L*K), column u = h^j_u.
using ChannelSet = std::vector<Eigen::MatrixXcd>;

/// Per-BS precoders: W[j] is M x K, column k = w_jk.
using PrecoderSet = std::vector<Eigen::MatrixXcd>;

inline double pathloss(double d, const NetworkConfig& cfg) {
    if (!(d >= cfg.min_bs_distance_m))
        throw std::domain_error("pathloss: distance below min_bs_distance");
    const double db = -cfg.pathloss_ref_db - 10.0 * cfg.pathloss_exponent * std::log10(d / cfg.pathloss_ref_distance_m);
    return std::pow(10.0, db / 10.0);
}

inline ChannelStats channel_stats(const UEDrop& drop, const NetworkConfig& cfg) {
    ChannelStats s;
    s.beta.resize(cfg.L, cfg.num_ues());
    for (int j = 0; j < cfg.L; ++j) {
        const Vec2 bs = bs_position(j, cfg);
        for (int u = 0; u < cfg.num_ues(); ++u)
            s.beta(j, u) = pathloss(wrapped_distance(drop.positions[static_cast<std::size_t>(u)], bs, cfg), cfg);
    }
    return s;
}

namespace detail {

inline void fill_cn(Eigen::Ref<Eigen::MatrixXcd> out, Rng& rng) {
    std::normal_distribution<double> n01(0.0, std::sqrt(0.5));
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            const double re = n01(rng);
            const double im = n01(rng);
            out(r, c) = {re, im};
        }
}

}  // namespace detail

/// h^j_u ~ CN(0, beta(j,u) I_M), deterministic in `seed`.
inline ChannelSet realize_channels(const ChannelStats& stats, const NetworkConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    const int U = static_cast<int>(stats.beta.cols());
    ChannelSet H(static_cast<std::size_t>(stats.beta.rows()));
    for (int j = 0; j < stats.beta.rows(); ++j) {
        auto& Hj = H[static_cast<std::size_t>(j)];
        Hj.resize(cfg.M, U);
        detail::fill_cn(Hj, rng);
        for (int u = 0; u < U; ++u) Hj.col(u) *= std::sqrt(stats.beta(j, u));
    }
    return H;
}

/// MMSE estimates from one pilot phase with tau_p = K pilots; pilot k is reused
/// by UE k of every cell. Under R = beta*I the estimate of h^j_{lk} is
///   beta^j_{lk} / (sum_l' beta^j_{l'k} + sigma^2/(tau_p p)) * (sum_l' h^j_{l'k} + n),
/// with n ~ CN(0, sigma^2/(tau_p p) I).
inline ChannelSet mmse_estimate(const ChannelSet& H, const ChannelStats& stats, const NetworkConfig& cfg,
                                std::uint64_t seed) {
    if (!(cfg.pilot_power_mw > 0.0)) throw std::invalid_argument("pilot power must be positive");
    Rng rng(seed);
    const int K = cfg.K;
    const double tau_p = K;
    const double noise = cfg.noise_var_mw / (tau_p * cfg.pilot_power_mw);
    ChannelSet est(H.size());
    Eigen::VectorXcd y(cfg.M);
    for (std::size_t j = 0; j < H.size(); ++j) {
        est[j].resize(cfg.M, cfg.num_ues());
        const auto bs = static_cast<Eigen::Index>(j);
        for (int k = 0; k < K; ++k) {
            detail::fill_cn(y, rng);
            y *= std::sqrt(noise);
            double denom = noise;
            for (int l = 0; l < cfg.L; ++l) {
                y += H[j].col(l * K + k);
                denom += stats.beta(bs, l * K + k);
            }
            for (int l = 0; l < cfg.L; ++l)
                est[j].col(l * K + k) = (stats.beta(bs, l * K + k) / denom) * y;
        }
    }
    return est;
}

/// Closed-form per-antenna estimation error variance under R = beta*I.
inline double mmse_error_variance(const ChannelStats& stats, const NetworkConfig& cfg, int bs, int l, int k) {
    const double noise = cfg.noise_var_mw / (static_cast<double>(cfg.K) * cfg.pilot_power_mw);
    double denom = noise;
    for (int l2 = 0; l2 < cfg.L; ++l2) denom += stats.beta(bs, l2 * cfg.K + k);
    const double b = stats.beta(bs, l * cfg.K + k);
    return b - b * b / denom;
}

/// Unit-norm downlink precoders from the estimates held at each BS.
///   MR:     w_jk = h^j_jk / |h^j_jk|
///   M-MMSE: w_jk ~ (sum_{l,i} h^j_li h^j_li^H + xi I)^{-1} h^j_jk, xi = sigma^2 K / Pmax
inline PrecoderSet precode(const ChannelSet& est, Precoder kind, const NetworkConfig& cfg) {
    const int K = cfg.K;
    PrecoderSet W(est.size());
    for (std::size_t j = 0; j < est.size(); ++j) {
        const auto& E = est[j];
        auto& Wj = W[j];
        Wj.resize(E.rows(), K);
        const Eigen::Index own = static_cast<Eigen::Index>(j) * K;
        if (kind == Precoder::mr) {
            Wj = E.middleCols(own, K);
        } else {
            const double xi = cfg.noise_var_mw * K / cfg.pmax_mw;
            // (E E^H + xi I)^-1 E = E (E^H E + xi I)^-1; solve the smaller system.
            const bool tall = E.cols() <= E.rows();
            Eigen::MatrixXcd G = tall ? Eigen::MatrixXcd(E.adjoint() * E) : Eigen::MatrixXcd(E * E.adjoint());
            G.diagonal().array() += xi;
            Eigen::LLT<Eigen::MatrixXcd> llt(G);
            if (llt.info() != Eigen::Success) throw numerical_error("precode: regularized Gram matrix not positive definite");
            if (tall) {
                Eigen::MatrixXcd sel = Eigen::MatrixXcd::Zero(E.cols(), K);
                sel.middleRows(own, K).setIdentity();
                Wj = E * llt.solve(sel);
            } else {
                Wj = llt.solve(E.middleCols(own, K));
            }
        }
        for (int k = 0; k < K; ++k) {
            const double n = Wj.col(k).norm();
            if (!(n > 0.0) || !std::isfinite(n)) throw numerical_error("precode: degenerate zero-norm channel estimate");
            Wj.col(k) /= n;
        }
    }
    return W;
}

/// a(u) = |E{w_u^H h^j_u}|^2 for u = (j,k);
/// b(v, u) for interferer v = (l,i) and victim u = (j,k): E{|w_v^H h^l_u|^2},
/// or the variance of w_u^H h^j_u when v == u.
struct GainTable {
    Eigen::VectorXd a;  // L*K
    Eigen::MatrixXd b;  // (L*K) x (L*K), row = interferer, column = victim
    Precoder precoder = Precoder::mr;
    int n_realizations = 0;
    std::uint64_t seed = 0;

    double B(int l, int i, int j, int k, int K) const { return b(l * K + i, j * K + k); }
};

/// Accumulates realizations of (channels, precoders) into sample-mean gains.
class GainAccumulator {
public:
    GainAccumulator(const NetworkConfig& cfg) : L_(cfg.L), K_(cfg.K) {
        const int U = L_ * K_;
        b_sum_ = Eigen::MatrixXd::Zero(U, U);
    }

    void add(const ChannelSet& H, const PrecoderSet& W) {
        const int U = L_ * K_;
        Eigen::VectorXcd own(U);
        for (int l = 0; l < L_; ++l) {
            const auto li = static_cast<std::size_t>(l);
            // G(i, u) = w_li^H h^l_u
            Eigen::MatrixXcd G = W[li].adjoint() * H[li];
            for (int i = 0; i < K_; ++i) {
                const int v = l * K_ + i;
                b_sum_.row(v) += G.row(i).cwiseAbs2();
                own(v) = G(i, v);
            }
        }
        own_.push_back(std::move(own));
    }

    int count() const { return static_cast<int>(own_.size()); }

    GainTable finish(Precoder kind, std::uint64_t seed) const {
        if (own_.empty()) throw std::logic_error("GainAccumulator: no realizations");
        const int U = L_ * K_;
        const double n = static_cast<double>(own_.size());
        Eigen::VectorXcd mean = Eigen::VectorXcd::Zero(U);
        for (const auto& s : own_) mean += s;
        mean /= n;
        Eigen::VectorXd var = Eigen::VectorXd::Zero(U);
        for (const auto& s : own_) var += (s - mean).cwiseAbs2();
        var /= n;

        GainTable g;
        g.precoder = kind;
        g.n_realizations = count();
        g.seed = seed;
        g.a = mean.cwiseAbs2();
        g.b = b_sum_ / n;
        for (int u = 0; u < U; ++u) g.b(u, u) = var(u);
        return g;
    }

private:
    int L_;
    int K_;
    Eigen::MatrixXd b_sum_;
    std::vector<Eigen::VectorXcd> own_;
};

/// Monte-Carlo estimate of a and b over cfg.mc_realizations independent
/// channel/pilot realizations. Realization r draws from derive_seed(seed, {r}),
/// so the result does not depend on evaluation order.
inline GainTable estimate_gains(const UEDrop& drop, Precoder kind, const NetworkConfig& cfg, std::uint64_t seed) {
    if (cfg.mc_realizations < 2) throw std::invalid_argument("estimate_gains: mc_realizations must be >= 2");
    const ChannelStats stats = channel_stats(drop, cfg);
    GainAccumulator acc(cfg);
    for (int r = 0; r < cfg.mc_realizations; ++r) {
        const auto rs = derive_seed(seed, {static_cast<std::uint64_t>(r)});
        const ChannelSet H = realize_channels(stats, cfg, derive_seed(rs, {1}));
        const ChannelSet est = mmse_estimate(H, stats, cfg, derive_seed(rs, {2}));
        acc.add(H, precode(est, kind, cfg));
    }
    return acc.finish(kind, seed);
}

/// gamma_jk = rho_jk a_jk / (sum_{l,i} rho_li b_lijk + sigma^2). Powers in mW,
/// cell-major.
inline Eigen::VectorXd sinr(const GainTable& g, const Eigen::Ref<const Eigen::VectorXd>& rho, const NetworkConfig& cfg) {
    const Eigen::VectorXd interference = g.b.transpose() * rho;
    return (rho.array() * g.a.array() / (interference.array() + cfg.noise_var_mw)).matrix();
}

}  // namespace mmadv
