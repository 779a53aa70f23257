#pragma once

// L-infinity gradient attacks on the per-cell power regressors and
// infeasibility-rate evaluation. All attacks act on batches (one sample per
// column, meters) and perturb the full 2LK input.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmadv/common.hpp"
#include "mmadv/dataset.hpp"
#include "mmadv/nn.hpp"

namespace mmadv {

enum class AttackKind { fgsm, pgdm, mifgsm, random };

inline const char* to_string(AttackKind k) {
    switch (k) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::pgdm: return "pgdm";
        case AttackKind::mifgsm: return "mifgsm";
        case AttackKind::random: return "random";
    }
    return "?";
}

inline AttackKind parse_attack(std::string_view s) {
    if (s == "fgsm") return AttackKind::fgsm;
    if (s == "pgdm" || s == "pgd") return AttackKind::pgdm;
    if (s == "mifgsm" || s == "mi-fgsm") return AttackKind::mifgsm;
    if (s == "random") return AttackKind::random;
    throw std::invalid_argument("unknown attack '" + std::string(s) + "'");
}

/// maximize pushes the predicted cell sum up (infeasibility); minimize pushes it down.
enum class AttackGoal { maximize, minimize };

inline const char* to_string(AttackGoal g) { return g == AttackGoal::maximize ? "max" : "min"; }

struct AttackConfig {
    AttackKind kind = AttackKind::pgdm;
    double epsilon = 0.2;  // meters
    double alpha = 0.01;   // meters, PGDM step
    int Q = 40;
    double mu = 0.1;
    int I = 10;
    double beta = -1.0;    // meters, MI-FGSM step; negative selects epsilon / I
    AttackGoal goal = AttackGoal::maximize;
    std::uint64_t seed = 0;  // random perturbation only

    double step_beta() const { return beta < 0.0 ? epsilon / I : beta; }

    /// Budget must satisfy 0 <= epsilon < 0.5; epsilon = 0 is the no-attack case.
    void validate() const {
        if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("attack: epsilon must lie in [0, 0.5)");
        if (Q < 1 || I < 1) throw std::invalid_argument("attack: Q and I must be >= 1");
        if (!(alpha > 0.0)) throw std::invalid_argument("attack: alpha must be positive");
        if (!(mu >= 0.0)) throw std::invalid_argument("attack: mu must be nonnegative");
        const double b = step_beta();
        if (!(b >= 0.0) || (epsilon > 0.0 && !(b > 0.0))) throw std::invalid_argument("attack: beta must be positive");
        if (b * I > epsilon * (1.0 + 1e-12)) throw std::invalid_argument("attack: beta * I exceeds epsilon");
    }
};

/// Sum of the first K raw outputs in mW, one value per column.
inline Eigen::VectorXd attack_loss(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X) {
    return forward_batch(m, X).topRows(m.K).colwise().sum().transpose();
}

inline double attack_loss_single(const Model& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return forward(m, x).head(m.K).sum();
}

namespace detail {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline double goal_sign(AttackGoal g) { return g == AttackGoal::maximize ? 1.0 : -1.0; }

inline void check_ball(const Eigen::MatrixXd& Xa, const Eigen::Ref<const Eigen::MatrixXd>& X, double eps) {
    if (X.size() && (Xa - X).cwiseAbs().maxCoeff() > eps + 1e-12) throw std::logic_error("attack iterate left the epsilon ball");
}

}  // namespace detail

inline Eigen::MatrixXd fgsm(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, double eps,
                            AttackGoal goal = AttackGoal::maximize) {
    const Eigen::MatrixXd g = input_gradients(m, X, detail::goal_sign(goal));
    return X + eps * g.unaryExpr(&detail::sgn);
}

inline Eigen::MatrixXd pgdm(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, const AttackConfig& cfg) {
    const double eps = cfg.epsilon;
    const Eigen::MatrixXd lo = X.array() - eps;
    const Eigen::MatrixXd hi = X.array() + eps;
    Eigen::MatrixXd Xa = X;
    for (int q = 0; q < cfg.Q; ++q) {
        const Eigen::MatrixXd g = input_gradients(m, Xa, detail::goal_sign(cfg.goal));
        Xa += cfg.alpha * g.unaryExpr(&detail::sgn);
        Xa = Xa.cwiseMax(lo).cwiseMin(hi);
        detail::check_ball(Xa, X, eps);
    }
    return Xa;
}

inline Eigen::MatrixXd mifgsm(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, const AttackConfig& cfg) {
    const double beta = cfg.step_beta();
    Eigen::MatrixXd Xa = X;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(X.rows(), X.cols());
    for (int i = 0; i < cfg.I; ++i) {
        const Eigen::MatrixXd g = input_gradients(m, Xa, detail::goal_sign(cfg.goal));
        acc *= cfg.mu;
        for (Eigen::Index c = 0; c < g.cols(); ++c) {
            const double l1 = g.col(c).lpNorm<1>();
            if (l1 > 0.0) acc.col(c) += g.col(c) / l1;
        }
        Xa += beta * acc.unaryExpr(&detail::sgn);
    }
    return Xa;
}

/// Each coordinate moves by exactly +-eps, sign of a standard normal draw.
inline Eigen::MatrixXd random_perturb(const Eigen::Ref<const Eigen::MatrixXd>& X, double eps, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::MatrixXd Xa = X;
    for (Eigen::Index c = 0; c < X.cols(); ++c)
        for (Eigen::Index r = 0; r < X.rows(); ++r) Xa(r, c) += eps * (n01(rng) >= 0.0 ? 1.0 : -1.0);
    return Xa;
}

/// Adversarial inputs against `m` for every column of X.
inline Eigen::MatrixXd craft(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, const AttackConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case AttackKind::fgsm: return fgsm(m, X, cfg.epsilon, cfg.goal);
        case AttackKind::pgdm: return pgdm(m, X, cfg);
        case AttackKind::mifgsm: return mifgsm(m, X, cfg);
        case AttackKind::random: return random_perturb(X, cfg.epsilon, derive_seed(cfg.seed, {static_cast<std::uint64_t>(m.cell)}));
    }
    throw std::logic_error("craft: bad attack kind");
}

// --- evaluation --------------------------------------------------------------

/// Columns whose predicted cell sum (first K raw outputs, mW) strictly exceeds pmax.
inline std::vector<bool> infeasible_mask(const Model& m, const Eigen::Ref<const Eigen::MatrixXd>& X, double pmax) {
    const Eigen::MatrixXd P = forward_batch(m, X).topRows(m.K);
    std::vector<bool> out(static_cast<std::size_t>(P.cols()));
    for (Eigen::Index i = 0; i < P.cols(); ++i) out[static_cast<std::size_t>(i)] = power_sum(P.col(i)) > pmax;
    return out;
}

struct CellResult {
    int cell = 0;
    long long n = 0;
    long long infeasible = 0;
    double rate() const { return n ? static_cast<double>(infeasible) / static_cast<double>(n) : 0.0; }
};

struct AttackReport {
    AttackKind kind = AttackKind::pgdm;
    double epsilon = 0.0;
    std::string model_id;
    std::vector<CellResult> cells;

    double d_eps_cm() const { return std::sqrt(2.0) * epsilon * 100.0; }
    long long total_n() const {
        long long n = 0;
        for (const auto& c : cells) n += c.n;
        return n;
    }
    long long total_infeasible() const {
        long long n = 0;
        for (const auto& c : cells) n += c.infeasible;
        return n;
    }
    /// Total infeasible over L * N2.
    double aggregate_rate() const {
        const long long n = total_n();
        return n ? static_cast<double>(total_infeasible()) / static_cast<double>(n) : 0.0;
    }
};

/// Adversarial examples crafted against `craft_models`, evaluated on `eval_models`
/// (identical for white-box). Optionally returns the crafted inputs per cell.
inline AttackReport evaluate_transfer(const std::vector<Model>& craft_models, const std::vector<Model>& eval_models,
                                      const Eigen::MatrixXd& X, const AttackConfig& cfg, double pmax,
                                      std::vector<Eigen::MatrixXd>* adversarial = nullptr) {
    if (craft_models.size() != eval_models.size() || craft_models.empty())
        throw std::invalid_argument("evaluate_attack: need one model per cell");
    AttackReport rep;
    rep.kind = cfg.kind;
    rep.epsilon = cfg.epsilon;
    if (adversarial) adversarial->clear();
    for (std::size_t j = 0; j < eval_models.size(); ++j) {
        if (craft_models[j].cell != eval_models[j].cell) throw std::invalid_argument("evaluate_attack: cell mismatch");
        const Eigen::MatrixXd Xa = craft(craft_models[j], X, cfg);
        detail::check_ball(Xa, X, cfg.epsilon);
        const auto mask = infeasible_mask(eval_models[j], Xa, pmax);
        CellResult cr;
        cr.cell = eval_models[j].cell;
        cr.n = static_cast<long long>(mask.size());
        for (bool b : mask) cr.infeasible += b ? 1 : 0;
        rep.cells.push_back(cr);
        if (adversarial) adversarial->push_back(Xa);
    }
    return rep;
}

inline AttackReport evaluate_attack(const std::vector<Model>& models, const Eigen::MatrixXd& X, const AttackConfig& cfg,
                                    double pmax, std::vector<Eigen::MatrixXd>* adversarial = nullptr) {
    return evaluate_transfer(models, models, X, cfg, pmax, adversarial);
}

inline const char* attack_csv_header() { return "cell,attack,epsilon,d_eps_cm,n,infeasible,rate"; }

/// Per-cell rows then one row with cell = "all".
inline void write_attack_rows(std::ostream& os, const AttackReport& r, const std::string& prefix = {}) {
    const std::string eps = fmt_exact(r.epsilon);
    const std::string dcm = fmt_sig(r.d_eps_cm(), 6);
    for (const auto& c : r.cells)
        os << prefix << c.cell << ',' << to_string(r.kind) << ',' << eps << ',' << dcm << ',' << c.n << ',' << c.infeasible << ','
           << fmt_exact(c.rate()) << '\n';
    os << prefix << "all," << to_string(r.kind) << ',' << eps << ',' << dcm << ',' << r.total_n() << ',' << r.total_infeasible()
       << ',' << fmt_exact(r.aggregate_rate()) << '\n';
}

}  // namespace mmadv
