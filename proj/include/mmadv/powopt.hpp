#pragma once

// Max-product SINR power allocation under per-cell sum-power constraints.
//
// In the variables x = log(rho) the objective sum_u log gamma_u is concave and
// each cell's constraint log sum_k exp(x_jk) <= log Pmax is convex, so a
// projected gradient ascent reaches the global optimum. The Euclidean
// projection onto {y : sum_k exp(y_k) <= P} has the closed form
//   y_k = x_k - W(lambda exp(x_k)),
// W the principal Lambert function, with the multiplier lambda found by a
// safeguarded Newton search on log(lambda).

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mmadv/channel.hpp"
#include "mmadv/common.hpp"
#include "mmadv/geometry.hpp"

namespace mmadv {

struct PowerAllocation {
    Eigen::VectorXd rho;  // mW, cell-major
    double objective = 0.0;  // nats
    int iterations = 0;
    bool converged = false;
};

struct SolverOptions {
    double tolerance = 1e-7;  ///< on the projected-gradient residual, log domain
    int max_iterations = 10000;
};

/// sum_u log gamma_u; -infinity if any gamma is zero.
inline double log_product_objective(const GainTable& g, const Eigen::Ref<const Eigen::VectorXd>& rho,
                                    const NetworkConfig& cfg) {
    const Eigen::VectorXd gamma = sinr(g, rho, cfg);
    double sum = 0.0;
    for (Eigen::Index u = 0; u < gamma.size(); ++u) {
        if (!(gamma(u) > 0.0)) return -std::numeric_limits<double>::infinity();
        sum += std::log(gamma(u));
    }
    return sum;
}

/// Left-to-right sum; the one summation order used for every power-budget check.
inline double power_sum(const Eigen::Ref<const Eigen::VectorXd>& p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) s += p(i);
    return s;
}

/// p * c with c <= target / sum(p) chosen so the rounded sum never exceeds target.
inline Eigen::VectorXd scale_to_sum(const Eigen::Ref<const Eigen::VectorXd>& p, double target) {
    double c = target / power_sum(p);
    Eigen::VectorXd out = p * c;
    for (int i = 0; i < 64 && power_sum(out) > target; ++i) {
        c = std::nextafter(c, 0.0);
        out = p * c;
    }
    return out;
}

namespace detail {

/// log W(exp(t)) for the principal branch, i.e. s with exp(s) + s = t.
inline double log_lambert_w_exp(double t) {
    double s = t < 1.0 ? t - std::exp(t) : std::log(t - std::log(t));
    for (int it = 0; it < 100; ++it) {
        const double es = std::exp(s);
        const double step = (es + s - t) / (es + 1.0);
        s -= step;
        if (std::abs(step) <= 1e-15 * (1.0 + std::abs(s))) break;
    }
    return s;
}

/// Euclidean projection of x onto {y : sum exp(y) <= cap}, in place.
inline void project_log_simplex(Eigen::Ref<Eigen::VectorXd> x, double cap) {
    const double log_cap = std::log(cap);
    const double xmax = x.maxCoeff();
    double total = (x.array() - xmax).exp().sum();
    if (xmax + std::log(total) <= log_cap) return;

    const Eigen::Index n = x.size();
    Eigen::VectorXd s(n);
    // F(m) = sum_k exp(s_k(m) - m) - cap, decreasing in m = log(lambda).
    auto eval = [&](double m, double& deriv) {
        double f = 0.0;
        deriv = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            s(k) = log_lambert_w_exp(m + x(k));
            const double u = std::exp(s(k) - m);
            const double w = std::exp(s(k));
            f += u;
            deriv -= u * w / (1.0 + w);
        }
        return f - cap;
    };

    double lo = -std::log(cap) - 5.0;  // F(lo) > 0 required
    double hi = lo + 1.0;              // F(hi) < 0 required
    double d = 0.0;
    while (eval(lo, d) <= 0.0) lo -= 2.0 * (hi - lo);
    while (eval(hi, d) >= 0.0) hi += 2.0 * (hi - lo);

    double m = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = eval(m, d);
        if (std::abs(f) <= 1e-12 * cap) break;
        if (f > 0.0) lo = m; else hi = m;
        double next = m - f / d;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        m = next;
        if (hi - lo < 1e-15 * (1.0 + std::abs(m))) break;
    }
    eval(m, d);
    x = s.array() - m;
    // Land on the feasible side of the constraint.
    total = x.array().exp().sum();
    if (total > cap) x.array() -= std::log(total / cap);
}

struct LogObjective {
    const GainTable& g;
    const NetworkConfig& cfg;
    Eigen::VectorXd log_a;

    LogObjective(const GainTable& gains, const NetworkConfig& c) : g(gains), cfg(c), log_a(gains.a.array().log()) {}

    double value(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd rho = x.array().exp();
        const Eigen::VectorXd denom = (g.b.transpose() * rho).array() + cfg.noise_var_mw;
        return (x + log_a).sum() - denom.array().log().sum();
    }

    // d f / d x_v = 1 - rho_v * sum_u b(v,u) / D_u
    double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
        const Eigen::VectorXd rho = x.array().exp();
        const Eigen::VectorXd denom = (g.b.transpose() * rho).array() + cfg.noise_var_mw;
        const Eigen::VectorXd inv = denom.cwiseInverse();
        grad = Eigen::VectorXd::Ones(x.size()) - rho.cwiseProduct(g.b * inv);
        return (x + log_a).sum() - denom.array().log().sum();
    }
};

inline void project_cells(Eigen::VectorXd& x, const NetworkConfig& cfg) {
    for (int j = 0; j < cfg.L; ++j) project_log_simplex(x.segment(j * cfg.K, cfg.K), cfg.pmax_mw);
}

inline Eigen::VectorXd feasible_powers(const Eigen::VectorXd& x, const NetworkConfig& cfg) {
    Eigen::VectorXd rho = x.array().exp();
    for (int j = 0; j < cfg.L; ++j) {
        auto seg = rho.segment(j * cfg.K, cfg.K);
        const double s = power_sum(seg);
        if (s > cfg.pmax_mw) seg = scale_to_sum(seg, cfg.pmax_mw);
    }
    return rho;
}

inline double kkt_residual(const LogObjective& obj, const Eigen::VectorXd& x, const NetworkConfig& cfg) {
    Eigen::VectorXd grad;
    obj.value_grad(x, grad);
    Eigen::VectorXd probe = x + grad;
    project_cells(probe, cfg);
    return (probe - x).norm();
}

/// Newton iterations on the KKT system of the cells whose constraint is
/// active, for use near the optimum. Returns true and updates x only when the
/// polished point meets the tolerance without losing objective.
inline bool newton_polish(const LogObjective& obj, Eigen::VectorXd& x, const NetworkConfig& cfg, double tol) {
    const int U = cfg.num_ues();
    const int K = cfg.K;
    const double log_cap = std::log(cfg.pmax_mw);
    const double f0 = obj.value(x);
    Eigen::VectorXd z = x;
    std::vector<int> active;
    for (int j = 0; j < cfg.L; ++j) {
        const auto seg = z.segment(j * K, K);
        const double m = seg.maxCoeff();
        if (m + std::log((seg.array() - m).exp().sum()) >= log_cap - 1e-6) active.push_back(j);
    }

    for (int it = 0; it < 30; ++it) {
        const Eigen::VectorXd rho = z.array().exp();
        const Eigen::VectorXd denom = (obj.g.b.transpose() * rho).array() + cfg.noise_var_mw;
        Eigen::MatrixXd Q = rho.asDiagonal() * obj.g.b * denom.cwiseInverse().asDiagonal();
        const Eigen::VectorXd qsum = Q.rowwise().sum();
        const Eigen::VectorXd grad = Eigen::VectorXd::Ones(U) - qsum;
        Eigen::MatrixXd H = Q * Q.transpose();
        H.diagonal() -= qsum;

        const int A = static_cast<int>(active.size());
        Eigen::MatrixXd Jc = Eigen::MatrixXd::Zero(A, U);
        Eigen::VectorXd c(A), lambda(A);
        for (int a = 0; a < A; ++a) {
            const int j = active[static_cast<std::size_t>(a)];
            const auto seg = z.segment(j * K, K);
            const double m = seg.maxCoeff();
            const double lse = m + std::log((seg.array() - m).exp().sum());
            const Eigen::VectorXd p = (seg.array() - lse).exp();
            Jc.block(a, j * K, 1, K) = p.transpose();
            c(a) = lse - log_cap;
            lambda(a) = p.dot(grad.segment(j * K, K)) / p.squaredNorm();
            H.block(j * K, j * K, K, K) -= lambda(a) * (Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose());
        }

        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(U + A, U + A);
        kkt.topLeftCorner(U, U) = H;
        kkt.topRightCorner(U, A) = -Jc.transpose();
        kkt.bottomLeftCorner(A, U) = Jc;
        Eigen::VectorXd rhs(U + A);
        rhs.head(U) = -(grad - Jc.transpose() * lambda);
        rhs.tail(A) = -c;
        const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
        if (!sol.allFinite()) return false;
        z += sol.head(U);

        // drop constraints with negative multipliers, add violated ones
        bool changed = false;
        std::vector<int> next;
        for (int a = 0; a < A; ++a)
            if (lambda(a) + sol(U + a) > 0.0) next.push_back(active[static_cast<std::size_t>(a)]);
            else changed = true;
        for (int j = 0; j < cfg.L; ++j) {
            if (std::find(next.begin(), next.end(), j) != next.end()) continue;
            if (z.segment(j * K, K).array().exp().sum() > cfg.pmax_mw) {
                next.push_back(j);
                changed = true;
            }
        }
        std::sort(next.begin(), next.end());
        active = std::move(next);
        if (!changed && sol.head(U).norm() < 1e-3 * tol) break;
    }
    project_cells(z, cfg);
    if (!(obj.value(z) >= f0 - 1e-12 * std::abs(f0))) return false;
    if (!(kkt_residual(obj, z, cfg) < tol)) return false;
    x = z;
    return true;
}

}  // namespace detail

/// Accelerated projected gradient ascent in log-power (FISTA with
/// backtracking and function-value restart), started from the equal split
/// Pmax/K. Stops when the projected-gradient residual |P(x + grad) - x| falls
/// below the tolerance.
inline PowerAllocation maxprod_solve(const GainTable& g, const NetworkConfig& cfg, SolverOptions opt = {}) {
    const int U = cfg.num_ues();
    if (g.a.size() != U || g.b.rows() != U || g.b.cols() != U) throw data_error("maxprod_solve: gain table shape mismatch");
    for (int u = 0; u < U; ++u)
        if (!(g.a(u) > 0.0) || !std::isfinite(g.a(u))) throw data_error("maxprod_solve: infeasible instance (a_jk <= 0)");

    const detail::LogObjective obj(g, cfg);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(U, std::log(cfg.pmax_mw / cfg.K));
    Eigen::VectorXd x_prev = x, y = x, grad(U), gx(U), trial(U), probe(U);
    double fx = obj.value_grad(x, gx);
    double momentum = 1.0;
    double step = 1.0;
    int next_polish = 0;

    PowerAllocation out;
    for (int it = 0; it < opt.max_iterations; ++it) {
        probe = x + gx;
        detail::project_cells(probe, cfg);
        const double residual = (probe - x).norm();
        if (residual < opt.tolerance) {
            out.converged = true;
            out.iterations = it;
            break;
        }
        if (residual < 1e-4 && it >= next_polish) {
            if (detail::newton_polish(obj, x, cfg, opt.tolerance)) {
                out.converged = true;
                out.iterations = it;
                break;
            }
            next_polish = it + 50;
        }

        const double fy = obj.value_grad(y, grad);
        step = std::min(step * 1.5, 1e3);
        double ft = 0.0;
        for (;;) {
            trial = y + step * grad;
            detail::project_cells(trial, cfg);
            const Eigen::VectorXd d = trial - y;
            ft = obj.value(trial);
            if (ft >= fy + grad.dot(d) - d.squaredNorm() / (2.0 * step) - 1e-14 * std::abs(fy)) break;
            step *= 0.5;
            if (step < 1e-20) throw numerical_error("maxprod_solve: line search failed");
        }

        if (ft < fx) {
            // restart from the last good iterate with plain gradient step
            y = x;
            momentum = 1.0;
            out.iterations = it + 1;
            continue;
        }
        const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        x_prev = x;
        x = trial;
        y = x + ((momentum - 1.0) / next) * (x - x_prev);
        momentum = next;
        fx = obj.value_grad(x, gx);
        out.iterations = it + 1;
    }
    out.rho = detail::feasible_powers(x, cfg);
    out.objective = log_product_objective(g, out.rho, cfg);
    return out;
}

/// Exhaustive search over per-UE powers {Pmax/G, 2 Pmax/G, ..., Pmax},
/// restricted to points that satisfy every cell's sum constraint. Each
/// refinement repeats the search on a G-point grid spanning +-1 step around
/// the incumbent.
inline PowerAllocation maxprod_bruteforce(const GainTable& g, const NetworkConfig& cfg, int grid_points, int refinements = 0) {
    const int U = cfg.num_ues();
    if (U > 6) throw std::invalid_argument("maxprod_bruteforce: L*K must be <= 6");
    if (grid_points < 2) throw std::invalid_argument("maxprod_bruteforce: grid_points must be >= 2");
    if (refinements < 0) throw std::invalid_argument("maxprod_bruteforce: refinements must be >= 0");
    const double pmax = cfg.pmax_mw;
    const auto uU = static_cast<std::size_t>(U);

    PowerAllocation best;
    best.objective = -std::numeric_limits<double>::infinity();
    best.rho = Eigen::VectorXd::Zero(U);

    Eigen::VectorXd lo = Eigen::VectorXd::Constant(U, pmax / grid_points);
    Eigen::VectorXd step = Eigen::VectorXd::Constant(U, pmax / grid_points);
    int n_points = grid_points;
    Eigen::VectorXd rho(U);
    for (int level = 0; level <= refinements; ++level) {
        std::vector<int> idx(uU, 0);
        Eigen::VectorXd level_best = best.rho;
        for (;;) {
            for (int u = 0; u < U; ++u) rho(u) = lo(u) + idx[static_cast<std::size_t>(u)] * step(u);
            bool feasible = true;
            for (int j = 0; j < cfg.L && feasible; ++j) feasible = power_sum(rho.segment(j * cfg.K, cfg.K)) <= pmax;
            if (feasible) {
                const double f = log_product_objective(g, rho, cfg);
                if (f > best.objective) {
                    best.objective = f;
                    level_best = rho;
                }
                ++best.iterations;
            }
            std::size_t pos = 0;
            while (pos < uU && ++idx[pos] >= n_points) idx[pos++] = 0;
            if (pos == uU) break;
        }
        best.rho = level_best;
        // next grid: [rho - step, rho + step] clipped to (0, Pmax]
        n_points = std::max(grid_points, 3);
        for (int u = 0; u < U; ++u) {
            const double a = std::max(best.rho(u) - step(u), step(u) * 1e-3);
            const double b = std::min(best.rho(u) + step(u), pmax);
            lo(u) = a;
            step(u) = (b - a) / (n_points - 1);
        }
    }
    best.converged = std::isfinite(best.objective);
    return best;
}

}  // namespace mmadv
