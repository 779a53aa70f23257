#pragma once

// Square-grid multicell layout with wrap-around (torus) distances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmadv/common.hpp"

namespace mmadv {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
    double norm() const { return std::hypot(x, y); }
};

/// Physical and system constants of the simulated network. Powers are in mW
/// (linear), lengths in meters.
struct NetworkConfig {
    int L = 4;                       ///< cells, must be a perfect square
    int K = 5;                       ///< single-antenna UEs per cell
    int M = 32;                      ///< BS antennas
    double pmax_mw = 500.0;          ///< downlink sum power per cell
    double noise_var_mw = 3.981071705534972e-10;  ///< -94 dBm
    double cell_side_m = 250.0;
    double min_bs_distance_m = 35.0;
    double pathloss_ref_db = 35.3;   ///< loss at the reference distance
    double pathloss_exponent = 3.76;
    double pathloss_ref_distance_m = 1.0;
    double pilot_power_mw = 100.0;
    int mc_realizations = 100;
    double bandwidth_hz = 20e6;      ///< metadata only

    int grid_side() const {
        int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(L))));
        return g;
    }
    double network_side_m() const { return grid_side() * cell_side_m; }
    int num_ues() const { return L * K; }
    int input_dim() const { return 2 * L * K; }

    void validate() const {
        const int g = grid_side();
        if (L < 1 || g * g != L) throw std::invalid_argument("L must be a perfect square >= 1");
        if (K < 1) throw std::invalid_argument("K must be >= 1");
        if (M < 1) throw std::invalid_argument("M must be >= 1");
        if (!(pmax_mw > 0.0)) throw std::invalid_argument("Pmax must be positive");
        if (!(noise_var_mw > 0.0)) throw std::invalid_argument("noise variance must be positive");
        if (!(cell_side_m > 0.0)) throw std::invalid_argument("cell side must be positive");
        if (!(min_bs_distance_m > 0.0 && min_bs_distance_m < cell_side_m / 2))
            throw std::invalid_argument("min_bs_distance must lie in (0, cell_side/2)");
        if (!(pathloss_ref_distance_m > 0.0)) throw std::invalid_argument("pathloss reference distance must be positive");
        if (!(pathloss_exponent > 0.0)) throw std::invalid_argument("pathloss exponent must be positive");
        if (!(pilot_power_mw > 0.0)) throw std::invalid_argument("pilot power must be positive");
        if (mc_realizations < 1) throw std::invalid_argument("mc_realizations must be >= 1");
    }

    /// Canonical text used for provenance hashing.
    std::string canonical() const {
        return "L=" + std::to_string(L) + ";K=" + std::to_string(K) + ";M=" + std::to_string(M) +
               ";pmax=" + fmt_exact(pmax_mw) + ";noise=" + fmt_exact(noise_var_mw) +
               ";side=" + fmt_exact(cell_side_m) + ";dmin=" + fmt_exact(min_bs_distance_m) +
               ";pl0=" + fmt_exact(pathloss_ref_db) + ";ple=" + fmt_exact(pathloss_exponent) +
               ";d0=" + fmt_exact(pathloss_ref_distance_m) + ";pp=" + fmt_exact(pilot_power_mw) +
               ";mc=" + std::to_string(mc_realizations) + ";bw=" + fmt_exact(bandwidth_hz);
    }
    std::string hash() const { return hex64(fnv1a64(canonical())); }
};

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

/// UE positions in the global frame (origin at the grid's lower-left corner),
/// stored cell-major: index l*K + k.
struct UEDrop {
    std::vector<Vec2> positions;
    std::uint64_t seed = 0;

    const Vec2& at(int l, int k, int K) const { return positions[static_cast<std::size_t>(l * K + k)]; }
    friend bool operator==(const UEDrop&, const UEDrop&) = default;
};

/// BS of cell l sits at the center of its square. Cells are numbered row-major
/// from the lower-left corner.
inline Vec2 bs_position(int l, const NetworkConfig& cfg) {
    const int g = cfg.grid_side();
    const int col = l % g;
    const int row = l / g;
    return {(col + 0.5) * cfg.cell_side_m, (row + 0.5) * cfg.cell_side_m};
}

/// Minimal-image displacement q - p on the torus of side `side`.
inline Vec2 wrapped_delta(Vec2 p, Vec2 q, double side) {
    Vec2 d = q - p;
    d.x -= side * std::round(d.x / side);
    d.y -= side * std::round(d.y / side);
    return d;
}

inline double wrapped_distance(Vec2 p, Vec2 q, const NetworkConfig& cfg) {
    const double side = cfg.network_side_m();
    auto axis = [side](double a, double b) {
        double d = std::fmod(std::abs(a - b), side);
        return std::min(d, side - d);
    };
    return std::hypot(axis(p.x, q.x), axis(p.y, q.y));
}

/// Uniform drop of K UEs in each cell, excluding a disc of radius
/// min_bs_distance around the home BS.
inline UEDrop drop_ues(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    UEDrop drop;
    drop.seed = seed;
    drop.positions.reserve(static_cast<std::size_t>(cfg.num_ues()));
    const int g = cfg.grid_side();
    for (int l = 0; l < cfg.L; ++l) {
        const Vec2 corner{(l % g) * cfg.cell_side_m, (l / g) * cfg.cell_side_m};
        const Vec2 bs = bs_position(l, cfg);
        for (int k = 0; k < cfg.K; ++k) {
            Vec2 p;
            do {
                p = {corner.x + unif(rng) * cfg.cell_side_m, corner.y + unif(rng) * cfg.cell_side_m};
            } while (wrapped_distance(p, bs, cfg) < cfg.min_bs_distance_m);
            drop.positions.push_back(p);
        }
    }
    return drop;
}

/// Position of every UE in the local frame of BS `bs_index`, using the
/// nearest wrap-around image.
inline std::vector<Vec2> local_coordinates(const UEDrop& drop, int bs_index, const NetworkConfig& cfg) {
    if (bs_index < 0 || bs_index >= cfg.L) throw std::out_of_range("bs_index out of range");
    const Vec2 bs = bs_position(bs_index, cfg);
    const double side = cfg.network_side_m();
    std::vector<Vec2> out;
    out.reserve(drop.positions.size());
    for (const auto& p : drop.positions) out.push_back(wrapped_delta(bs, p, side));
    return out;
}

}  // namespace mmadv
