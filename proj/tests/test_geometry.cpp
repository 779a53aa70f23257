#include <gtest/gtest.h>

#include <cmath>

#include "mmadv/geometry.hpp"

using namespace mmadv;

namespace {

NetworkConfig two_by_two() { return NetworkConfig{}; }

bool inside_home_cell(Vec2 p, int l, const NetworkConfig& cfg) {
    const int g = cfg.grid_side();
    const double x0 = (l % g) * cfg.cell_side_m, y0 = (l / g) * cfg.cell_side_m;
    return p.x >= x0 && p.x <= x0 + cfg.cell_side_m && p.y >= y0 && p.y <= y0 + cfg.cell_side_m;
}

}  // namespace

TEST(NetworkConfig, DefaultsAreValid) {
    const NetworkConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.grid_side(), 2);
    EXPECT_DOUBLE_EQ(cfg.network_side_m(), 500.0);
    EXPECT_EQ(cfg.input_dim(), 40);
}

TEST(NetworkConfig, RejectsBadValues) {
    auto bad = [](auto mutate) {
        NetworkConfig c;
        mutate(c);
        EXPECT_THROW(c.validate(), std::invalid_argument);
    };
    bad([](NetworkConfig& c) { c.L = 3; });
    bad([](NetworkConfig& c) { c.L = 0; });
    bad([](NetworkConfig& c) { c.K = 0; });
    bad([](NetworkConfig& c) { c.M = 0; });
    bad([](NetworkConfig& c) { c.pmax_mw = 0.0; });
    bad([](NetworkConfig& c) { c.noise_var_mw = -1.0; });
    bad([](NetworkConfig& c) { c.min_bs_distance_m = 125.0; });
    bad([](NetworkConfig& c) { c.min_bs_distance_m = 0.0; });
}

TEST(NetworkConfig, HashTracksEveryField) {
    const NetworkConfig a;
    NetworkConfig b;
    EXPECT_EQ(a.hash(), b.hash());
    b.noise_var_mw *= 1.0000001;
    EXPECT_NE(a.hash(), b.hash());
    NetworkConfig c;
    c.mc_realizations = 101;
    EXPECT_NE(a.hash(), c.hash());
}

TEST(Geometry, BsAtCellCenters) {
    const auto cfg = two_by_two();
    EXPECT_EQ(bs_position(0, cfg), (Vec2{125, 125}));
    EXPECT_EQ(bs_position(1, cfg), (Vec2{375, 125}));
    EXPECT_EQ(bs_position(2, cfg), (Vec2{125, 375}));
    EXPECT_EQ(bs_position(3, cfg), (Vec2{375, 375}));
}

TEST(WrappedDistance, Examples) {
    const auto cfg = two_by_two();
    EXPECT_NEAR(wrapped_distance({0, 0}, {499, 0}, cfg), 1.0, 1e-12);
    EXPECT_EQ(wrapped_distance({10, 20}, {10, 20}, cfg), 0.0);
    EXPECT_NEAR(wrapped_distance({0, 0}, {250, 250}, cfg), 250.0 * std::sqrt(2.0), 1e-12);
}

TEST(WrappedDistance, MetricProperties) {
    const auto cfg = two_by_two();
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    for (int i = 0; i < 2000; ++i) {
        const Vec2 p{u(rng), u(rng)}, q{u(rng), u(rng)}, r{u(rng), u(rng)};
        const double pq = wrapped_distance(p, q, cfg);
        EXPECT_DOUBLE_EQ(pq, wrapped_distance(q, p, cfg));
        EXPECT_LE(pq, wrapped_distance(p, r, cfg) + wrapped_distance(r, q, cfg) + 1e-9);
        EXPECT_LE(pq, 250.0 * std::sqrt(2.0) + 1e-9);
        EXPECT_NEAR(wrapped_distance(p, {p.x + 500.0, p.y - 500.0}, cfg), 0.0, 1e-9);
    }
}

TEST(DropUes, SingleCellRespectsExclusion) {
    NetworkConfig cfg;
    cfg.L = 1;
    cfg.K = 1;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const UEDrop d = drop_ues(cfg, s);
        ASSERT_EQ(d.positions.size(), 1u);
        EXPECT_TRUE(inside_home_cell(d.positions[0], 0, cfg));
        EXPECT_GE(wrapped_distance(d.positions[0], bs_position(0, cfg), cfg), cfg.min_bs_distance_m);
    }
}

TEST(DropUes, Deterministic) {
    const auto cfg = two_by_two();
    EXPECT_EQ(drop_ues(cfg, 42), drop_ues(cfg, 42));
    EXPECT_NE(drop_ues(cfg, 42), drop_ues(cfg, 43));
}

TEST(DropUes, InvariantsOverManySeeds) {
    const auto cfg = two_by_two();
    for (std::uint64_t s = 0; s < 500; ++s) {
        const UEDrop d = drop_ues(cfg, s);
        ASSERT_EQ(d.positions.size(), 20u);
        for (int l = 0; l < cfg.L; ++l)
            for (int k = 0; k < cfg.K; ++k) {
                const Vec2 p = d.at(l, k, cfg.K);
                EXPECT_TRUE(inside_home_cell(p, l, cfg));
                EXPECT_GE(wrapped_distance(p, bs_position(l, cfg), cfg), cfg.min_bs_distance_m);
            }
    }
}

TEST(DropUes, MeanNearCellCenters) {
    const auto cfg = two_by_two();
    std::vector<Vec2> sum(static_cast<std::size_t>(cfg.L));
    const int n = 10000;
    for (int s = 0; s < n; ++s) {
        const UEDrop d = drop_ues(cfg, derive_seed(9, {static_cast<std::uint64_t>(s)}));
        for (int l = 0; l < cfg.L; ++l)
            for (int k = 0; k < cfg.K; ++k) sum[static_cast<std::size_t>(l)] = sum[static_cast<std::size_t>(l)] + d.at(l, k, cfg.K);
    }
    for (int l = 0; l < cfg.L; ++l) {
        const Vec2 c = bs_position(l, cfg);
        const double m = n * cfg.K;
        EXPECT_NEAR(sum[static_cast<std::size_t>(l)].x / m, c.x, 0.01 * c.x);
        EXPECT_NEAR(sum[static_cast<std::size_t>(l)].y / m, c.y, 0.01 * c.y);
    }
}

TEST(LocalCoordinates, Examples) {
    const auto cfg = two_by_two();
    UEDrop d;
    d.positions = {bs_position(0, cfg), {260, 0}};
    const auto z = local_coordinates(d, 0, cfg);
    EXPECT_EQ(z[0], (Vec2{0, 0}));
    EXPECT_NEAR(z[1].norm(), wrapped_distance({260, 0}, bs_position(0, cfg), cfg), 1e-12);
    EXPECT_THROW(local_coordinates(d, 4, cfg), std::out_of_range);
}

TEST(LocalCoordinates, NormMatchesWrappedDistance) {
    const auto cfg = two_by_two();
    Rng rng(17);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    UEDrop d;
    for (int i = 0; i < 1000; ++i) d.positions.push_back({u(rng), u(rng)});
    for (int j = 0; j < cfg.L; ++j) {
        const auto z = local_coordinates(d, j, cfg);
        for (std::size_t i = 0; i < z.size(); ++i)
            EXPECT_NEAR(z[i].norm(), wrapped_distance(d.positions[i], bs_position(j, cfg), cfg), 1e-9);
    }
}
