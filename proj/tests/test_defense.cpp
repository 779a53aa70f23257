#include <gtest/gtest.h>

#include <sstream>

#include "mmadv/defense.hpp"
#include "oracles.hpp"

using namespace mmadv;

namespace {

NetworkConfig fast_cfg() {
    NetworkConfig c;
    c.M = 8;
    c.mc_realizations = 8;
    return c;
}

struct Small {
    NetworkConfig cfg = fast_cfg();
    DatasetSplit sp;
    NormalizationStats st;
    TrainConfig tc;
    std::vector<Model> f_std;
};

const Small& small() {
    static const Small s = [] {
        Small s;
        const Dataset all = generate_dataset(s.cfg, 80, Precoder::mr, 31, 2);
        s.sp = split(all, {0.75, 0.125, 0.125}, 5);
        s.st = normalization_stats(s.sp.train);
        s.tc.max_epochs = 5;
        s.tc.seed = 17;
        for (const auto& r : train_cells(Arch::m1, s.cfg, s.st, {s.sp.train}, {s.sp.val}, s.tc)) s.f_std.push_back(r.model);
        return s;
    }();
    return s;
}

}  // namespace

TEST(Rescale, Examples) {
    const Rescaled r = rescale_powers(Eigen::Vector2d(300, 300), 400.0);
    EXPECT_EQ(r.powers, Eigen::Vector2d(200, 200));
    EXPECT_FALSE(r.equal_split);
    const Eigen::Vector3d already(100.25, 50.5, 49.25);
    EXPECT_LE((rescale_powers(already, already.sum()).powers - already).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rescale, ClampsNegativesAndFlagsAllZero) {
    const Rescaled r = rescale_powers(Eigen::Vector3d(-50, 100, 300), 200.0);
    EXPECT_EQ(r.powers(0), 0.0);
    EXPECT_NEAR(r.powers(1), 50.0, 1e-12);
    EXPECT_NEAR(r.powers(2), 150.0, 1e-12);
    const Rescaled z = rescale_powers(Eigen::Vector4d(-1, 0, -3, 0), 400.0);
    EXPECT_TRUE(z.equal_split);
    EXPECT_EQ(z.powers, Eigen::Vector4d::Constant(100.0));
    EXPECT_THROW(rescale_powers(Eigen::VectorXd(), 1.0), std::invalid_argument);
    EXPECT_THROW(rescale_powers(Eigen::Vector2d(1, 1), -1.0), std::invalid_argument);
}

TEST(Rescale, ExactSumNeverAboveTruth) {
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const int K = 1 + static_cast<int>(u(rng) * 10);
        Eigen::VectorXd pred(K);
        for (auto& p : pred) p = (u(rng) - 0.3) * 1000.0 * std::pow(10.0, 4 * u(rng) - 2);
        const double truth = i % 4 == 0 ? 500.0 : 500.0 * u(rng);
        const Rescaled r = rescale_powers(pred, truth);
        EXPECT_LE(std::abs(r.powers.sum() - truth), 1e-9 * truth);
        EXPECT_LE(power_sum(r.powers), truth);
        EXPECT_GE(r.powers.minCoeff(), 0.0);
        if (!r.equal_split) {
            const Eigen::VectorXd p = pred.cwiseMax(0.0);
            const Eigen::Index top = [&] {
                Eigen::Index k;
                p.maxCoeff(&k);
                return k;
            }();
            for (int k = 0; k < K; ++k) EXPECT_NEAR(r.powers(k) * p(top), p(k) * r.powers(top), 1e-9 * p(top) * r.powers(top));
        }
    }
}

TEST(AdvDataset, ZeroEpsilonReproducesClean) {
    const Small& s = small();
    AttackConfig c;
    c.epsilon = 0.0;
    const AdvDataset adv = generate_adv_dataset(s.f_std, s.sp.train, c);
    ASSERT_EQ(adv.size(), 4u);
    for (const auto& d : adv) {
        ASSERT_EQ(d.size(), s.sp.train.size());
        for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.samples[i], s.sp.train.samples[i]);
    }
}

TEST(AdvDataset, BallTargetsAndProvenance) {
    const Small& s = small();
    AttackConfig c;
    c.kind = AttackKind::fgsm;  // forced to PGDM
    c.epsilon = 0.2;
    const AdvDataset adv = generate_adv_dataset(s.f_std, s.sp.train, c);
    EXPECT_LE(max_perturbation(adv, s.sp.train), 0.2 + 1e-12);
    EXPECT_GT(max_perturbation(adv, s.sp.train), 0.19);
    for (std::size_t j = 0; j < adv.size(); ++j) {
        const Dataset& d = adv[j];
        EXPECT_EQ(d.provenance.at("adv_attack"), "pgdm");
        EXPECT_EQ(d.provenance.at("adv_cell"), std::to_string(j));
        EXPECT_EQ(d.provenance.at("adv_source_model"), model_hash(s.f_std[j]));
        EXPECT_EQ(d.provenance.at("adv_Q"), "40");
        for (std::size_t i = 0; i < d.size(); ++i) {
            EXPECT_EQ(d.samples[i].powers, s.sp.train.samples[i].powers);
            EXPECT_EQ(d.samples[i].sums, s.sp.train.samples[i].sums);
        }
        AttackConfig p = c;
        p.kind = AttackKind::pgdm;
        EXPECT_EQ(input_matrix(d), pgdm(s.f_std[j], input_matrix(s.sp.train), p));
        std::stringstream ss;
        write_dataset(ss, d);
        EXPECT_EQ(read_dataset(ss), d);
    }
}

TEST(AdversarialTrain, ZeroEpsilonEqualsStandardTraining) {
    const Small& s = small();
    AttackConfig c;
    c.epsilon = 0.0;
    const auto adv = adversarial_train(generate_adv_dataset(s.f_std, s.sp.train, c), generate_adv_dataset(s.f_std, s.sp.val, c), Arch::m1, s.cfg,
                                       s.st, s.tc);
    for (std::size_t j = 0; j < adv.size(); ++j) EXPECT_EQ(adv[j].model, s.f_std[j]);
}

TEST(AdversarialTrain, KeepsArchitectureAndRejectsOverlap) {
    const Small& s = small();
    AttackConfig c;
    c.epsilon = 0.2;
    const AdvDataset tr = generate_adv_dataset(s.f_std, s.sp.train, c);
    const AdvDataset va = generate_adv_dataset(s.f_std, s.sp.val, c);
    const auto res = adversarial_train(tr, va, Arch::m1, s.cfg, s.st, s.tc);
    for (std::size_t j = 0; j < res.size(); ++j) {
        EXPECT_EQ(res[j].model.parameter_count(), s.f_std[j].parameter_count());
        EXPECT_EQ(res[j].model.cell, static_cast<int>(j));
        EXPECT_NE(res[j].model, s.f_std[j]);
    }
    EXPECT_THROW(adversarial_train(tr, tr, Arch::m1, s.cfg, s.st, s.tc), std::invalid_argument);
    EXPECT_THROW(adversarial_train({tr[0]}, va, Arch::m1, s.cfg, s.st, s.tc), std::invalid_argument);
}
