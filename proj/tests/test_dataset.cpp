#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "mmadv/dataset.hpp"
#include "mmadv/nn.hpp"

using namespace mmadv;

namespace {

NetworkConfig fast_cfg() {
    NetworkConfig c;
    c.M = 8;
    c.mc_realizations = 10;
    return c;
}

const Dataset& hundred() {
    static const Dataset d = generate_dataset(fast_cfg(), 100, Precoder::mr, 2024, 2);
    return d;
}

std::string bytes(const Dataset& d) {
    std::ostringstream os;
    write_dataset(os, d);
    return os.str();
}

std::set<long long> ids(const Dataset& d) {
    std::set<long long> s;
    for (const auto& x : d.samples) s.insert(x.id);
    return s;
}

}  // namespace

TEST(GenerateDataset, SingleUeGetsPmax) {
    NetworkConfig cfg = fast_cfg();
    cfg.L = 1;
    cfg.K = 1;
    const Dataset d = generate_dataset(cfg, 1, Precoder::mr, 1, 1);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_NEAR(d.samples[0].powers(0), cfg.pmax_mw, 1e-6);
    EXPECT_LE(d.samples[0].powers(0), cfg.pmax_mw + 1e-9);
}

TEST(GenerateDataset, ByteIdenticalAcrossRunsAndThreadCounts) {
    NetworkConfig cfg = fast_cfg();
    const std::string a = bytes(generate_dataset(cfg, 12, Precoder::mr, 77, 1));
    EXPECT_EQ(a, bytes(generate_dataset(cfg, 12, Precoder::mr, 77, 1)));
    EXPECT_EQ(a, bytes(generate_dataset(cfg, 12, Precoder::mr, 77, 4)));
    EXPECT_NE(a, bytes(generate_dataset(cfg, 12, Precoder::mr, 78, 1)));
}

TEST(GenerateDataset, LabelsFeasibleAndSumsExact) {
    const Dataset& d = hundred();
    ASSERT_EQ(d.size(), 100u);
    for (const auto& s : d.samples) {
        EXPECT_EQ(s.sums, cell_sums(s.powers, d.L, d.K));
        EXPECT_GE(s.powers.minCoeff(), 0.0);
        for (int j = 0; j < d.L; ++j) EXPECT_LE(s.sums(j), d.pmax_mw + 1e-9);
    }
    EXPECT_EQ(d.config_hash, fast_cfg().hash());
}

TEST(GenerateDataset, RejectsEmpty) { EXPECT_THROW(generate_dataset(fast_cfg(), 0, Precoder::mr, 1), std::invalid_argument); }

TEST(GenerateDataset, GainsRebuildFromStoredRecord) {
    const Dataset& d = hundred();
    const NetworkConfig cfg = fast_cfg();
    const auto& s = d.samples[3];
    const GainTable g = sample_gains(s, Precoder::mr, cfg, 2024);
    const PowerAllocation p = maxprod_solve(g, cfg);
    EXPECT_LE((p.rho - s.powers).cwiseAbs().maxCoeff(), 1e-6 * cfg.pmax_mw);
}

TEST(Persistence, RoundTripBitExact) {
    const Dataset& d = hundred();
    std::istringstream is(bytes(d));
    const Dataset back = read_dataset(is);
    EXPECT_EQ(back, d);
}

TEST(Persistence, RejectsMalformedInput) {
    std::istringstream empty("");
    EXPECT_THROW(read_dataset(empty), data_error);
    std::istringstream bad_format("format=other,config_hash=x,L=1,K=1,M=1,Pmax=1\n");
    EXPECT_THROW(read_dataset(bad_format), data_error);
    std::istringstream short_row("format=mmadv-dataset/1,config_hash=x,L=1,K=1,M=1,Pmax=1\n0,1,2\n");
    EXPECT_THROW(read_dataset(short_row), data_error);
    std::istringstream bad_sum("format=mmadv-dataset/1,config_hash=x,L=1,K=1,M=1,Pmax=1\n0,1,2,0.5,0.25\n");
    EXPECT_THROW(read_dataset(bad_sum), data_error);
    std::istringstream bad_number("format=mmadv-dataset/1,config_hash=x,L=1,K=1,M=1,Pmax=1\n0,1,zz,0.5,0.5\n");
    EXPECT_THROW(read_dataset(bad_number), data_error);
}

TEST(Split, AllTrain) {
    const auto sp = split(hundred(), {1.0, 0.0, 0.0}, 1);
    EXPECT_EQ(sp.train.size(), 100u);
    EXPECT_TRUE(sp.val.empty());
    EXPECT_TRUE(sp.test.empty());
}

TEST(Split, SizesDisjointExhaustiveDeterministic) {
    Dataset big = hundred().like();
    for (int i = 0; i < 1000; ++i) {
        Sample s = hundred().samples[static_cast<std::size_t>(i % 100)];
        s.id = i;
        big.samples.push_back(s);
    }
    const auto sp = split(big, {0.8, 0.1, 0.1}, 9);
    EXPECT_EQ(sp.train.size(), 800u);
    EXPECT_EQ(sp.val.size(), 100u);
    EXPECT_EQ(sp.test.size(), 100u);
    std::set<long long> all;
    for (const auto* p : {&sp.train, &sp.val, &sp.test})
        for (long long id : ids(*p)) EXPECT_TRUE(all.insert(id).second);
    EXPECT_EQ(all, ids(big));
    const auto again = split(big, {0.8, 0.1, 0.1}, 9);
    EXPECT_EQ(again.train, sp.train);
    EXPECT_NE(split(big, {0.8, 0.1, 0.1}, 10).train, sp.train);
}

TEST(Split, RandomDatasetsDisjoint) {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        Dataset d = hundred().like();
        const int n = 3 + static_cast<int>(rng() % 60);
        for (int i = 0; i < n; ++i) {
            Sample s = hundred().samples[0];
            s.id = static_cast<long long>(rng() % 1000000);
            d.samples.push_back(s);
        }
        const auto sp = split(d, {0.6, 0.2, 0.2}, rng());
        EXPECT_EQ(sp.train.size() + sp.val.size() + sp.test.size(), d.size());
        std::multiset<long long> joined, orig;
        for (const auto* p : {&sp.train, &sp.val, &sp.test})
            for (const auto& s : p->samples) joined.insert(s.id);
        for (const auto& s : d.samples) orig.insert(s.id);
        EXPECT_EQ(joined, orig);
    }
}

TEST(Split, Errors) {
    EXPECT_THROW(split(hundred(), {0.5, 0.2, 0.2}, 1), std::invalid_argument);
    EXPECT_THROW(split(hundred().like(), {0.8, 0.1, 0.1}, 1), std::invalid_argument);
    Dataset two = hundred().like();
    two.samples = {hundred().samples[0], hundred().samples[1]};
    EXPECT_THROW(split(two, {0.8, 0.1, 0.1}, 1), std::invalid_argument);
}

TEST(NormalizationStats, Definition) {
    const Dataset& d = hundred();
    const auto st = normalization_stats(d);
    EXPECT_EQ(st.power_scale, d.pmax_mw);
    Eigen::MatrixXd Z = input_matrix(d);
    Z = ((Z.colwise() - st.mean).array().colwise() / st.std.array()).matrix();
    const Eigen::VectorXd mean = Z.rowwise().mean();
    const Eigen::VectorXd sd = ((Z.colwise() - mean).cwiseAbs2().rowwise().mean()).cwiseSqrt();
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((sd.array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(NormalizationStats, ConstantCoordinateFloored) {
    Dataset d = hundred();
    for (auto& s : d.samples) s.positions(3) = 42.0;
    const auto st = normalization_stats(d);
    EXPECT_EQ(st.std(3), 1e-6);
    EXPECT_EQ(st.mean(3), 42.0);
    EXPECT_THROW(normalization_stats(d.like()), std::invalid_argument);
}

TEST(NormalizationStats, TrainOnlyStatsCarriedIntoModels) {
    const auto sp = split(hundred(), {0.8, 0.1, 0.1}, 3);
    const auto st = normalization_stats(sp.train);
    TrainConfig tc;
    tc.max_epochs = 2;
    const auto results = train_cells(Arch::m1, fast_cfg(), st, {sp.train}, {sp.val}, tc);
    for (const auto& r : results) {
        NormalizationStats in_model{r.model.in_mean, r.model.in_std, r.model.out_scale};
        EXPECT_EQ(in_model.hash(), st.hash());
        EXPECT_NE(in_model.hash(), normalization_stats(sp.test).hash());
    }
}

TEST(Matrices, InputAndTargetLayout) {
    const Dataset& d = hundred();
    const Eigen::MatrixXd X = input_matrix(d);
    EXPECT_EQ(X.rows(), 40);
    EXPECT_EQ(X.cols(), 100);
    EXPECT_EQ(X.col(7), d.samples[7].positions);
    const Eigen::MatrixXd T = target_matrix(d, 2);
    EXPECT_EQ(T.rows(), 6);
    EXPECT_EQ(T.col(5).head(5), d.samples[5].powers.segment(10, 5));
    EXPECT_EQ(T(5, 5), d.samples[5].sums(2));
}

TEST(Positions, DropRoundTrip) {
    const auto& s = hundred().samples[0];
    const UEDrop drop = drop_from_positions(s.positions);
    ASSERT_EQ(drop.positions.size(), 20u);
    EXPECT_EQ(drop.positions[1].x, s.positions(2));
    EXPECT_EQ(drop.positions[1].y, s.positions(3));
}
