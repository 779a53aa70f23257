#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmadv/evalreport.hpp"
#include "oracles.hpp"

using namespace mmadv;
namespace fs = std::filesystem;

namespace {

NetworkConfig fast_cfg() {
    NetworkConfig c;
    c.M = 8;
    c.mc_realizations = 8;
    return c;
}

std::vector<Model> random_cells(int L, std::uint64_t seed) {
    std::vector<Model> ms;
    for (int j = 0; j < L; ++j) {
        Model m = oracle::random_model(40, {16, 8, 6}, seed + static_cast<std::uint64_t>(j), 120.0);
        m.cell = j;
        ms.push_back(m);
    }
    return ms;
}

Eigen::MatrixXd positions(int cols, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    Eigen::MatrixXd X(40, cols);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = u(rng);
    return X;
}

}  // namespace

TEST(SpectralEfficiency, Examples) {
    const SEConfig full{200, 200};
    EXPECT_DOUBLE_EQ(spectral_efficiency(1.0, full), 1.0);
    EXPECT_EQ(spectral_efficiency(0.0, full), 0.0);
    EXPECT_DOUBLE_EQ(spectral_efficiency(3.0, SEConfig{200, 100}), 1.0);
    EXPECT_THROW(spectral_efficiency(-1.0, full), std::invalid_argument);
}

TEST(SEConfig, DefaultsAndValidation) {
    const SEConfig se = SEConfig::for_network(NetworkConfig{});
    EXPECT_EQ(se.tau_c, 200);
    EXPECT_EQ(se.tau_d, 185);
    EXPECT_THROW((SEConfig{100, 101}.validate()), std::invalid_argument);
    EXPECT_THROW((SEConfig{100, 0}.validate()), std::invalid_argument);
}

TEST(SumSe, MatchesDirectFormula) {
    const NetworkConfig cfg = fast_cfg();
    const GainTable g = estimate_gains(drop_ues(cfg, 3), Precoder::mr, cfg, 4);
    const Eigen::VectorXd rho = Eigen::VectorXd::LinSpaced(20, 10.0, 120.0);
    const SEConfig se{200, 185};
    double ref = 0.0;
    const Eigen::VectorXd gamma = sinr(g, rho, cfg);
    for (Eigen::Index u = 0; u < 20; ++u) ref += 185.0 / 200.0 * std::log2(1.0 + gamma(u));
    EXPECT_NEAR(sum_se(g, rho, cfg, se), ref, 1e-12 * ref);
}

TEST(EmpiricalCdf, SingleSampleStep) {
    const auto cdf = empirical_cdf({42.5});
    ASSERT_EQ(cdf.size(), 1u);
    EXPECT_EQ(cdf[0].value, 42.5);
    EXPECT_EQ(cdf[0].cdf, 1.0);
    EXPECT_EQ(cdf_median(cdf), 42.5);
    EXPECT_THROW(empirical_cdf({}), std::invalid_argument);
    EXPECT_THROW(empirical_cdf({1.0, std::nan("")}), std::invalid_argument);
}

TEST(EmpiricalCdf, MonotoneAndMatchesRecount) {
    Rng rng(2);
    std::normal_distribution<double> n(50.0, 10.0);
    std::vector<double> v(501);
    for (auto& x : v) x = std::round(n(rng));
    const auto cdf = empirical_cdf(v);
    EXPECT_EQ(cdf.back().cdf, 1.0);
    for (std::size_t i = 1; i < cdf.size(); ++i) {
        EXPECT_LE(cdf[i - 1].value, cdf[i].value);
        EXPECT_LT(cdf[i - 1].cdf, cdf[i].cdf);
    }
    for (std::size_t i = 0; i < cdf.size(); ++i) {
        const bool last_of_tie = i + 1 == cdf.size() || cdf[i + 1].value != cdf[i].value;
        if (last_of_tie) EXPECT_DOUBLE_EQ(cdf[i].cdf, oracle::cdf_at(v, cdf[i].value));
    }
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(cdf_median(cdf), sorted[250]);
    EXPECT_EQ(cdf_median(empirical_cdf({4.0, 1.0, 3.0, 2.0})), 2.0);
}

TEST(SumSeCdf, TruthDominatesCrudeAllocation) {
    const NetworkConfig cfg = fast_cfg();
    const Dataset d = generate_dataset(cfg, 30, Precoder::mr, 8, 2);
    const auto gains = dataset_gains(d, Precoder::mr, cfg, 8);
    const SEConfig se = SEConfig::for_network(cfg);
    const auto truth = sum_se_values(gains, truth_powers(d), cfg, se);
    Eigen::MatrixXd skewed = Eigen::MatrixXd::Constant(20, 30, 1.0);
    for (int j = 0; j < 4; ++j) skewed.row(j * 5).setConstant(496.0);
    const auto bad = sum_se_values(gains, skewed, cfg, se);
    for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_GT(truth[i], bad[i]);
    EXPECT_GT(cdf_median(empirical_cdf(truth)), cdf_median(empirical_cdf(bad)));
    EXPECT_THROW(sum_se_values(gains, skewed.leftCols(3), cfg, se), std::invalid_argument);
}

TEST(DnnPowers, ClampAndRescale) {
    const NetworkConfig cfg = fast_cfg();
    const Dataset d = generate_dataset(cfg, 6, Precoder::mr, 9, 2);
    const auto ms = random_cells(4, 40);
    const Eigen::MatrixXd X = input_matrix(d);
    const Eigen::MatrixXd raw = dnn_powers(ms, {X}, 5);
    const Eigen::MatrixXd res = dnn_powers(ms, {X}, 5, &d);
    EXPECT_GE(raw.minCoeff(), 0.0);
    for (int j = 0; j < 4; ++j) {
        const Eigen::MatrixXd out = forward_batch(ms[static_cast<std::size_t>(j)], X).topRows(5).cwiseMax(0.0);
        EXPECT_EQ(raw.middleRows(j * 5, 5), out);
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            const double truth = d.samples[static_cast<std::size_t>(c)].sums(j);
            EXPECT_NEAR(res.col(c).segment(j * 5, 5).sum(), truth, 1e-9 * truth);
            EXPECT_LE(power_sum(res.col(c).segment(j * 5, 5)), cfg.pmax_mw);
        }
    }
}

TEST(TransferEval, IdentitySurrogateEqualsWhitebox) {
    const auto ms = random_cells(4, 1);
    const Eigen::MatrixXd X = positions(40, 3);
    AttackConfig c;
    c.epsilon = 0.3;
    const TransferReport r = transfer_eval(ms, "a", ms, "a", X, c, 200.0);
    const AttackReport w = evaluate_attack(ms, X, c, 200.0);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(r.transfer.cells[j].infeasible, w.cells[j].infeasible);
        EXPECT_EQ(r.whitebox.cells[j].infeasible, w.cells[j].infeasible);
    }
}

TEST(TransferEval, ZeroEpsilonIsCleanBaseline) {
    const auto a = random_cells(4, 1), b = random_cells(4, 9);
    const Eigen::MatrixXd X = positions(40, 5);
    AttackConfig c;
    c.epsilon = 0.0;
    const TransferReport r = transfer_eval(a, "a", b, "b", X, c, 200.0);
    long long clean = 0;
    for (const auto& m : b)
        for (bool inf : infeasible_mask(m, X, 200.0)) clean += inf ? 1 : 0;
    EXPECT_EQ(r.transfer.total_infeasible(), clean);
    EXPECT_EQ(r.whitebox.total_infeasible(), clean);
}

TEST(Report, GoldenHeaders) {
    EXPECT_STREQ(attack_csv_header(), "cell,attack,epsilon,d_eps_cm,n,infeasible,rate");
    EXPECT_STREQ(transfer_csv_header(), "surrogate,victim,cell,attack,epsilon,d_eps_cm,n,infeasible,rate");
    EXPECT_STREQ(cdf_csv_header(), "sum_se_bps_hz,cdf");
}

TEST(Report, EmptyCdfIsAnError) {
    std::ostringstream os;
    EXPECT_THROW(write_cdf_csv(os, {}), std::invalid_argument);
    EXPECT_THROW(emit_report({}, (fs::temp_directory_path() / "mmadv_empty_report").string()), std::invalid_argument);
}

TEST(Report, EmitAndParseBackExactly) {
    const auto a = random_cells(4, 1), b = random_cells(4, 9);
    const Eigen::MatrixXd X = positions(40, 7);
    ReportBundle bundle;
    for (AttackKind k : {AttackKind::fgsm, AttackKind::pgdm, AttackKind::random}) {
        AttackConfig c;
        c.kind = k;
        c.epsilon = 0.3;
        bundle.attacks.push_back(evaluate_attack(a, X, c, 150.0));
        bundle.transfers.push_back(transfer_eval(a, "m1", b, "m2", X, c, 150.0));
    }
    bundle.cdfs.emplace_back("truth", empirical_cdf({3.5, 1.25, 2.0}));
    const fs::path dir = fs::temp_directory_path() / "mmadv_report_test";
    fs::remove_all(dir);
    const auto written = emit_report(bundle, dir.string());
    EXPECT_EQ(written.size(), 3u);

    std::ifstream ai(dir / "attack_report.csv");
    const auto rows = read_report_csv(ai);
    ASSERT_EQ(rows.size(), 15u);
    std::size_t i = 0;
    for (const auto& r : bundle.attacks) {
        for (const auto& c : r.cells) {
            EXPECT_EQ(rows[i].cell, c.cell);
            EXPECT_EQ(rows[i].infeasible, c.infeasible);
            EXPECT_EQ(rows[i].rate, c.rate());
            ++i;
        }
        EXPECT_EQ(rows[i].cell, -1);
        EXPECT_EQ(rows[i].rate, r.aggregate_rate());
        EXPECT_EQ(rows[i].attack, r.kind);
        ++i;
    }

    std::ifstream ti(dir / "transfer_report.csv");
    const auto trows = read_report_csv(ti);
    ASSERT_EQ(trows.size(), 30u);
    EXPECT_EQ(trows[0].surrogate, "m1");
    EXPECT_EQ(trows[0].victim, "m2");
    EXPECT_EQ(trows[4].rate, bundle.transfers[0].transfer.aggregate_rate());
    EXPECT_EQ(trows[15].surrogate, "m2");
    EXPECT_EQ(trows[19].rate, bundle.transfers[0].whitebox.aggregate_rate());

    std::ifstream ci(dir / "cdf_truth.csv");
    EXPECT_EQ(read_cdf_csv(ci), bundle.cdfs[0].second);

    std::ifstream raw(dir / "attack_report.csv");
    std::string header;
    std::getline(raw, header);
    EXPECT_EQ(header, attack_csv_header());
    fs::remove_all(dir);
}

TEST(Report, RejectsMalformed) {
    std::istringstream bad_header("cell,attack\n");
    EXPECT_THROW(read_report_csv(bad_header), data_error);
    std::istringstream bad_row(std::string(attack_csv_header()) + "\n0,pgdm,0.1\n");
    EXPECT_THROW(read_report_csv(bad_row), data_error);
    std::istringstream bad_cdf("value,p\n");
    EXPECT_THROW(read_cdf_csv(bad_cdf), data_error);
}
