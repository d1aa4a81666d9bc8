#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sgac/selector.hpp"
#include "reference_rows.hpp"

using namespace sgac;

namespace {

/// Independent oracle: V * diag(1/s) * U^T * yc from a full SVD, singular
/// values below a relative cutoff treated as zero.
Eigen::VectorXd pinv_solution(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double* intercept) {
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mx;
  const Eigen::VectorXd yc = y.array() - y.mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cutoff = 1e-12 * s(0);
  Eigen::MatrixXd sigma_plus = Eigen::MatrixXd::Zero(xc.cols(), xc.rows());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) sigma_plus(i, i) = 1.0 / s(i);
  }
  const Eigen::VectorXd w = svd.matrixV() * sigma_plus * svd.matrixU().transpose() * yc;
  *intercept = y.mean() - mx.dot(w);
  return w;
}

double hand_score(double p, double v, double d, int l) { return 0.005 * p + 0.183 * v - 0.075 * d + 0.219 * l; }

}  // namespace

TEST(FitSelector, ReferenceRowsInterpolate) {
  const auto records = refrows::row_records();
  const SelectorModel m = fit_selector(records);
  EXPECT_EQ(m.source, ModelSource::Fitted);
  ASSERT_TRUE(m.fit_r2.has_value());
  EXPECT_NEAR(*m.fit_r2, 1.0, 1e-12);
  for (const auto& r : records) EXPECT_NEAR(predict_transfer(m, r.signals), r.a_down, 1e-9);
  EXPECT_NEAR(predict_transfer(m, records[0].signals), 0.40, 1e-9);
}

TEST(FitSelector, MatchesPseudoinverseOracle) {
  const auto records = refrows::row_records();
  const SelectorModel m = fit_selector(records);
  double b = 0;
  const Eigen::VectorXd w = pinv_solution(design_matrix(records), targets(records), &b);
  const auto got = m.weights();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(got[i], w(i), 1e-9) << kSignalNames[i];
  EXPECT_NEAR(m.intercept, b, 1e-9);
}

TEST(FitSelector, MatchesOracleOnFixtureSignals) {
  std::vector<TransferRecord> records;
  const auto cands = refrows::all();
  for (int i = 0; i < 4; ++i) {
    records.push_back({collect_signals(cands[i].problem, refrows::rollouts(cands[i])), refrows::kRows[i].a_down});
  }
  const SelectorModel m = fit_selector(records);
  double b = 0;
  const Eigen::VectorXd w = pinv_solution(design_matrix(records), targets(records), &b);
  const auto got = m.weights();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(got[i], w(i), 1e-9);
  EXPECT_NEAR(*m.fit_r2, 1.0, 1e-12);
}

TEST(FitSelector, RandomOverdeterminedMatchesOracle) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + gen() % 20;
    std::vector<TransferRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
      recs.push_back({{u(gen), u(gen) * 0.5, 0.125 * static_cast<double>(1 + gen() % 8), 1 + static_cast<int>(gen() % 5)},
                      u(gen)});
    }
    const SelectorModel m = fit_selector(recs);
    double b = 0;
    const Eigen::VectorXd w = pinv_solution(design_matrix(recs), targets(recs), &b);
    const auto got = m.weights();
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(got[i], w(i), 1e-7) << "n=" << n;
    if (n <= 5) {
      EXPECT_NEAR(*m.fit_r2, 1.0, 1e-9) << "n=" << n;
    }
  }
}

TEST(FitSelector, IdenticalRecordsGiveInterceptOnly) {
  const TransferRecord r{{0.5, 0.1, 0.5, 3}, 0.42};
  const std::vector<TransferRecord> recs{r, r};
  const SelectorModel m = fit_selector(recs);
  EXPECT_EQ(m.w_p, 0.0);
  EXPECT_EQ(m.w_sigma, 0.0);
  EXPECT_EQ(m.w_d, 0.0);
  EXPECT_EQ(m.w_level, 0.0);
  EXPECT_DOUBLE_EQ(m.intercept, 0.42);
}

TEST(FitSelector, DegenerateInputs) {
  const std::vector<TransferRecord> one{{{0.5, 0.1, 0.5, 3}, 0.4}};
  EXPECT_THROW(fit_selector(one), FitDegenerate);
  const std::vector<TransferRecord> none;
  EXPECT_THROW(fit_selector(none), FitDegenerate);
  const std::vector<TransferRecord> flat{{{0.5, 0.1, 0.5, 3}, 0.4}, {{0.5, 0.1, 0.5, 3}, 0.6}};
  EXPECT_THROW(fit_selector(flat), FitDegenerate);
}

TEST(FitSelector, RefitIsBitIdentical) {
  const auto records = refrows::row_records();
  const SelectorModel a = fit_selector(records);
  const SelectorModel b = fit_selector(records);
  EXPECT_EQ(a.weights(), b.weights());
  EXPECT_EQ(a.intercept, b.intercept);
}

TEST(PredictTransfer, Examples) {
  EXPECT_NEAR(predict_transfer(SelectorModel::reference_fit(), refrows::row_signals(2)),
              -0.0574 * 0.125 - 0.2511 * 0.152 + 0.0393 * 1.0 + 0.1095 * 5, 1e-15);
  EXPECT_NEAR(predict_transfer(SelectorModel::reference_fit(), refrows::row_signals(2)), 0.5414578, 1e-7);
  SelectorModel zero;
  zero.intercept = 0.3;
  EXPECT_EQ(predict_transfer(zero, refrows::row_signals(0)), 0.3);
}

TEST(DeploymentScore, ReferenceRows) {
  const double expected[4] = {1.09575, 0.443572, 1.048441, 0.855404};
  for (int i = 0; i < 4; ++i) {
    const auto& r = refrows::kRows[i];
    EXPECT_NEAR(deployment_score(refrows::row_signals(i)), hand_score(r.p_s, r.var_r, r.d, r.level), 1e-15);
    EXPECT_NEAR(deployment_score(refrows::row_signals(i)), expected[i], 1e-6);
  }
  EXPECT_EQ(deployment_score({0, 0, 0, 0}), 0.0);
}

TEST(SelectCandidate, Rules) {
  std::vector<SignalVector> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(refrows::row_signals(i));
  EXPECT_EQ(select_candidate(batch, SelectorModel::deployment()), 0u);
  EXPECT_EQ(select_candidate(std::vector<SignalVector>{batch[2]}, SelectorModel::deployment()), 0u);
  EXPECT_EQ(select_candidate(std::vector<SignalVector>{batch[1], batch[1]}, SelectorModel::deployment()), 0u);
  EXPECT_THROW(select_candidate(std::vector<SignalVector>{}, SelectorModel::deployment()), ContractViolation);
  // The reference weights favour #2 on these rows.
  EXPECT_EQ(select_candidate(batch, SelectorModel::reference_fit()), 2u);
}

TEST(SelectCandidate, ArgmaxInvariance) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<SignalVector> batch;
    const std::size_t n = 1 + gen() % 8;
    for (std::size_t i = 0; i < n; ++i) batch.push_back({u(gen), u(gen) * 0.5, u(gen), 1 + static_cast<int>(gen() % 5)});
    SelectorModel m{u(gen) - 0.5, u(gen) - 0.5, u(gen) - 0.5, u(gen) - 0.5, 0.0, ModelSource::UserSupplied, {}};
    const std::size_t base = select_candidate(batch, m);

    SelectorModel shifted = m;
    shifted.intercept += 7.25;
    EXPECT_EQ(select_candidate(batch, shifted), base);

    const double c = 0.5 + u(gen) * 4;
    SelectorModel scaled{m.w_p * c, m.w_sigma * c, m.w_d * c, m.w_level * c, m.intercept * c, m.source, {}};
    EXPECT_EQ(select_candidate(batch, scaled), base);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<SignalVector> permuted;
    for (auto p : perm) permuted.push_back(batch[p]);
    EXPECT_EQ(perm[select_candidate(permuted, m)], base);
  }
}

TEST(Ranks, AverageRanksAndSpearman) {
  const std::vector<double> v{3, 1, 3, 2};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{3.5, 1, 3.5, 2}));
  const std::vector<double> a{1, 2, 3, 4}, b{10, 20, 30, 40}, c{4, 3, 2, 1};
  EXPECT_NEAR(*spearman(a, b), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(a, c), -1.0, 1e-15);
  const std::vector<double> flat{1, 1, 1, 1};
  EXPECT_FALSE(spearman(a, flat).has_value());
}

TEST(LeaveOneOut, FullModelAndDrops) {
  const auto records = refrows::row_records();
  const auto report = leave_one_out_contribution(records);
  ASSERT_TRUE(report.full.r2 && report.full.rank_corr);
  EXPECT_NEAR(*report.full.r2, 1.0, 1e-12);
  EXPECT_NEAR(*report.full.rank_corr, 1.0, 1e-12);

  // Oracle refit: drop one column, solve with the SVD oracle, score in-sample.
  const Eigen::MatrixXd x = design_matrix(records);
  const Eigen::VectorXd y = targets(records);
  for (int drop = 0; drop < 4; ++drop) {
    Eigen::MatrixXd reduced(4, 3);
    for (int j = 0, k = 0; j < 4; ++j) {
      if (j != drop) reduced.col(k++) = x.col(j);
    }
    double b = 0;
    const Eigen::VectorXd w = pinv_solution(reduced, y, &b);
    const Eigen::VectorXd pred = (reduced * w).array() + b;
    const double r2 = 1.0 - (y - pred).squaredNorm() / (y.array() - y.mean()).square().sum();
    ASSERT_TRUE(report.without[drop].r2.has_value()) << drop;
    EXPECT_NEAR(*report.without[drop].r2, r2, 1e-9) << kSignalNames[drop];
  }
}

TEST(LeaveOneOut, DroppingConstantZeroFeatureKeepsR2) {
  std::vector<TransferRecord> recs = {
      {{0.1, 0.0, 0.2, 1}, 0.3}, {{0.4, 0.0, 0.5, 2}, 0.6}, {{0.3, 0.0, 0.9, 4}, 0.2}, {{0.8, 0.0, 0.1, 5}, 0.9},
      {{0.6, 0.0, 0.6, 3}, 0.5}, {{0.2, 0.0, 0.4, 2}, 0.1}};
  const auto report = leave_one_out_contribution(recs);
  EXPECT_NEAR(*report.without[1].r2, *report.full.r2, 1e-12);
  EXPECT_THROW(leave_one_out_contribution(std::span(recs).first(2)), ContractViolation);
}
