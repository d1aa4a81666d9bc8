#pragma once

// Linear example selector: predicts downstream transfer accuracy from a
// candidate's signal vector, and picks the best-scoring candidate of a batch.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sgac/errors.hpp"
#include "sgac/rollout_signals.hpp"

namespace sgac {

enum class ModelSource { Fitted, Deployment, UserSupplied };

inline constexpr std::string_view to_string(ModelSource s) {
  switch (s) {
    case ModelSource::Fitted: return "fitted";
    case ModelSource::Deployment: return "deployment";
    case ModelSource::UserSupplied: return "user";
  }
  return "user";
}

inline constexpr std::size_t kSignalCount = 4;
inline constexpr std::array<std::string_view, kSignalCount> kSignalNames = {"p_s", "var_r", "disagreement", "level"};

inline std::array<double, kSignalCount> features(const SignalVector& s) {
  return {s.p_s, s.var_r, s.disagreement, static_cast<double>(s.level)};
}

struct SelectorModel {
  double w_p = 0.0;
  double w_sigma = 0.0;
  double w_d = 0.0;
  double w_level = 0.0;
  double intercept = 0.0;
  ModelSource source = ModelSource::UserSupplied;
  std::optional<double> fit_r2;

  std::array<double, kSignalCount> weights() const { return {w_p, w_sigma, w_d, w_level}; }

  /// Coefficients used by the curriculum loop at deployment time.
  static SelectorModel deployment() { return {0.005, 0.183, -0.075, 0.219, 0.0, ModelSource::Deployment, {}}; }

  /// Regression weights from an external four-candidate fit. No intercept
  /// is known for it, so it is zero.
  static SelectorModel reference_fit() { return {-0.0574, -0.2511, 0.0393, 0.1095, 0.0, ModelSource::UserSupplied, {}}; }
};

struct TransferRecord {
  SignalVector signals;
  double a_down = 0.0;
};

inline double predict_transfer(const SelectorModel& m, const SignalVector& s) {
  return m.w_p * s.p_s + m.w_sigma * s.var_r + m.w_d * s.disagreement + m.w_level * static_cast<double>(s.level) +
         m.intercept;
}

inline double deployment_score(const SignalVector& s) { return predict_transfer(SelectorModel::deployment(), s); }

/// Index of the highest score; ties go to the lowest index.
inline std::size_t argmax_lowest(std::span<const double> scores) {
  if (scores.empty()) throw ContractViolation("argmax over an empty batch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

inline std::size_t select_candidate(std::span<const SignalVector> batch, const SelectorModel& model) {
  if (batch.empty()) throw ContractViolation("select_candidate: empty batch");
  std::vector<double> scores;
  scores.reserve(batch.size());
  for (const auto& s : batch) scores.push_back(predict_transfer(model, s));
  return argmax_lowest(scores);
}

// ---------------------------------------------------------------------------
// Ordinary least squares with a free intercept.

struct LinearFit {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double r2 = 0.0;
  Eigen::VectorXd predictions;
};

/// In-sample coefficient of determination. A constant target that is
/// reproduced exactly counts as a perfect fit.
inline double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  const double ss_res = (y - yhat).squaredNorm();
  if (ss_tot == 0.0) return ss_res <= 1e-24 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

/// Minimum-norm least squares on the column-centered design; the intercept
/// restores the means. Rank deficiency (more unknowns than informative rows)
/// is resolved by the complete orthogonal decomposition's min-norm solution.
inline LinearFit fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto n = x.rows();
  if (n < 2) throw FitDegenerate("least squares needs at least 2 records, got " + std::to_string(n));
  if (!x.allFinite() || !y.allFinite()) throw FitDegenerate("non-finite values in regression data");

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  LinearFit fit;
  if (xc.cols() == 0 || xc.cwiseAbs().maxCoeff() == 0.0) {
    if (yc.cwiseAbs().maxCoeff() != 0.0) throw FitDegenerate("all features constant but targets vary");
    fit.weights = Eigen::VectorXd::Zero(x.cols());
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xc);
    fit.weights = cod.solve(yc);
  }
  fit.intercept = y_mean - x_mean.dot(fit.weights);
  fit.predictions = (x * fit.weights).array() + fit.intercept;
  fit.r2 = r_squared(y, fit.predictions);
  return fit;
}

inline Eigen::MatrixXd design_matrix(std::span<const TransferRecord> records) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(kSignalCount));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto f = features(records[i].signals);
    for (std::size_t j = 0; j < kSignalCount; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
  }
  return x;
}

inline Eigen::VectorXd targets(std::span<const TransferRecord> records) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) y(static_cast<Eigen::Index>(i)) = records[i].a_down;
  return y;
}

inline SelectorModel fit_selector(std::span<const TransferRecord> records) {
  if (records.size() < 2) throw FitDegenerate("fit_selector: need at least 2 records");
  const LinearFit fit = fit_linear(design_matrix(records), targets(records));
  SelectorModel m;
  m.w_p = fit.weights(0);
  m.w_sigma = fit.weights(1);
  m.w_d = fit.weights(2);
  m.w_level = fit.weights(3);
  m.intercept = fit.intercept;
  m.source = ModelSource::Fitted;
  m.fit_r2 = fit.r2;
  return m;
}

// ---------------------------------------------------------------------------
// Rank statistics and the leave-one-out protocol.

/// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation; absent when either side has no spread.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation (Pearson over average ranks).
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

struct FitQuality {
  std::optional<double> r2;
  std::optional<double> rank_corr;
};

struct LeaveOneOutReport {
  FitQuality full;
  std::array<FitQuality, kSignalCount> without;  // indexed like kSignalNames
};

namespace detail {

// Predictions that agree to within rounding noise count as tied when ranked.
inline std::vector<double> snap_for_ranking(const Eigen::VectorXd& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  for (double& x : out) x = std::round(x * 1e9) / 1e9;
  return out;
}

inline FitQuality fit_quality(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  try {
    const LinearFit fit = fit_linear(x, y);
    std::vector<double> yv(y.data(), y.data() + y.size());
    return {fit.r2, spearman(snap_for_ranking(fit.predictions), yv)};
  } catch (const FitDegenerate&) {
    return {};
  }
}

}  // namespace detail

/// Refits with each signal removed in turn (same min-norm convention) and
/// reports in-sample R^2 and Spearman correlation of predictions vs targets.
inline LeaveOneOutReport leave_one_out_contribution(std::span<const TransferRecord> records) {
  if (records.size() < 3) throw ContractViolation("leave_one_out_contribution: need at least 3 records");
  const Eigen::MatrixXd x = design_matrix(records);
  const Eigen::VectorXd y = targets(records);
  LeaveOneOutReport report;
  report.full = detail::fit_quality(x, y);
  for (std::size_t drop = 0; drop < kSignalCount; ++drop) {
    Eigen::MatrixXd reduced(x.rows(), x.cols() - 1);
    for (Eigen::Index j = 0, out = 0; j < x.cols(); ++j) {
      if (static_cast<std::size_t>(j) == drop) continue;
      reduced.col(out++) = x.col(j);
    }
    report.without[drop] = detail::fit_quality(reduced, y);
  }
  return report;
}

}  // namespace sgac
