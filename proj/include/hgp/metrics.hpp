#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "hgp/gp.hpp"
#include "hgp/safety.hpp"
#include "hgp/trajectory.hpp"

namespace hgp {

// Nearest-rank percentile: the ceil(q*n)-th order statistic.
inline double percentile_nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t rank =
      static_cast<std::size_t>(std::ceil(q * values.size()));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

struct PteSummary {
  double p95 = 0.0;
  double mean = 0.0;
  std::map<double, std::size_t> exceed_counts;
  std::size_t n_samples = 0;
};

// 2D Euclidean error at each 10 Hz truth instant.
inline std::vector<double> pte_series(const std::vector<TimedPosition>& truth,
                                      const std::vector<TimedPosition>& estimated) {
  if (truth.size() != estimated.size())
    throw std::invalid_argument("pte_series: length mismatch");
  std::vector<double> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    out[i] = std::hypot(estimated[i].x - truth[i].x, estimated[i].y - truth[i].y);
  return out;
}

inline std::map<double, std::size_t> exceed_counts(
    const std::vector<double>& errors,
    const std::vector<double>& thresholds = {0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6}) {
  std::map<double, std::size_t> out;
  for (double th : thresholds) {
    std::size_t c = 0;
    for (double e : errors)
      if (e > th) ++c;
    out[th] = c;
  }
  return out;
}

inline PteSummary summarize_pte(const std::vector<double>& errors) {
  PteSummary s;
  s.n_samples = errors.size();
  s.p95 = percentile_nearest_rank(errors, 0.95);
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean = errors.empty() ? 0.0 : sum / errors.size();
  s.exceed_counts = exceed_counts(errors);
  return s;
}

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const {
    return total() == 0 ? 1.0 : static_cast<double>(tp + tn) / total();
  }
};

// Per-instant comparison of warn flags on a shared 0.1 s grid.
inline ConfusionCounts fcw_accuracy(const std::vector<bool>& gt_warns,
                                    const std::vector<bool>& test_warns) {
  if (gt_warns.size() != test_warns.size())
    throw std::invalid_argument("fcw_accuracy: streams not time-aligned");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt_warns.size(); ++i) {
    if (gt_warns[i] && test_warns[i]) ++c.tp;
    else if (!gt_warns[i] && !test_warns[i]) ++c.tn;
    else if (!gt_warns[i] && test_warns[i]) ++c.fp;
    else ++c.fn;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Fit-time profiling (quadratic-complexity check)
// ---------------------------------------------------------------------------

struct FitTimeProfile {
  std::vector<int> tw_grid;
  std::vector<double> median_ms;
  double quad_a = 0.0, quad_b = 0.0, quad_c = 0.0;  // t(n) = a n^2 + b n + c
  double quad_rmse_ms = 0.0;
};

inline FitTimeProfile profile_fit_time(const std::vector<int>& tw_grid,
                                       int repetitions = 5,
                                       std::uint64_t seed = 0) {
  FitTimeProfile prof;
  prof.tw_grid = tw_grid;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);

  for (int tw : tw_grid) {
    std::vector<double> times_ms;
    for (int r = 0; r < repetitions; ++r) {
      TimeSeriesWindow w;
      w.kind = SeriesKind::Speed;
      for (int i = 0; i < tw; ++i) {
        w.times.push_back(i * kSamplePeriod);
        w.values.push_back(15.0 + 0.5 * std::sin(0.4 * i) + noise(rng));
      }
      const auto t0 = std::chrono::steady_clock::now();
      FitOptions opt;
      opt.seed = seed + r;
      (void)fit(w, opt);
      const auto t1 = std::chrono::steady_clock::now();
      times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times_ms.begin(), times_ms.end());
    prof.median_ms.push_back(times_ms[times_ms.size() / 2]);
  }

  // least-squares quadratic in TW
  const std::size_t n = tw_grid.size();
  if (n >= 3) {
    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = tw_grid[i];
      a(i, 0) = x * x;
      a(i, 1) = x;
      a(i, 2) = 1.0;
      y(i) = prof.median_ms[i];
    }
    const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(y);
    prof.quad_a = coef(0);
    prof.quad_b = coef(1);
    prof.quad_c = coef(2);
    prof.quad_rmse_ms = std::sqrt((a * coef - y).squaredNorm() / n);
  }
  return prof;
}

}  // namespace hgp
