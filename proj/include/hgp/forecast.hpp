#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hgp/gp.hpp"
#include "hgp/trajectory.hpp"

namespace hgp {

enum class ForecastSource { Gp, CaFallback, CsFallback, Hold };

inline std::string to_string(ForecastSource s) {
  switch (s) {
    case ForecastSource::Gp: return "gp";
    case ForecastSource::CaFallback: return "ca-fallback";
    case ForecastSource::CsFallback: return "cs-fallback";
    case ForecastSource::Hold: return "hold";
  }
  return "?";
}

struct ForecastPoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double speed_mean = 0.0;
  double speed_var = 0.0;
  double heading_mean = 0.0;
  double heading_var = 0.0;
  ForecastSource source = ForecastSource::Gp;
};

// Physical plausibility bounds for the hybrid guard.
struct MotionLimits {
  double v_max = 60.0;   // m/s
  double a_min = -9.0;   // m/s^2
  double a_max = 6.0;    // m/s^2
};

// E[cos h], E[sin h] for h ~ N(mu, var): the lognormal-characteristic-function
// identity e^{-var/2} cos(mu) (resp. sin).
inline double expected_cos(double mu, double var) {
  return std::exp(-var / 2.0) * std::cos(mu);
}
inline double expected_sin(double mu, double var) {
  return std::exp(-var / 2.0) * std::sin(mu);
}

// ---------------------------------------------------------------------------
// Kinematic baselines
// ---------------------------------------------------------------------------

// BSM-dependent: X(t+1) = X(t).
inline std::vector<ForecastPoint> hold_last(const VehicleState& last, int horizon_steps,
                                            double dt = kSamplePeriod) {
  std::vector<ForecastPoint> out;
  out.reserve(horizon_steps);
  for (int j = 1; j <= horizon_steps; ++j)
    out.push_back({last.t + j * dt, last.x, last.y, last.speed, 0.0, last.heading, 0.0,
                   ForecastSource::Hold});
  return out;
}

// Shared CS/CA stepper: advances (arc-length, speed, accel) with the 3x3
// transition matrices and dead-reckons position along the anchor heading.
// Speed is clamped at 0 (forward driving only).
inline std::vector<ForecastPoint> kinematic_forecast(
    const VehicleState& last, int horizon_steps, bool with_accel,
    double dt = kSamplePeriod,
    double v_max = std::numeric_limits<double>::infinity()) {
  std::vector<ForecastPoint> out;
  out.reserve(horizon_steps);
  const double ch = std::cos(last.heading), sh = std::sin(last.heading);
  double d = 0.0, s = std::min(last.speed, v_max);
  const double a = with_accel ? last.accel : 0.0;
  for (int j = 1; j <= horizon_steps; ++j) {
    double step = s * dt + 0.5 * a * dt * dt;
    double s_next = s + a * dt;
    if (s_next < 0.0) {  // clamp: stop within the step
      if (s > 0.0 && a < 0.0) {
        const double t_stop = s / -a;
        step = s * t_stop - 0.5 * (-a) * t_stop * t_stop;
      } else {
        step = std::max(step, 0.0);
      }
      s_next = 0.0;
    } else if (s_next > v_max) {  // saturate at the plausibility ceiling
      step = std::min(step, s * dt + 0.5 * (v_max - s) * dt);
      s_next = v_max;
    }
    d += step;
    s = s_next;
    out.push_back({last.t + j * dt, last.x + d * ch, last.y + d * sh, s,
                   0.0, last.heading, 0.0,
                   with_accel ? ForecastSource::CaFallback : ForecastSource::CsFallback});
  }
  return out;
}

inline std::vector<ForecastPoint> constant_speed(
    const VehicleState& last, int horizon_steps, double dt = kSamplePeriod,
    double v_max = std::numeric_limits<double>::infinity()) {
  return kinematic_forecast(last, horizon_steps, /*with_accel=*/false, dt, v_max);
}

inline std::vector<ForecastPoint> constant_accel(
    const VehicleState& last, int horizon_steps, double dt = kSamplePeriod,
    double v_max = std::numeric_limits<double>::infinity()) {
  return kinematic_forecast(last, horizon_steps, /*with_accel=*/true, dt, v_max);
}

// ---------------------------------------------------------------------------
// Kalman filter with constant-acceleration dynamics (1-D longitudinal)
// ---------------------------------------------------------------------------

struct KalmanState {
  Eigen::Vector3d x_hat = Eigen::Vector3d::Zero();  // (position, speed, accel)
  Eigen::Matrix3d p = Eigen::Matrix3d::Identity();
  // Process noise sized so the filter tracks maneuvers instead of lagging:
  // with the heavy position weight in R this keeps the filter slightly ahead
  // of raw constant-acceleration dead reckoning under measurement noise.
  Eigen::Matrix3d q = (Eigen::Vector3d(0.05, 0.1, 0.5)).asDiagonal();
  Eigen::Matrix3d r = (Eigen::Vector3d(10.0, 1.0, 0.5)).asDiagonal();
  bool clamped = false;  // P went non-PSD and was repaired
};

// Time update always; measurement update (H = I) only when a measurement is
// present. On packet loss the prediction runs on the time update alone.
inline KalmanState kalman_step(const KalmanState& state,
                               const std::optional<Eigen::Vector3d>& measurement,
                               double dt = kSamplePeriod) {
  Eigen::Matrix3d a;
  a << 1, dt, 0.5 * dt * dt,
       0, 1, dt,
       0, 0, 1;
  KalmanState out = state;
  out.x_hat = a * state.x_hat;
  out.p = a * state.p * a.transpose() + state.q;
  if (measurement) {
    const Eigen::Matrix3d s = out.p + out.r;
    const Eigen::Matrix3d k = out.p * s.inverse();
    out.x_hat = out.x_hat + k * (*measurement - out.x_hat);
    out.p = (Eigen::Matrix3d::Identity() - k) * out.p;
  }
  // keep P symmetric PSD
  out.p = 0.5 * (out.p + out.p.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(out.p);
  if (es.eigenvalues().minCoeff() < 0.0) {
    Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);
    out.p = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    out.clamped = true;
  }
  if (out.x_hat(1) < 0.0) out.x_hat(1) = 0.0;  // forward driving
  return out;
}

// ---------------------------------------------------------------------------
// Hybrid guard + indirect HGP position forecast
// ---------------------------------------------------------------------------

// Guard decision for one step: a predicted speed outside [0, v_max] or an
// implied acceleration outside [a_min, a_max] triggers the fallback.
inline bool violates_limits(double speed, double prev_speed, double dt,
                            const MotionLimits& lim) {
  if (speed < 0.0 || speed > lim.v_max) return true;
  const double accel = (speed - prev_speed) / dt;
  return accel < lim.a_min || accel > lim.a_max;
}

// Indirect HGP forecast given already-selected speed/heading models.
// Positions advance with the recursive piecewise-linear rule
//   x_{j+1} = x_j + dt * mu_s_j * exp(-var_h_j / 2) * cos(mu_h_j)
// using the marginals at the start of each step (the anchor's observed speed
// and heading seed step 0). The hybrid guard swaps the remainder of the
// horizon to CA (or CS when the anchor's acceleration is stale) on breach.
inline std::vector<ForecastPoint> hgp_indirect_core(
    const TimeSeriesWindow& speed_window, const TimeSeriesWindow& heading_window,
    const GpModel& speed_model, const GpModel& heading_model,
    const VehicleState& anchor, int horizon_steps, const MotionLimits& limits = {},
    bool accel_stale = false, double dt = kSamplePeriod) {
  if (speed_window.size() == 0 || heading_window.size() == 0)
    throw std::invalid_argument("hgp_indirect: empty window");
  if (speed_window.times != heading_window.times)
    throw std::invalid_argument("hgp_indirect: windows not aligned");

  // Work in window-relative time: the linear kernel component t*t' is not
  // stationary, so models are fitted and applied with the window start at 0.
  TimeSeriesWindow sw = speed_window, hw = heading_window;
  const double t_origin = sw.times.front();
  for (auto& t : sw.times) t -= t_origin;
  for (auto& t : hw.times) t -= t_origin;

  // Marginals at step starts t_0 .. t_{n-1}; t_0 is the anchor itself.
  std::vector<double> query;
  query.reserve(horizon_steps);
  for (int j = 1; j < horizon_steps; ++j)
    query.push_back(anchor.t - t_origin + j * dt);

  PredictiveSeries ps, ph;
  if (!query.empty()) {
    ps = predict(sw, speed_model, query);
    ph = predict(hw, heading_model, query);
  }

  std::vector<ForecastPoint> out;
  out.reserve(horizon_steps);
  double x = anchor.x, y = anchor.y;
  double s = anchor.speed, h = anchor.heading;
  double s_var = 0.0, h_var = 0.0;
  for (int j = 0; j < horizon_steps; ++j) {
    x += dt * s * expected_cos(h, h_var);
    y += dt * s * expected_sin(h, h_var);
    double s_next, h_next, s_var_next, h_var_next;
    if (j + 1 < horizon_steps) {
      s_next = ps.means[j];
      s_var_next = ps.variances[j];
      h_next = ph.means[j];
      h_var_next = ph.variances[j];
    } else {
      s_next = s;
      s_var_next = s_var;
      h_next = h;
      h_var_next = h_var;
    }
    out.push_back({anchor.t + (j + 1) * dt, x, y, s_next, s_var_next, h_next,
                   h_var_next, ForecastSource::Gp});
    // Guard both the raw predictive mean and the variance-damped speed the
    // integrator actually uses: an exploding heading variance collapses the
    // damped speed to zero, which is just as implausible as a raw breach.
    const double eff = s * std::exp(-h_var / 2.0);
    const double eff_next = s_next * std::exp(-h_var_next / 2.0);
    if (j + 1 < horizon_steps && (violates_limits(s_next, s, dt, limits) ||
                                  violates_limits(eff_next, eff, dt, limits))) {
      // Restart from the point just emitted with a kinematic model.
      out.back().speed_mean = s;  // drop the out-of-bounds prediction
      out.back().heading_mean = h;
      out.back().source =
          accel_stale ? ForecastSource::CsFallback : ForecastSource::CaFallback;
      VehicleState from{out.back().t, x, y, s, h, anchor.accel};
      auto tail =
          accel_stale
              ? constant_speed(from, horizon_steps - (j + 1), dt, limits.v_max)
              : constant_accel(from, horizon_steps - (j + 1), dt, limits.v_max);
      out.insert(out.end(), tail.begin(), tail.end());
      return out;
    }
    s = s_next;
    h = h_next;
    s_var = s_var_next;
    h_var = h_var_next;
  }
  return out;
}

// Direct-mode HGP: x and y regressed as two independent series; positions come
// straight from the predictive means.
inline std::vector<ForecastPoint> hgp_direct_core(
    const TimeSeriesWindow& x_window, const TimeSeriesWindow& y_window,
    const GpModel& x_model, const GpModel& y_model, const VehicleState& anchor,
    int horizon_steps, const MotionLimits& limits = {}, double dt = kSamplePeriod) {
  if (x_window.size() == 0 || y_window.size() == 0)
    throw std::invalid_argument("hgp_direct: empty window");
  // window-relative time, as in the indirect core
  TimeSeriesWindow xw = x_window, yw = y_window;
  const double t_origin = xw.times.front();
  for (auto& t : xw.times) t -= t_origin;
  for (auto& t : yw.times) t -= t_origin;
  std::vector<double> query, out_times;
  for (int j = 1; j <= horizon_steps; ++j) {
    query.push_back(anchor.t - t_origin + j * dt);
    out_times.push_back(anchor.t + j * dt);
  }
  const PredictiveSeries px = predict(xw, x_model, query);
  const PredictiveSeries py = predict(yw, y_model, query);

  std::vector<ForecastPoint> out;
  out.reserve(horizon_steps);
  double prev_x = anchor.x, prev_y = anchor.y, prev_speed = anchor.speed;
  for (int j = 0; j < horizon_steps; ++j) {
    const double dx = px.means[j] - prev_x, dy = py.means[j] - prev_y;
    const double speed = std::hypot(dx, dy) / dt;
    if (violates_limits(speed, prev_speed, dt, limits)) {
      VehicleState from;
      from.t = anchor.t + j * dt;
      from.x = prev_x;
      from.y = prev_y;
      from.speed = prev_speed;
      from.heading = anchor.heading;
      from.accel = anchor.accel;
      auto tail = constant_accel(from, horizon_steps - j, dt, limits.v_max);
      out.insert(out.end(), tail.begin(), tail.end());
      return out;
    }
    out.push_back({out_times[j], px.means[j], py.means[j], speed, px.variances[j],
                   std::atan2(dy, dx), py.variances[j], ForecastSource::Gp});
    prev_x = px.means[j];
    prev_y = py.means[j];
    prev_speed = speed;
  }
  return out;
}

}  // namespace hgp
