#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "hgp/catc.hpp"
#include "hgp/trajectory.hpp"

namespace hgp {

struct FcwConfig {
  double t_d = 1.5;          // s, driver + brake delay
  double a_req = -5.0;       // m/s^2, required HV deceleration (< 0)
  double eval_period = 0.1;  // s
};

enum class BorCase { Stationary, MovingMoving, MovingStopping };

inline std::string to_string(BorCase c) {
  switch (c) {
    case BorCase::Stationary: return "Stationary";
    case BorCase::MovingMoving: return "MovingMoving";
    case BorCase::MovingStopping: return "MovingStopping";
  }
  return "?";
}

struct FcwDecision {
  double t = 0.0;
  std::string rv_id;
  double range = 0.0;  // m
  double r_w = 0.0;    // m
  bool warn = false;
  BorCase bor_case = BorCase::MovingMoving;
  bool from_bsm = true;  // RV state source: fresh BSM vs forecast
};

struct BorResult {
  double bor = 0.0;
  BorCase bor_case = BorCase::MovingMoving;
};

// Brake Onset Range with the three CAMP cases. `range` and `v_hv_pred` feed
// the stopping-time test deciding between cases 2 and 3. RV counts as
// stationary below 0.5 m/s; "stopping" means a_RV < 0 and the RV halts before
// the HV covers the current range. Negative BOR clamps to 0, a degenerate
// case-2 denominator yields +inf (no deceleration margin: always warn while
// closing).
inline BorResult bor(double v_hvp, double v_rvp, double v_rv, double a_rv,
                     double a_req, double range = std::numeric_limits<double>::infinity()) {
  BorResult r;
  constexpr double kStationary = 0.5;
  if (v_rv < kStationary) {
    r.bor_case = BorCase::Stationary;
    r.bor = v_hvp * v_hvp / (-2.0 * a_req);
  } else {
    bool stopping = false;
    if (a_rv < 0.0) {
      const double t_stop = v_rvp / -a_rv;
      const double t_reach = v_hvp > 1e-6 ? range / v_hvp
                                          : std::numeric_limits<double>::infinity();
      stopping = t_stop < t_reach;
    }
    if (stopping) {
      r.bor_case = BorCase::MovingStopping;
      r.bor = v_hvp * v_hvp / (-2.0 * a_req) - v_rvp * v_rvp / (-2.0 * a_rv);
    } else {
      r.bor_case = BorCase::MovingMoving;
      const double denom = -2.0 * (a_req - a_rv);
      if (std::fabs(denom) < 1e-12) {
        r.bor = std::numeric_limits<double>::infinity();
        return r;
      }
      const double dv = v_hvp - v_rvp;
      r.bor = dv * dv / denom;
    }
  }
  r.bor = std::max(r.bor, 0.0);
  return r;
}

// CAMP Linear warning range: r_w = BOR + (v_HV - v_RV) t_d
// + (a_HV - a_RV) t_d^2 / 2, clamped at 0. Warn iff range < r_w.
inline FcwDecision warning_range(const VehicleState& hv, const SnapshotEntry& rv,
                                 double range, const FcwConfig& cfg = {}) {
  const double v_hvp = std::max(0.0, hv.speed + hv.accel * cfg.t_d);
  const double v_rvp = std::max(0.0, rv.speed + rv.accel * cfg.t_d);
  const BorResult b = bor(v_hvp, v_rvp, rv.speed, rv.accel, cfg.a_req, range);
  double r_w = b.bor + (hv.speed - rv.speed) * cfg.t_d +
               0.5 * (hv.accel - rv.accel) * cfg.t_d * cfg.t_d;
  r_w = std::max(r_w, 0.0);
  FcwDecision d;
  d.t = hv.t;
  d.rv_id = rv.id;
  d.range = range;
  d.r_w = r_w;
  d.warn = range < r_w;
  d.bor_case = b.bor_case;
  d.from_bsm = rv.from_bsm;
  return d;
}

// Evaluates every RV the zone table routes to FCW in one CAM snapshot.
inline std::vector<FcwDecision> fcw_step(const VehicleState& hv,
                                         const std::vector<SnapshotEntry>& snapshot,
                                         const FcwConfig& cfg = {}) {
  std::vector<FcwDecision> out;
  for (const auto& rv : snapshot) {
    if (!zones_to_apps(rv.zone, rv.direction).count("FCW")) continue;
    const double range = std::hypot(rv.x - hv.x, rv.y - hv.y);
    out.push_back(warning_range(hv, rv, range, cfg));
  }
  return out;
}

// Decision log CSV: `t,rv_id,range,r_w,warn,case,source`.
inline void write_fcw_csv(std::ostream& os, const std::vector<FcwDecision>& decisions) {
  os << "t,rv_id,range,r_w,warn,case,source\n";
  os.precision(12);
  for (const auto& d : decisions)
    os << d.t << ',' << d.rv_id << ',' << d.range << ',' << d.r_w << ','
       << (d.warn ? 1 : 0) << ',' << to_string(d.bor_case) << ','
       << (d.from_bsm ? "bsm" : "forecast") << '\n';
}

}  // namespace hgp
