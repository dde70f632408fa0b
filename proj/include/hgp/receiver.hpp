#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgp/bank.hpp"
#include "hgp/forecast.hpp"
#include "hgp/gp.hpp"
#include "hgp/trajectory.hpp"

namespace hgp {

enum class PredictorKind {
  BsmDependent,
  ConstantSpeed,
  ConstantAccel,
  KalmanCA,
  HgpIndirect,
  HgpDirect,
};

inline std::string to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::BsmDependent: return "bsm";
    case PredictorKind::ConstantSpeed: return "cs";
    case PredictorKind::ConstantAccel: return "ca";
    case PredictorKind::KalmanCA: return "kf";
    case PredictorKind::HgpIndirect: return "hgp";
    case PredictorKind::HgpDirect: return "hgp-d";
  }
  return "?";
}

struct PredictorContext {
  MotionLimits limits;
  KernelBank bank;       // each predictor instance works on its own copy
  int tw = 30;
  double pte_th = 0.5;   // m
  std::uint64_t seed = 0;
};

/// Per-RV state machine: feed accepted BSMs, query position estimates between
// them. Implementations are single-threaded per RV.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual void on_packet(const VehicleState& state, double rx_time) = 0;
  // t at or after the latest packet; undefined before the first packet.
  virtual ForecastPoint estimate(double t) = 0;
  bool ready() const { return has_packet_; }
  std::uint64_t new_model_events = 0;

 protected:
  bool has_packet_ = false;
  VehicleState last_;
};

namespace detail {

// Closed-form CS/CA point at an arbitrary lead time, speed clamped at 0.
inline ForecastPoint kinematic_at(const VehicleState& last, double lead,
                                  bool with_accel) {
  const double a = with_accel ? last.accel : 0.0;
  double d, s;
  if (a < 0.0 && last.speed + a * lead < 0.0) {
    const double t_stop = last.speed / -a;
    d = 0.5 * last.speed * t_stop;
    s = 0.0;
  } else {
    d = last.speed * lead + 0.5 * a * lead * lead;
    s = std::max(0.0, last.speed + a * lead);
    if (d < 0.0) d = 0.0;
  }
  return {last.t + lead, last.x + d * std::cos(last.heading),
          last.y + d * std::sin(last.heading), s, 0.0, last.heading, 0.0,
          with_accel ? ForecastSource::CaFallback : ForecastSource::CsFallback};
}

}  // namespace detail

class BsmDependentPredictor final : public Predictor {
 public:
  void on_packet(const VehicleState& state, double) override {
    last_ = state;
    has_packet_ = true;
  }
  ForecastPoint estimate(double t) override {
    return {t, last_.x, last_.y, last_.speed, 0.0, last_.heading, 0.0,
            ForecastSource::Hold};
  }
};

class KinematicPredictor final : public Predictor {
 public:
  explicit KinematicPredictor(bool with_accel) : with_accel_(with_accel) {}
  void on_packet(const VehicleState& state, double) override {
    last_ = state;
    has_packet_ = true;
  }
  ForecastPoint estimate(double t) override {
    return detail::kinematic_at(last_, t - last_.t, with_accel_);
  }

 private:
  bool with_accel_;
};

// 1-D longitudinal Kalman filter with CA dynamics; lateral position follows
// heading dead-reckoning from the latest accepted BSM.
class KalmanPredictor final : public Predictor {
 public:
  // Replace the default measurement-noise weights (used before any packet).
  void set_measurement_noise(double r_pos, double r_speed, double r_accel) {
    kf_.r = (Eigen::Vector3d(r_pos, r_speed, r_accel)).asDiagonal();
  }

  void on_packet(const VehicleState& state, double rx_time) override {
    if (!has_packet_) {
      kf_.x_hat = Eigen::Vector3d(0.0, state.speed, state.accel);
      kf_.p = (Eigen::Vector3d(1.0, 1.0, 1.0)).asDiagonal();
      anchor_ = state;
      filter_time_ = rx_time;
      last_ = state;
      has_packet_ = true;
      return;
    }
    // propagate to one sample before rx: kalman_step applies the final time
    // update together with the measurement update
    KalmanState kf = propagate(rx_time - kSamplePeriod);
    // Project the received position into the anchor's heading frame.
    const double ch = std::cos(anchor_.heading), sh = std::sin(anchor_.heading);
    const double dx = state.x - anchor_.x, dy = state.y - anchor_.y;
    const double d_meas = dx * ch + dy * sh;
    const double l_meas = -dx * sh + dy * ch;
    kf = kalman_step(kf, Eigen::Vector3d(d_meas, state.speed, state.accel));
    // Re-anchor at the filtered longitudinal position; the lateral residual is
    // taken as measured (heading dead-reckoning handles it between packets).
    anchor_.x = anchor_.x + kf.x_hat(0) * ch - l_meas * sh;
    anchor_.y = anchor_.y + kf.x_hat(0) * sh + l_meas * ch;
    anchor_.t = rx_time;
    anchor_.heading = state.heading;
    anchor_.speed = kf.x_hat(1);
    anchor_.accel = kf.x_hat(2);
    kf.x_hat(0) = 0.0;
    kf_ = kf;
    filter_time_ = rx_time;
    last_ = state;
  }

  ForecastPoint estimate(double t) override {
    const KalmanState kf = propagate(t);
    const double ch = std::cos(anchor_.heading), sh = std::sin(anchor_.heading);
    return {t, anchor_.x + kf.x_hat(0) * ch, anchor_.y + kf.x_hat(0) * sh,
            std::max(0.0, kf.x_hat(1)), kf.p(1, 1), anchor_.heading, 0.0,
            ForecastSource::CaFallback};
  }

  const KalmanState& filter() const { return kf_; }

 private:
  KalmanState propagate(double t) const {
    KalmanState kf = kf_;
    double now = filter_time_;
    while (now + kSamplePeriod <= t + 1e-9) {
      kf = kalman_step(kf, std::nullopt);
      now += kSamplePeriod;
    }
    return kf;
  }

  KalmanState kf_;
  VehicleState anchor_;
  double filter_time_ = 0.0;
};

// Receiver-side HGP: keeps a TW window of received speed/heading samples,
// selects the most likely bank pair on demand, forecasts positions with the
// indirect integrator, and extends its bank copy when nothing fits.
class HgpPredictor final : public Predictor {
 public:
  explicit HgpPredictor(const PredictorContext& ctx)
      : bank_(ctx.bank), limits_(ctx.limits), tw_(ctx.tw), pte_th_(ctx.pte_th),
        seed_(ctx.seed) {
    // The anchor tracker weighs measurements near the actual sensor noise
    // scale: heavy smoothing would lag the anchor behind the vehicle during
    // maneuvers, and that bias feeds every forecast anchored on it.
    track_.set_measurement_noise(0.5, 0.1, 0.25);
  }

  void on_packet(const VehicleState& state, double rx_time) override {
    // Check the running forecast against the fresh ground-truth position.
    // The stored forecast ends at the last queried instant, one step short of
    // the packet time, so extend it first.
    bool breached = false;
    if (has_packet_ && !forecast_.empty() && current_) {
      const int gap_steps = static_cast<int>(
          std::llround((rx_time - last_.t) / kSamplePeriod));
      if (gap_steps > static_cast<int>(forecast_.size())) recompute(gap_steps);
      const ForecastPoint* fp = forecast_point_at(rx_time);
      if (fp) {
        const double pte = std::hypot(fp->x - state.x, fp->y - state.y);
        breached = pte >= pte_th_;
      }
    }
    times_.push_back(state.t);
    speeds_.push_back(state.speed);
    headings_.push_back(state.heading);
    // keep the TW-second window (tw_ samples at the nominal 10 Hz): under
    // packet loss this holds fewer, sparser samples on the same time scale
    // the bank models were trained on
    while (!times_.empty() &&
           times_.front() < state.t - tw_ * kSamplePeriod + 1e-9) {
      times_.pop_front();
      speeds_.pop_front();
      headings_.pop_front();
    }
    const VehicleState prev_anchor = last_;
    // Track the position with the CA Kalman filter and anchor forecasts on the
    // filtered position: the raw last position carries the full measurement
    // noise, which otherwise floors the error of every GP forecast.
    track_.on_packet(state, rx_time);
    last_ = state;
    const ForecastPoint f0 = track_.estimate(rx_time);
    last_.x = f0.x;
    last_.y = f0.y;
    has_packet_ = true;
    forecast_.clear();
    // The window changed, so the best-fitting bank pair may have changed too:
    // re-select on every arrival. A stale pair picked during an old maneuver
    // otherwise keeps extrapolating that maneuver through the next gap.
    reselect(prev_anchor, breached);
  }

  ForecastPoint estimate(double t) override {
    const double lead = t - last_.t;
    // Hybrid serving policy. For short outages, constant-acceleration
    // propagation of the tracked state is already near-optimal: the anchor
    // sample reflects the current driving regime, while the GP extrapolates
    // the window's past trend through regime changes. Beyond the trust
    // horizon, the opposite failure applies: bank hyperparameters are trained
    // on TW-length windows, and extrapolating a window-scale trend much
    // further than that continues old maneuvers indefinitely. The GP is
    // served on the mid-range leads between the two, where regressing the
    // received series genuinely beats dead reckoning.
    if (lead <= short_horizon_ + 1e-9 ||
        lead > trust_horizon_ * tw_ * kSamplePeriod)
      return track_.estimate(t);
    if (times_.size() < 2) return detail::kinematic_at(last_, t - last_.t, true);
    if (!current_) {
      try {
        auto [sw, hw] = windows();
        current_ = select_model(bank_, sw, hw);
      } catch (const std::exception&) {
        return detail::kinematic_at(last_, t - last_.t, true);
      }
    }
    const int steps = std::max(
        1, static_cast<int>(std::llround((t - last_.t) / kSamplePeriod)));
    if (static_cast<int>(forecast_.size()) < steps) recompute(steps);
    const ForecastPoint* fp = forecast_point_at(t);
    if (!fp) return detail::kinematic_at(last_, t - last_.t, true);
    return *fp;
  }

  const KernelBank& bank() const { return bank_; }

 private:
  std::pair<TimeSeriesWindow, TimeSeriesWindow> windows() const {
    TimeSeriesWindow sw, hw;
    sw.kind = SeriesKind::Speed;
    hw.kind = SeriesKind::Heading;
    sw.times.assign(times_.begin(), times_.end());
    hw.times = sw.times;
    sw.values.assign(speeds_.begin(), speeds_.end());
    hw.values.assign(headings_.begin(), headings_.end());
    return {sw, hw};
  }

  const ForecastPoint* forecast_point_at(double t) const {
    const double lead = t - last_.t;
    const int idx = static_cast<int>(std::llround(lead / kSamplePeriod)) - 1;
    if (idx < 0 || idx >= static_cast<int>(forecast_.size())) return nullptr;
    return &forecast_[idx];
  }

  void recompute(int steps) {
    auto [sw, hw] = windows();
    try {
      forecast_ = hgp_indirect_core(sw, hw, current_->speed_model,
                                    current_->heading_model, last_, steps, limits_);
    } catch (const std::exception&) {
      forecast_ = constant_accel(last_, steps);
    }
  }

  // Re-select by likelihood on the fresh window. After a PTE breach, if even
  // the re-selected pair cannot track the elapsed gap, fit a new pair on the
  // current window and append it to the bank copy.
  void reselect(const VehicleState& prev_anchor, bool breached) {
    if (times_.size() < 2) return;
    auto [sw, hw] = windows();
    std::optional<ModelPair> candidate;
    try {
      candidate = select_model(bank_, sw, hw);
    } catch (const std::exception&) {
    }
    if (breached) {
      bool fits = false;
      if (candidate) {
        try {
          const int gap_steps = std::max(
              1, static_cast<int>(
                     std::llround((last_.t - prev_anchor.t) / kSamplePeriod)));
          auto fc = hgp_indirect_core(sw, hw, candidate->speed_model,
                                      candidate->heading_model, prev_anchor,
                                      gap_steps, limits_);
          const double err =
              std::hypot(fc.back().x - last_.x, fc.back().y - last_.y);
          fits = err < pte_th_;
        } catch (const std::exception&) {
        }
      }
      if (!fits && times_.size() >= 5) {
        if (maybe_extend_bank(bank_, sw, hw, seed_ + new_model_events, "online")) {
          ++new_model_events;
          candidate = bank_.models.back();
        }
      }
    }
    if (candidate) current_ = candidate;
  }

  KernelBank bank_;
  MotionLimits limits_;
  int tw_;
  double pte_th_;
  std::uint64_t seed_;
  std::deque<double> times_, speeds_, headings_;
  std::optional<ModelPair> current_;
  std::vector<ForecastPoint> forecast_;
  KalmanPredictor track_;        // position tracker feeding the anchor
  double short_horizon_ = 1.5;   // seconds: tracked CA serves leads up to this
  // GP forecasts are served up to this many window-lengths of lead.
  double trust_horizon_ = 4.0 / 3.0;
};

// Direct-mode HGP: x and y regressed as independent series. Models are fitted
// on the fly (first full window, refit on PTE breach); there is no offline
// bank for position series.
class HgpDirectPredictor final : public Predictor {
 public:
  explicit HgpDirectPredictor(const PredictorContext& ctx)
      : limits_(ctx.limits), tw_(ctx.tw), pte_th_(ctx.pte_th), seed_(ctx.seed) {}

  void on_packet(const VehicleState& state, double rx_time) override {
    if (has_packet_ && !forecast_.empty() && x_model_) {
      const double lead = rx_time - last_.t;
      const int idx = static_cast<int>(std::llround(lead / kSamplePeriod)) - 1;
      if (idx >= static_cast<int>(forecast_.size())) {
        auto [xw, yw] = windows();
        try {
          forecast_ = hgp_direct_core(xw, yw, *x_model_, *y_model_, last_,
                                      idx + 1, limits_);
        } catch (const std::exception&) {
        }
      }
      if (idx >= 0 && idx < static_cast<int>(forecast_.size())) {
        const double pte = std::hypot(forecast_[idx].x - state.x,
                                      forecast_[idx].y - state.y);
        if (pte >= pte_th_) needs_refit_ = true;
      }
    }
    times_.push_back(state.t);
    xs_.push_back(state.x);
    ys_.push_back(state.y);
    // TW-second window, matching the indirect predictor
    while (!times_.empty() &&
           times_.front() < state.t - tw_ * kSamplePeriod + 1e-9) {
      times_.pop_front();
      xs_.pop_front();
      ys_.pop_front();
    }
    last_ = state;
    has_packet_ = true;
    forecast_.clear();
  }

  ForecastPoint estimate(double t) override {
    if (times_.size() < 5) return detail::kinematic_at(last_, t - last_.t, true);
    if (!x_model_ || needs_refit_) refit();
    if (!x_model_) return detail::kinematic_at(last_, t - last_.t, true);
    const int steps = std::max(
        1, static_cast<int>(std::llround((t - last_.t) / kSamplePeriod)));
    if (static_cast<int>(forecast_.size()) < steps) {
      auto [xw, yw] = windows();
      try {
        forecast_ = hgp_direct_core(xw, yw, *x_model_, *y_model_, last_, steps,
                                    limits_);
      } catch (const std::exception&) {
        forecast_ = constant_accel(last_, steps);
      }
    }
    const int idx = static_cast<int>(
        std::llround((t - last_.t) / kSamplePeriod)) - 1;
    if (idx < 0 || idx >= static_cast<int>(forecast_.size()))
      return detail::kinematic_at(last_, t - last_.t, true);
    return forecast_[idx];
  }

 private:
  std::pair<TimeSeriesWindow, TimeSeriesWindow> windows() const {
    TimeSeriesWindow xw, yw;
    xw.kind = SeriesKind::X;
    yw.kind = SeriesKind::Y;
    xw.times.assign(times_.begin(), times_.end());
    yw.times = xw.times;
    xw.values.assign(xs_.begin(), xs_.end());
    yw.values.assign(ys_.begin(), ys_.end());
    return {xw, yw};
  }

  void refit() {
    needs_refit_ = false;
    auto [xw, yw] = windows();
    // window-relative time, matching how the forecast core applies the models
    const double t0 = xw.times.front();
    for (auto& t : xw.times) t -= t0;
    for (auto& t : yw.times) t -= t0;
    FitOptions opt;
    opt.seed = seed_ + new_model_events;
    try {
      x_model_ = fit(xw, opt);
      y_model_ = fit(yw, opt);
      ++new_model_events;
    } catch (const std::exception&) {
    }
  }

  MotionLimits limits_;
  int tw_;
  double pte_th_;
  std::uint64_t seed_;
  std::deque<double> times_, xs_, ys_;
  std::optional<GpModel> x_model_, y_model_;
  std::vector<ForecastPoint> forecast_;
  bool needs_refit_ = false;
};

// ---------------------------------------------------------------------------
// Predictor plugin registry: external baselines register a factory under a
// kind name and get the same (config, bank) context the builtins use.
// ---------------------------------------------------------------------------

using PredictorFactory =
    std::function<std::unique_ptr<Predictor>(const PredictorContext&)>;

inline std::map<std::string, PredictorFactory>& predictor_registry() {
  static std::map<std::string, PredictorFactory> registry = {
      {"bsm", [](const PredictorContext&) {
         return std::make_unique<BsmDependentPredictor>();
       }},
      {"cs", [](const PredictorContext&) {
         return std::make_unique<KinematicPredictor>(false);
       }},
      {"ca", [](const PredictorContext&) {
         return std::make_unique<KinematicPredictor>(true);
       }},
      {"kf", [](const PredictorContext&) {
         return std::make_unique<KalmanPredictor>();
       }},
      {"hgp", [](const PredictorContext& ctx) {
         return std::make_unique<HgpPredictor>(ctx);
       }},
      {"hgp-d", [](const PredictorContext& ctx) {
         return std::make_unique<HgpDirectPredictor>(ctx);
       }},
  };
  return registry;
}

inline void register_predictor(const std::string& name, PredictorFactory factory) {
  predictor_registry()[name] = std::move(factory);
}

inline std::unique_ptr<Predictor> make_predictor(const std::string& name,
                                                 const PredictorContext& ctx) {
  auto it = predictor_registry().find(name);
  if (it == predictor_registry().end())
    throw std::invalid_argument("unknown predictor kind: " + name);
  return it->second(ctx);
}

inline std::unique_ptr<Predictor> make_predictor(PredictorKind kind,
                                                 const PredictorContext& ctx) {
  return make_predictor(to_string(kind), ctx);
}

}  // namespace hgp
