#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgp/forecast.hpp"
#include "hgp/gp.hpp"
#include "hgp/trajectory.hpp"
#include "json.hpp"

namespace hgp {

struct ModelPair {
  GpModel speed_model;
  GpModel heading_model;
  int id = 0;
  std::string created_at;  // trip/time provenance
  std::uint64_t usage_count = 0;
};

struct KernelBank {
  std::vector<ModelPair> models;
  double pte_threshold = 0.5;  // m
  int tw = 30;                 // samples

  int next_id() const {
    int id = 0;
    for (const auto& m : models) id = std::max(id, m.id + 1);
    return id;
  }
};

struct BankStats {
  std::vector<double> model_persistency_samples;  // seconds per persistency run
  std::uint64_t new_model_events = 0;
  std::uint64_t switch_events = 0;
  std::uint64_t total_steps = 0;
  std::vector<std::uint8_t> new_model_mask;  // per evaluated step, for rate curves

  double mean_persistency() const {
    if (model_persistency_samples.empty()) return 0.0;
    double s = 0.0;
    for (double v : model_persistency_samples) s += v;
    return s / model_persistency_samples.size();
  }
};

struct BankBuildConfig {
  int tw = 30;
  double pte_th = 0.5;         // m
  int horizon_steps = 10;      // 1 s re-evaluated each step
  std::uint64_t seed = 0;
  bool allow_extend = true;    // false: evaluation-only (switching still allowed)
};

namespace detail {

inline TimeSeriesWindow window_of(const Trip& trip, std::size_t end_idx, int tw,
                                  SeriesKind kind) {
  TimeSeriesWindow w;
  w.kind = kind;
  const std::size_t begin = end_idx + 1 >= static_cast<std::size_t>(tw)
                                ? end_idx + 1 - tw
                                : 0;
  for (std::size_t i = begin; i <= end_idx; ++i) {
    w.times.push_back(trip.states[i].t);
    w.values.push_back(kind == SeriesKind::Speed ? trip.states[i].speed
                                                 : trip.states[i].heading);
  }
  return w;
}

inline ModelPair fit_pair(const TimeSeriesWindow& sw, const TimeSeriesWindow& hw,
                          int id, const std::string& provenance, std::uint64_t seed) {
  FitOptions opt;
  opt.seed = seed;
  // fit in window-relative time so hyperparameters transfer across windows
  // (the linear kernel component t*t' is not stationary)
  TimeSeriesWindow s = sw, h = hw;
  if (!s.times.empty()) {
    const double t0 = s.times.front();
    for (auto& t : s.times) t -= t0;
  }
  if (!h.times.empty()) {
    const double t0 = h.times.front();
    for (auto& t : h.times) t -= t0;
  }
  ModelPair pair;
  pair.speed_model = fit(s, opt);
  pair.heading_model = fit(h, opt);
  pair.id = id;
  pair.created_at = provenance;
  return pair;
}

// Max 2D Euclidean error of the pair's indirect forecast against ground truth
// over the evaluation horizon starting after `anchor_idx`.
inline double horizon_pte(const Trip& trip, std::size_t anchor_idx,
                          const ModelPair& pair, const BankBuildConfig& cfg) {
  const int steps = std::min<int>(cfg.horizon_steps,
                                  static_cast<int>(trip.size() - 1 - anchor_idx));
  if (steps <= 0) return 0.0;
  const auto sw = window_of(trip, anchor_idx, cfg.tw, SeriesKind::Speed);
  const auto hw = window_of(trip, anchor_idx, cfg.tw, SeriesKind::Heading);
  std::vector<ForecastPoint> fc;
  try {
    fc = hgp_indirect_core(sw, hw, pair.speed_model, pair.heading_model,
                           trip.states[anchor_idx], steps);
  } catch (const IllConditionedKernelError&) {
    // a pair whose kernel is singular on this window cannot track it
    return std::numeric_limits<double>::infinity();
  }
  double worst = 0.0;
  for (int j = 0; j < steps; ++j) {
    const VehicleState& truth = trip.states[anchor_idx + 1 + j];
    worst = std::max(worst, std::hypot(fc[j].x - truth.x, fc[j].y - truth.y));
  }
  return worst;
}

}  // namespace detail

// Offline kernel-bank generation over training trips. At each step the current
// pair forecasts the next second of positions; while its PTE stays under the
// threshold it persists. On breach every bank member is re-evaluated on the
// same window: the argmin is adopted if it meets the threshold, otherwise a
// new pair is fitted on the latest TW window and appended. Deterministic given
// trip order and seed.
inline std::pair<KernelBank, BankStats> build_bank(const std::vector<Trip>& trips,
                                                   const BankBuildConfig& cfg = {},
                                                   KernelBank initial = {}) {
  KernelBank bank = std::move(initial);
  bank.tw = cfg.tw;
  bank.pte_threshold = cfg.pte_th;
  BankStats stats;

  int current = -1;            // index into bank.models
  double persist_start = 0.0;  // t where the current persistency run began
  std::uint64_t fit_counter = 0;

  for (const auto& trip : trips) {
    if (trip.size() < static_cast<std::size_t>(cfg.tw + cfg.horizon_steps)) continue;

    const std::size_t first = cfg.tw - 1;
    // Bootstrap: first window always produces a model (or reuses the bank).
    if (bank.models.empty()) {
      const auto sw = detail::window_of(trip, first, cfg.tw, SeriesKind::Speed);
      const auto hw = detail::window_of(trip, first, cfg.tw, SeriesKind::Heading);
      bank.models.push_back(detail::fit_pair(sw, hw, bank.next_id(),
                                             trip.vehicle_id + "@" +
                                                 std::to_string(trip.states[first].t),
                                             cfg.seed + fit_counter++));
      ++stats.new_model_events;
    }
    if (current < 0) current = 0;
    persist_start = trip.states[first].t;

    for (std::size_t k = first; k + cfg.horizon_steps < trip.size(); ++k) {
      ++stats.total_steps;
      bool new_model_here = false;
      double pte = detail::horizon_pte(trip, k, bank.models[current], cfg);
      if (pte >= cfg.pte_th) {
        // close the persistency run
        stats.model_persistency_samples.push_back(trip.states[k].t - persist_start);
        // evaluate all bank members, lowest id wins ties
        int best = -1;
        double best_pte = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < bank.models.size(); ++i) {
          const double p = detail::horizon_pte(trip, k, bank.models[i], cfg);
          if (p < best_pte) {
            best_pte = p;
            best = static_cast<int>(i);
          }
        }
        if (best_pte < cfg.pte_th || !cfg.allow_extend) {
          current = best;
          ++stats.switch_events;
        } else {
          const auto sw = detail::window_of(trip, k, cfg.tw, SeriesKind::Speed);
          const auto hw = detail::window_of(trip, k, cfg.tw, SeriesKind::Heading);
          bank.models.push_back(detail::fit_pair(
              sw, hw, bank.next_id(),
              trip.vehicle_id + "@" + std::to_string(trip.states[k].t),
              cfg.seed + fit_counter++));
          current = static_cast<int>(bank.models.size()) - 1;
          ++stats.new_model_events;
          new_model_here = true;
        }
        persist_start = trip.states[k].t;
      }
      bank.models[current].usage_count++;
      stats.new_model_mask.push_back(new_model_here ? 1 : 0);
    }
    // close the run at trip end
    stats.model_persistency_samples.push_back(
        trip.states[trip.size() - 1 - cfg.horizon_steps].t - persist_start);
  }
  return {bank, stats};
}

// ---------------------------------------------------------------------------
// Clustering to a reduced bank: k-means in standardized 6-d log-hyperparameter
// space, each cluster represented by its medoid (an actual fitted pair).
// ---------------------------------------------------------------------------

inline KernelBank cluster_bank(const KernelBank& bank, int c_size = 16,
                               std::uint64_t seed = 0) {
  if (static_cast<int>(bank.models.size()) < c_size) return bank;  // unchanged

  const std::size_t n = bank.models.size();
  std::vector<std::array<double, 6>> feats(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = bank.models[i];
    feats[i] = {std::log(m.speed_model.theta.gamma),
                std::log(m.speed_model.theta.alpha1),
                std::log(m.speed_model.theta.alpha2),
                std::log(m.heading_model.theta.gamma),
                std::log(m.heading_model.theta.alpha1),
                std::log(m.heading_model.theta.alpha2)};
  }
  // standardize per dimension
  for (int d = 0; d < 6; ++d) {
    double mean = 0.0;
    for (const auto& f : feats) mean += f[d];
    mean /= n;
    double var = 0.0;
    for (const auto& f : feats) var += (f[d] - mean) * (f[d] - mean);
    const double sd = std::sqrt(var / std::max<std::size_t>(n - 1, 1));
    for (auto& f : feats) f[d] = sd > 1e-12 ? (f[d] - mean) / sd : 0.0;
  }

  auto dist2 = [](const std::array<double, 6>& a, const std::array<double, 6>& b) {
    double s = 0.0;
    for (int d = 0; d < 6; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };

  // k-means++ seeding
  std::mt19937_64 rng(seed);
  std::vector<std::array<double, 6>> centers;
  {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    centers.push_back(feats[pick(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < c_size) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, dist2(feats[i], c));
        d2[i] = best;
        total += best;
      }
      if (total <= 1e-300) {  // all remaining points coincide with centers
        centers.push_back(feats[centers.size() % n]);
        continue;
      }
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      std::size_t chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          chosen = i;
          break;
        }
      }
      centers.push_back(feats[chosen]);
    }
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < c_size; ++c) {
        const double d = dist2(feats[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    for (int c = 0; c < c_size; ++c) {
      std::array<double, 6> mean{};
      int count = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (assign[i] == c) {
          for (int d = 0; d < 6; ++d) mean[d] += feats[i][d];
          ++count;
        }
      if (count > 0)
        for (int d = 0; d < 6; ++d) centers[c][d] = mean[d] / count;
    }
    if (!changed) break;
  }

  // medoid per cluster: member minimizing summed distance within the cluster
  KernelBank out;
  out.pte_threshold = bank.pte_threshold;
  out.tw = bank.tw;
  for (int c = 0; c < c_size; ++c) {
    int medoid = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (assign[i] != c) continue;
      double cost = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (assign[j] == c) cost += dist2(feats[i], feats[j]);
      if (cost < best_cost ||
          (cost == best_cost && medoid >= 0 &&
           bank.models[i].id < bank.models[medoid].id)) {
        best_cost = cost;
        medoid = static_cast<int>(i);
      }
    }
    if (medoid >= 0) out.models.push_back(bank.models[medoid]);
  }
  std::sort(out.models.begin(), out.models.end(),
            [](const ModelPair& a, const ModelPair& b) { return a.id < b.id; });
  return out;
}

// ---------------------------------------------------------------------------
// Forecast-time model selection: independent per-series argmax of the marginal
// log-likelihood over the bank, assembled into one pair. Lowest id wins ties.
// ---------------------------------------------------------------------------

inline ModelPair select_model(const KernelBank& bank,
                              const TimeSeriesWindow& speed_window,
                              const TimeSeriesWindow& heading_window) {
  if (bank.models.empty()) throw std::invalid_argument("select_model: empty bank");
  if (speed_window.size() == 0 || speed_window.times != heading_window.times)
    throw std::invalid_argument("select_model: windows empty or misaligned");

  TimeSeriesWindow sw = speed_window, hw = heading_window;
  const double s_off = sw.mean(), h_off = hw.mean();
  for (auto& v : sw.values) v -= s_off;
  for (auto& v : hw.values) v -= h_off;
  // likelihoods are evaluated in window-relative time, matching how the bank
  // models were fitted
  const double t0 = sw.times.front();
  for (auto& t : sw.times) t -= t0;
  for (auto& t : hw.times) t -= t0;

  auto argmax = [&](const TimeSeriesWindow& w, bool speed) {
    int best = -1;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bank.models.size(); ++i) {
      const GpHyperparams& th = speed ? bank.models[i].speed_model.theta
                                      : bank.models[i].heading_model.theta;
      double ll;
      try {
        ll = marginal_log_likelihood(w, th);
      } catch (const IllConditionedKernelError&) {
        continue;
      }
      if (ll > best_ll) {
        best_ll = ll;
        best = static_cast<int>(i);
      }
    }
    if (best < 0)
      throw std::runtime_error("select_model: all likelihoods singular");
    return best;
  };

  const int is = argmax(sw, true);
  const int ih = argmax(hw, false);
  ModelPair pair;
  pair.speed_model = bank.models[is].speed_model;
  pair.heading_model = bank.models[ih].heading_model;
  pair.id = bank.models[is].id;
  pair.created_at = bank.models[is].created_at;
  return pair;
}

// Fits a new pair on the given windows and appends it. Fit failure leaves the
// bank unchanged and reports it so the caller can degrade to CA.
inline bool maybe_extend_bank(KernelBank& bank, const TimeSeriesWindow& speed_window,
                              const TimeSeriesWindow& heading_window,
                              std::uint64_t seed, const std::string& provenance = "") {
  try {
    bank.models.push_back(
        detail::fit_pair(speed_window, heading_window, bank.next_id(), provenance, seed));
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Serialization: header {tw, pte_threshold, created} + JSON array of pairs.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const KernelBank& bank,
                              const std::string& created = "") {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : bank.models)
    models.push_back({{"id", m.id},
                      {"created_at", m.created_at},
                      {"usage_count", m.usage_count},
                      {"speed_model", to_json(m.speed_model)},
                      {"heading_model", to_json(m.heading_model)}});
  return {{"tw", bank.tw},
          {"pte_threshold", bank.pte_threshold},
          {"created", created},
          {"models", models}};
}

inline KernelBank bank_from_json(const nlohmann::json& j) {
  KernelBank bank;
  bank.tw = j.at("tw").get<int>();
  bank.pte_threshold = j.at("pte_threshold").get<double>();
  for (const auto& mj : j.at("models")) {
    ModelPair m;
    m.id = mj.at("id").get<int>();
    m.created_at = mj.at("created_at").get<std::string>();
    m.usage_count = mj.at("usage_count").get<std::uint64_t>();
    m.speed_model = gp_model_from_json(mj.at("speed_model"));
    m.heading_model = gp_model_from_json(mj.at("heading_model"));
    bank.models.push_back(std::move(m));
  }
  return bank;
}

inline void save_bank(const KernelBank& bank, const std::string& path,
                      const std::string& created = "") {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_bank: cannot open " + path);
  f << to_json(bank, created).dump(2) << '\n';
}

inline KernelBank load_bank(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_bank: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return bank_from_json(j);
}

}  // namespace hgp
