#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hgp/bank.hpp"
#include "hgp/catc.hpp"
#include "hgp/channel.hpp"
#include "hgp/metrics.hpp"
#include "hgp/receiver.hpp"
#include "hgp/safety.hpp"
#include "hgp/trajectory.hpp"

namespace hgp {

struct ExperimentConfig {
  std::vector<std::string> trip_paths;     // CSV trips; empty -> synthetic suite
  std::vector<std::string> script_paths;   // maneuver scripts to generate from
  int n_synthetic = 20;
  std::vector<std::string> predictors = {"bsm", "cs", "ca", "kf", "hgp"};
  std::vector<double> per_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                  0.6, 0.7, 0.8, 0.9, 0.95};
  std::vector<int> rate_grid = {10, 5, 2, 1};
  int replications = 1;
  int tw = 30;             // defaults mirror TW=3s, PTE_th=50cm, C_size=16
  double pte_th = 0.5;
  int c_size = 16;
  double noise_sigma = 0.0;  // position noise on the transmitted copy
  double follow_delay = 2.0; // s the scripted HV trails the RV
  int warm_steps = 30;       // evaluation starts once every predictor has history
  FcwConfig fcw;
  MotionLimits limits;
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  std::string bank_path;
};

// ---------------------------------------------------------------------------
// Key-value config file
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "trips") cfg.trip_paths = detail::split_csv_list(val);
    else if (key == "scripts") cfg.script_paths = detail::split_csv_list(val);
    else if (key == "n_synthetic") cfg.n_synthetic = std::stoi(val);
    else if (key == "predictors") cfg.predictors = detail::split_csv_list(val);
    else if (key == "per_grid") {
      cfg.per_grid.clear();
      for (const auto& v : detail::split_csv_list(val))
        cfg.per_grid.push_back(std::stod(v) / 100.0);
    } else if (key == "rate_grid") {
      cfg.rate_grid.clear();
      for (const auto& v : detail::split_csv_list(val))
        cfg.rate_grid.push_back(std::stoi(v));
    } else if (key == "replications") cfg.replications = std::stoi(val);
    else if (key == "tw") cfg.tw = std::stoi(val);
    else if (key == "pte_th") cfg.pte_th = std::stod(val);
    else if (key == "c_size") cfg.c_size = std::stoi(val);
    else if (key == "noise_sigma") cfg.noise_sigma = std::stod(val);
    else if (key == "follow_delay") cfg.follow_delay = std::stod(val);
    else if (key == "warm_steps") cfg.warm_steps = std::stoi(val);
    else if (key == "fcw_t_d") cfg.fcw.t_d = std::stod(val);
    else if (key == "fcw_a_req") cfg.fcw.a_req = std::stod(val);
    else if (key == "v_max") cfg.limits.v_max = std::stod(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "out") cfg.out_dir = val;
    else if (key == "bank") cfg.bank_path = val;
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  return parse_experiment_config(f);
}

inline void save_experiment_config(const ExperimentConfig& cfg, std::ostream& os) {
  os.precision(17);
  auto join_d = [](const std::vector<double>& v, double scale) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? "," : "") + std::to_string(v[i] * scale);
    return s;
  };
  os << "seed = " << cfg.seed << "\n";
  os << "tw = " << cfg.tw << "\n";
  os << "pte_th = " << cfg.pte_th << "\n";
  os << "c_size = " << cfg.c_size << "\n";
  os << "n_synthetic = " << cfg.n_synthetic << "\n";
  os << "noise_sigma = " << cfg.noise_sigma << "\n";
  os << "follow_delay = " << cfg.follow_delay << "\n";
  os << "warm_steps = " << cfg.warm_steps << "\n";
  os << "fcw_t_d = " << cfg.fcw.t_d << "\n";
  os << "fcw_a_req = " << cfg.fcw.a_req << "\n";
  os << "per_grid = " << join_d(cfg.per_grid, 100.0) << "\n";
  std::string rg, pr, tp;
  for (std::size_t i = 0; i < cfg.rate_grid.size(); ++i)
    rg += (i ? "," : "") + std::to_string(cfg.rate_grid[i]);
  os << "rate_grid = " << rg << "\n";
  for (std::size_t i = 0; i < cfg.predictors.size(); ++i)
    pr += (i ? "," : "") + cfg.predictors[i];
  os << "predictors = " << pr << "\n";
  for (std::size_t i = 0; i < cfg.trip_paths.size(); ++i)
    tp += (i ? "," : "") + cfg.trip_paths[i];
  if (!tp.empty()) os << "trips = " << tp << "\n";
  if (!cfg.bank_path.empty()) os << "bank = " << cfg.bank_path << "\n";
  os << "out = " << cfg.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// Synthetic trip suite: scripted mixes of cruising, braking, accelerating,
// turning and lane changes, deterministic from the root seed.
// ---------------------------------------------------------------------------

inline std::vector<ManeuverScript> synthetic_suite_scripts(int n, std::uint64_t seed) {
  std::vector<ManeuverScript> scripts;
  std::mt19937_64 rng(mix_seed(seed, 0x5cf17ULL));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    ManeuverScript s;
    s.id = "syn" + std::to_string(i);
    s.speed0 = 10.0 + 10.0 * u(rng);
    s.heading0 = 2.0 * M_PI * u(rng);
    // Per-step accelerometer texture: real pedal/road accel wobbles by a few
    // tenths of m/s^2 even in steady driving; the instantaneous accel field of
    // a broadcast sample carries that wobble.
    s.accel_jitter = 0.4;
    auto seg = [&](ManeuverSegment::Kind k, double dur, double val) {
      ManeuverSegment m;
      m.kind = k;
      m.duration = dur;
      m.value = val;
      s.segments.push_back(m);
    };
    const double bend = (u(rng) < 0.5 ? -1.0 : 1.0) * (0.02 + 0.03 * u(rng));
    // Segments run long enough that a multi-second forecast usually stays
    // inside one driving regime, as on a real route; regime changes still
    // happen, they are just not every few seconds.
    seg(ManeuverSegment::Kind::Cruise, 10.0, 0.0);
    seg(ManeuverSegment::Kind::Accelerate, 7.0, 0.5 + 1.0 * u(rng));
    seg(ManeuverSegment::Kind::Turn, 10.0 + 6.0 * u(rng),
        (u(rng) < 0.5 ? -1.0 : 1.0) * (0.08 + 0.10 * u(rng)));
    // winding stretch: a gentle S-curve instead of a straight connector
    seg(ManeuverSegment::Kind::Turn, 8.0 + 4.0 * u(rng), bend);
    seg(ManeuverSegment::Kind::Turn, 8.0 + 4.0 * u(rng), -bend);
    seg(ManeuverSegment::Kind::Brake, 5.0, -(1.0 + 1.5 * u(rng)));
    seg(ManeuverSegment::Kind::LaneChange, 4.0, u(rng) < 0.5 ? -3.5 : 3.5);
    seg(ManeuverSegment::Kind::Turn, 9.0 + 5.0 * u(rng),
        (u(rng) < 0.5 ? -1.0 : 1.0) * (0.06 + 0.08 * u(rng)));
    seg(ManeuverSegment::Kind::Cruise, 8.0, 0.0);
    scripts.push_back(std::move(s));
  }
  return scripts;
}

inline std::vector<Trip> load_or_generate_trips(const ExperimentConfig& cfg) {
  std::vector<Trip> trips;
  for (const auto& p : cfg.trip_paths)
    trips.push_back(resample_uniform(load_trip_csv(p)));
  for (const auto& p : cfg.script_paths)
    trips.push_back(generate_synthetic_trip(load_maneuver_script(p),
                                            mix_seed(cfg.seed, trips.size())));
  if (trips.empty()) {
    auto scripts = synthetic_suite_scripts(cfg.n_synthetic, cfg.seed);
    for (std::size_t i = 0; i < scripts.size(); ++i)
      trips.push_back(generate_synthetic_trip(scripts[i], mix_seed(cfg.seed, i)));
  }
  return trips;
}

// ---------------------------------------------------------------------------
// Receiver-side simulation of one (trip, predictor, channel) cell
// ---------------------------------------------------------------------------

struct TripRunResult {
  std::vector<double> pte;        // per evaluated 10 Hz instant
  std::vector<bool> warns;        // FCW warn flags on the same grid
  std::vector<bool> gt_warns;     // clean-channel reference decisions
  std::uint64_t new_model_events = 0;
  std::vector<std::uint8_t> new_model_mask;
  std::uint64_t delivered = 0;
  std::uint64_t transmitted = 0;
};

inline VehicleState to_state(const SnapshotEntry& e) {
  return {e.t, e.x, e.y, e.speed, e.heading, e.accel};
}

// The HV trails the RV on the same path, delayed by follow_delay; its own
// state is sensed perfectly. The decision grid starts after warm_steps so all
// predictors are evaluated on identical instants.
inline TripRunResult run_trip_cell(const Trip& truth, const Trip& transmitted,
                                   const std::string& predictor,
                                   const ChannelConfig& ch,
                                   const PredictorContext& ctx,
                                   const ExperimentConfig& cfg) {
  TripRunResult res;
  auto packets = emit(transmitted, ch);
  std::map<std::int64_t, const BsmPacket*> delivered_at;  // key: 10 Hz index
  for (const auto& p : packets) {
    ++res.transmitted;
    if (p.dropped) continue;
    ++res.delivered;
    delivered_at[std::llround(p.rx_time / kSamplePeriod)] = &p;
  }

  auto pred = make_predictor(predictor, ctx);
  const int delay_steps =
      static_cast<int>(std::llround(cfg.follow_delay / kSamplePeriod));

  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double t = truth.states[k].t;
    const auto key = static_cast<std::int64_t>(
        std::llround(t / kSamplePeriod));
    const auto hit = delivered_at.find(key);
    const bool fresh = hit != delivered_at.end();
    if (fresh) pred->on_packet(hit->second->state, t);
    if (k < static_cast<std::size_t>(cfg.warm_steps)) continue;
    if (!pred->ready()) continue;

    SnapshotEntry rv;
    rv.id = truth.vehicle_id;
    rv.t = t;
    if (fresh) {
      const VehicleState& s = hit->second->state;
      rv.x = s.x;
      rv.y = s.y;
      rv.speed = s.speed;
      rv.heading = s.heading;
      rv.accel = s.accel;
      rv.from_bsm = true;
    } else {
      const ForecastPoint fp = pred->estimate(t);
      rv.x = fp.x;
      rv.y = fp.y;
      rv.speed = fp.speed_mean;
      rv.heading = fp.heading_mean;
      rv.accel = 0.0;
      rv.source = fp.source;
    }
    res.pte.push_back(std::hypot(rv.x - truth.states[k].x, rv.y - truth.states[k].y));
    res.new_model_mask.push_back(0);

    // FCW against the trailing HV (skipped while the HV start is off-path)
    if (static_cast<int>(k) >= delay_steps) {
      VehicleState hv = truth.states[k - delay_steps];
      hv.t = t;
      std::tie(rv.zone, rv.direction) = classify(hv, to_state(rv));
      const bool routed = zones_to_apps(rv.zone, rv.direction).count("FCW") > 0;
      bool warn = false;
      if (routed) {
        const double range = std::hypot(rv.x - hv.x, rv.y - hv.y);
        warn = warning_range(hv, rv, range, cfg.fcw).warn;
      }
      res.warns.push_back(warn);

      // clean-channel reference decision
      SnapshotEntry gt_rv;
      gt_rv.id = rv.id;
      gt_rv.t = t;
      gt_rv.x = truth.states[k].x;
      gt_rv.y = truth.states[k].y;
      gt_rv.speed = truth.states[k].speed;
      gt_rv.heading = truth.states[k].heading;
      gt_rv.accel = truth.states[k].accel;
      gt_rv.from_bsm = true;
      std::tie(gt_rv.zone, gt_rv.direction) = classify(hv, to_state(gt_rv));
      bool gt_warn = false;
      if (zones_to_apps(gt_rv.zone, gt_rv.direction).count("FCW")) {
        const double range = std::hypot(gt_rv.x - hv.x, gt_rv.y - hv.y);
        gt_warn = warning_range(hv, gt_rv, range, cfg.fcw).warn;
      }
      res.gt_warns.push_back(gt_warn);
    } else {
      res.warns.push_back(false);
      res.gt_warns.push_back(false);
    }
  }
  res.new_model_events = pred->new_model_events;
  return res;
}

// ---------------------------------------------------------------------------
// Full factorial sweep
// ---------------------------------------------------------------------------

struct SweepCell {
  double per = 0.0;
  int rate_hz = 10;
  std::string predictor;
  int replication = 0;
  double p95_pte = 0.0;
  double mean_pte = 0.0;
  double fcw_accuracy = 1.0;
  std::map<double, std::size_t> exceed;
  std::uint64_t new_model_events = 0;
  std::size_t n_samples = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
};

// Channel seeds depend only on (root seed, trip, rate, replication), never on
// predictor or PER: every predictor sees identical drop masks per cell, and
// delivered sets are nested across the PER grid.
inline SweepResult sweep(const std::vector<Trip>& trips, const KernelBank& bank,
                         const ExperimentConfig& cfg) {
  SweepResult out;

  std::vector<Trip> transmitted;
  transmitted.reserve(trips.size());
  for (std::size_t i = 0; i < trips.size(); ++i)
    transmitted.push_back(
        add_position_noise(trips[i], cfg.noise_sigma, mix_seed(cfg.seed, 7000 + i)));

  struct Axis {
    double per;
    int rate;
  };
  std::vector<Axis> axes;
  for (double per : cfg.per_grid) axes.push_back({per, 10});
  for (int rate : cfg.rate_grid)
    if (rate != 10) axes.push_back({0.0, rate});

  for (const auto& axis : axes) {
    for (int rep = 0; rep < cfg.replications; ++rep) {
      for (const auto& predictor : cfg.predictors) {
        SweepCell cell;
        cell.per = axis.per;
        cell.rate_hz = axis.rate;
        cell.predictor = predictor;
        cell.replication = rep;
        std::vector<double> pte_all;
        std::vector<bool> warns, gt_warns;
        for (std::size_t i = 0; i < trips.size(); ++i) {
          ChannelConfig ch;
          ch.per = axis.per;
          ch.rate_hz = axis.rate;
          ch.seed = mix_seed(cfg.seed, (i << 20) ^ (axis.rate << 8) ^ rep);
          PredictorContext ctx;
          ctx.limits = cfg.limits;
          ctx.bank = bank;
          ctx.tw = cfg.tw;
          ctx.pte_th = cfg.pte_th;
          ctx.seed = mix_seed(cfg.seed, 0xF17 + i);
          auto r = run_trip_cell(trips[i], transmitted[i], predictor, ch, ctx, cfg);
          pte_all.insert(pte_all.end(), r.pte.begin(), r.pte.end());
          warns.insert(warns.end(), r.warns.begin(), r.warns.end());
          gt_warns.insert(gt_warns.end(), r.gt_warns.begin(), r.gt_warns.end());
          cell.new_model_events += r.new_model_events;
        }
        const PteSummary s = summarize_pte(pte_all);
        cell.p95_pte = s.p95;
        cell.mean_pte = s.mean;
        cell.exceed = s.exceed_counts;
        cell.n_samples = s.n_samples;
        cell.fcw_accuracy = fcw_accuracy(gt_warns, warns).accuracy();
        out.cells.push_back(std::move(cell));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV emission (Table-I-shaped summaries)
// ---------------------------------------------------------------------------

namespace detail {

template <typename Value>
inline void write_grid_csv(std::ostream& os, const std::string& axis_name,
                           const std::vector<std::string>& predictors,
                           const std::vector<double>& axis,
                           const std::map<std::pair<std::string, double>, Value>& cells) {
  os << "predictor";
  for (double a : axis) os << ',' << a;
  os << '\n';
  os.precision(6);
  os << std::fixed;
  for (const auto& p : predictors) {
    os << p;
    for (double a : axis) {
      auto it = cells.find({p, a});
      os << ',';
      if (it != cells.end()) os << it->second;
    }
    os << '\n';
  }
  (void)axis_name;
}

}  // namespace detail

inline void write_sweep_csvs(const SweepResult& result, const ExperimentConfig& cfg,
                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::map<std::pair<std::string, double>, double> pte_per, fcw_per, pte_rate, fcw_rate;
  std::map<std::pair<std::string, double>, std::map<double, std::size_t>> exceed_per;
  for (const auto& c : result.cells) {
    if (c.replication != 0) continue;  // summaries use the first replication
    if (c.rate_hz == 10) {
      pte_per[{c.predictor, c.per * 100.0}] = c.p95_pte;
      fcw_per[{c.predictor, c.per * 100.0}] = c.fcw_accuracy;
      exceed_per[{c.predictor, c.per * 100.0}] = c.exceed;
    }
    if (c.per == 0.0) {
      pte_rate[{c.predictor, double(c.rate_hz)}] = c.p95_pte;
      fcw_rate[{c.predictor, double(c.rate_hz)}] = c.fcw_accuracy;
    }
  }

  std::vector<double> per_axis, rate_axis;
  for (double p : cfg.per_grid) per_axis.push_back(p * 100.0);
  for (int r : cfg.rate_grid) rate_axis.push_back(r);
  std::sort(rate_axis.rbegin(), rate_axis.rend());

  {
    std::ofstream f(out_dir + "/pte_vs_per.csv");
    detail::write_grid_csv(f, "per", cfg.predictors, per_axis, pte_per);
  }
  {
    std::ofstream f(out_dir + "/fcw_vs_per.csv");
    detail::write_grid_csv(f, "per", cfg.predictors, per_axis, fcw_per);
  }
  {
    std::ofstream f(out_dir + "/pte_vs_rate.csv");
    detail::write_grid_csv(f, "rate", cfg.predictors, rate_axis, pte_rate);
  }
  {
    std::ofstream f(out_dir + "/fcw_vs_rate.csv");
    detail::write_grid_csv(f, "rate", cfg.predictors, rate_axis, fcw_rate);
  }
  {
    std::ofstream f(out_dir + "/exceed_counts.csv");
    f << "predictor,per,threshold,count\n";
    for (const auto& [key, counts] : exceed_per)
      for (const auto& [th, count] : counts)
        f << key.first << ',' << key.second << ',' << th << ',' << count << '\n';
  }
  {
    std::ofstream f(out_dir + "/raw_cells.csv");
    f << "per,rate,predictor,replication,p95_pte,mean_pte,fcw_accuracy,new_models,n\n";
    f.precision(9);
    for (const auto& c : result.cells)
      f << c.per * 100.0 << ',' << c.rate_hz << ',' << c.predictor << ','
        << c.replication << ',' << c.p95_pte << ',' << c.mean_pte << ','
        << c.fcw_accuracy << ',' << c.new_model_events << ',' << c.n_samples << '\n';
  }
}

}  // namespace hgp
