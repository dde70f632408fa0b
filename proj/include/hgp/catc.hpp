#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hgp/forecast.hpp"
#include "hgp/receiver.hpp"
#include "hgp/trajectory.hpp"
#include "json.hpp"

namespace hgp {

enum class Longitudinal { Ahead, Behind };
enum class Lateral { FarLeft, Left, OnCentre, Right, FarRight };
enum class Direction { Ongoing, Oncoming, Unclassified };

struct ClassificationZone {
  Longitudinal longitudinal = Longitudinal::Ahead;
  Lateral lateral = Lateral::OnCentre;
};

inline std::string to_string(Longitudinal l) {
  return l == Longitudinal::Ahead ? "Ahead" : "Behind";
}
inline std::string to_string(Lateral l) {
  switch (l) {
    case Lateral::FarLeft: return "FarLeft";
    case Lateral::Left: return "Left";
    case Lateral::OnCentre: return "OnCentre";
    case Lateral::Right: return "Right";
    case Lateral::FarRight: return "FarRight";
  }
  return "?";
}
inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::Ongoing: return "Ongoing";
    case Direction::Oncoming: return "Oncoming";
    case Direction::Unclassified: return "Unclassified";
  }
  return "?";
}

struct TcConfig {
  double w_lane = 3.5;                 // m
  double dphi_ongoing = M_PI / 4.0;    // rad
  double dphi_oncoming = 3.0 * M_PI / 4.0;
  double staleness_limit = 3.0;        // s
};

// Relative-position classification in the HV-heading-aligned frame: the RV-HV
// displacement is rotated by -heading_HV; the longitudinal component is Xrel,
// the lateral component ld (left positive). OnCentre owns both +/-0.5*w_lane
// boundaries; Left/Right own their outer 1.5*w_lane boundary. The lane heading
// proxy is the HV heading.
inline std::pair<ClassificationZone, Direction> classify(const VehicleState& hv,
                                                         const VehicleState& rv,
                                                         const TcConfig& cfg = {}) {
  const double ch = std::cos(hv.heading), sh = std::sin(hv.heading);
  const double dx = rv.x - hv.x, dy = rv.y - hv.y;
  const double xrel = dx * ch + dy * sh;
  const double ld = -dx * sh + dy * ch;

  ClassificationZone zone;
  zone.longitudinal = xrel >= 0.0 ? Longitudinal::Ahead : Longitudinal::Behind;
  const double half = 0.5 * cfg.w_lane, sesq = 1.5 * cfg.w_lane;
  if (ld > sesq) zone.lateral = Lateral::FarLeft;
  else if (ld > half) zone.lateral = Lateral::Left;     // (0.5w, 1.5w]
  else if (ld >= -half) zone.lateral = Lateral::OnCentre;  // [-0.5w, 0.5w]
  else if (ld >= -sesq) zone.lateral = Lateral::Right;  // [-1.5w, -0.5w)
  else zone.lateral = Lateral::FarRight;

  const double dphi = std::fabs(wrap_pi(rv.heading - hv.heading));
  Direction dir = Direction::Unclassified;
  if (dphi <= cfg.dphi_ongoing) dir = Direction::Ongoing;
  else if (dphi >= cfg.dphi_oncoming) dir = Direction::Oncoming;
  return {zone, dir};
}

// ---------------------------------------------------------------------------
// Zone -> safety application routing (configuration data, not code).
// ---------------------------------------------------------------------------

struct ZoneAppTable {
  // key: (longitudinal, lateral, direction) all stringified; value: app tags
  std::map<std::string, std::set<std::string>> entries;

  static std::string key(Longitudinal lon, Lateral lat, Direction dir) {
    return to_string(lon) + "/" + to_string(lat) + "/" + to_string(dir);
  }

  static ZoneAppTable defaults() {
    ZoneAppTable t;
    auto add = [&](Longitudinal lon, Lateral lat, Direction dir,
                   std::set<std::string> apps) {
      t.entries[key(lon, lat, dir)] = std::move(apps);
    };
    for (Direction dir : {Direction::Ongoing, Direction::Unclassified}) {
      add(Longitudinal::Ahead, Lateral::OnCentre, dir, {"FCW", "EEBL"});
      add(Longitudinal::Ahead, Lateral::Left, dir, {"LCW"});
      add(Longitudinal::Ahead, Lateral::Right, dir, {"LCW"});
      add(Longitudinal::Behind, Lateral::Left, dir, {"BSW", "LCW"});
      add(Longitudinal::Behind, Lateral::Right, dir, {"BSW", "LCW"});
    }
    add(Longitudinal::Ahead, Lateral::OnCentre, Direction::Oncoming, {"DNPW"});
    return t;
  }
};

inline std::set<std::string> zones_to_apps(const ClassificationZone& zone,
                                           Direction dir,
                                           const ZoneAppTable& table) {
  auto it = table.entries.find(ZoneAppTable::key(zone.longitudinal, zone.lateral, dir));
  return it == table.entries.end() ? std::set<std::string>{} : it->second;
}

inline std::set<std::string> zones_to_apps(const ClassificationZone& zone,
                                           Direction dir) {
  static const ZoneAppTable table = ZoneAppTable::defaults();
  return zones_to_apps(zone, dir, table);
}

// ---------------------------------------------------------------------------
// Local map
// ---------------------------------------------------------------------------

struct LocalMapRecord {
  std::string vehicle_id;
  VehicleState last_bsm;
  double last_rx_time = 0.0;
  std::deque<VehicleState> path_history;  // bounded, capacity >= TW
  std::vector<ForecastPoint> forecast;
  ClassificationZone zone;
  Direction direction = Direction::Unclassified;
  bool stale = false;
  std::unique_ptr<Predictor> predictor;
};

struct SnapshotEntry {
  std::string id;
  double t = 0.0;
  double x = 0.0, y = 0.0;
  double speed = 0.0, heading = 0.0, accel = 0.0;
  ClassificationZone zone;
  Direction direction = Direction::Unclassified;
  bool stale = false;
  bool from_bsm = false;  // true when a fresh BSM covers this instant
  ForecastSource source = ForecastSource::Hold;
};

struct GateConfig {
  double g0 = 5.0;      // m, base gate radius
  double v_max = 60.0;  // m/s, gate growth rate
};

// Accept iff the BSM position lies within the forecast gate
// g0 + v_max * (time since the forecast anchor). Stale records always accept
// so missed RVs recover.
inline bool outlier_gate_accept(const LocalMapRecord& rec, const VehicleState& bsm,
                                double rx_time, const GateConfig& gate,
                                double staleness_limit) {
  if (rec.path_history.empty()) return true;
  if (rx_time - rec.last_rx_time > staleness_limit) return true;
  const double dt = rx_time - rec.last_rx_time;
  const double radius = gate.g0 + gate.v_max * dt;
  // position expected at rx_time: forecast if available, else last BSM
  double ex = rec.last_bsm.x, ey = rec.last_bsm.y;
  for (const auto& fp : rec.forecast) {
    if (fp.t <= rx_time + 1e-9) {
      ex = fp.x;
      ey = fp.y;
    } else {
      break;
    }
  }
  return std::hypot(bsm.x - ex, bsm.y - ey) <= radius;
}

// Single-writer local map; snapshot() is a pure read over value copies.
class LocalMap {
 public:
  struct Config {
    TcConfig tc;
    GateConfig gate;
    std::size_t history_capacity = 64;
    int forecast_horizon_steps = 50;  // 5 s
    std::string predictor_kind = "hgp";
    PredictorContext predictor_ctx;
  };

  LocalMap() = default;
  explicit LocalMap(Config cfg) : cfg_(std::move(cfg)) {}

  // Outlier-gated ingest. Unknown ids create a record; rejected measurements
  // are discarded and the running forecast retained.
  bool update_record(const std::string& vehicle_id, const VehicleState& bsm,
                     double rx_time, const VehicleState* hv = nullptr) {
    auto it = records_.find(vehicle_id);
    if (it == records_.end()) {
      auto rec = std::make_unique<LocalMapRecord>();
      rec->vehicle_id = vehicle_id;
      rec->predictor = make_predictor(cfg_.predictor_kind, cfg_.predictor_ctx);
      it = records_.emplace(vehicle_id, std::move(rec)).first;
    }
    LocalMapRecord& rec = *it->second;
    if (!outlier_gate_accept(rec, bsm, rx_time, cfg_.gate, cfg_.tc.staleness_limit))
      return false;
    rec.last_bsm = bsm;
    rec.last_rx_time = rx_time;
    rec.stale = false;
    rec.path_history.push_back(bsm);
    while (rec.path_history.size() > cfg_.history_capacity) rec.path_history.pop_front();
    rec.predictor->on_packet(bsm, rx_time);
    rec.forecast.clear();
    for (int j = 1; j <= cfg_.forecast_horizon_steps; ++j)
      rec.forecast.push_back(rec.predictor->estimate(rx_time + j * kSamplePeriod));
    if (hv) std::tie(rec.zone, rec.direction) = classify(*hv, bsm, cfg_.tc);
    return true;
  }

  // All records with positions extrapolated to `now` (last forecast point held
  // past the horizon, flagged stale).
  std::vector<SnapshotEntry> snapshot(double now,
                                      const VehicleState* hv = nullptr) const {
    std::vector<SnapshotEntry> out;
    for (const auto& [id, rec] : records_) {
      SnapshotEntry e;
      e.id = id;
      e.t = now;
      const bool fresh = std::fabs(now - rec->last_rx_time) < 1e-9;
      if (fresh || rec->forecast.empty()) {
        e.x = rec->last_bsm.x;
        e.y = rec->last_bsm.y;
        e.speed = rec->last_bsm.speed;
        e.heading = rec->last_bsm.heading;
        e.accel = rec->last_bsm.accel;
        e.from_bsm = true;
        e.source = ForecastSource::Hold;
      } else {
        const ForecastPoint* fp = &rec->forecast.back();
        for (const auto& p : rec->forecast)
          if (p.t >= now - 1e-9) {
            fp = &p;
            break;
          }
        e.x = fp->x;
        e.y = fp->y;
        e.speed = fp->speed_mean;
        e.heading = fp->heading_mean;
        e.accel = rec->last_bsm.accel;
        e.source = fp->source;
        if (now > rec->forecast.back().t + 1e-9) e.stale = true;
      }
      if (now - rec->last_rx_time > cfg_.tc.staleness_limit) e.stale = true;
      if (hv) {
        VehicleState rv_now = rec->last_bsm;
        rv_now.x = e.x;
        rv_now.y = e.y;
        rv_now.heading = e.heading;
        std::tie(e.zone, e.direction) = classify(*hv, rv_now, cfg_.tc);
      } else {
        e.zone = rec->zone;
        e.direction = rec->direction;
      }
      out.push_back(std::move(e));
    }
    return out;
  }

  const LocalMapRecord* find(const std::string& id) const {
    auto it = records_.find(id);
    return it == records_.end() ? nullptr : it->second.get();
  }

  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  std::map<std::string, std::unique_ptr<LocalMapRecord>> records_;
};

// CAM snapshot export: newline-delimited JSON, one record per RV.
inline void write_snapshot_ndjson(std::ostream& os,
                                  const std::vector<SnapshotEntry>& entries) {
  for (const auto& e : entries) {
    nlohmann::json j = {{"id", e.id},
                        {"t", e.t},
                        {"x", e.x},
                        {"y", e.y},
                        {"speed", e.speed},
                        {"heading", e.heading},
                        {"zone", to_string(e.zone.longitudinal) + "/" +
                                     to_string(e.zone.lateral)},
                        {"direction", to_string(e.direction)},
                        {"stale", e.stale},
                        {"source", e.from_bsm ? "bsm" : to_string(e.source)}};
    os << j.dump() << '\n';
  }
}

}  // namespace hgp
