#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgp {

constexpr double kSamplePeriod = 0.1;  // 10 Hz BSM grid

// Timestamped kinematic sample in a local ENU frame. Heading is stored
// unwrapped (cumulative radians); wrap only at classification time.
struct VehicleState {
  double t = 0.0;        // seconds since trip start
  double x = 0.0;        // meters East
  double y = 0.0;        // meters North
  double speed = 0.0;    // m/s, longitudinal, >= 0
  double heading = 0.0;  // radians, unwrapped
  double accel = 0.0;    // m/s^2, longitudinal
};

struct Trip {
  std::string vehicle_id;
  std::vector<VehicleState> states;
  double sample_period = kSamplePeriod;
  bool speed_clamped = false;  // a segment tried to push speed below zero

  std::size_t size() const { return states.size(); }
  double duration() const {
    return states.empty() ? 0.0 : states.back().t - states.front().t;
  }
};

struct GeoSample {
  double t = 0.0;
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
  double alt = 0.0;  // meters
};

struct TimedPosition {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

inline double wrap_pi(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

// ---------------------------------------------------------------------------
// WGS-84 geodetic -> ECEF -> ENU
// ---------------------------------------------------------------------------

namespace wgs84 {
constexpr double kA = 6378137.0;             // semi-major axis, m
constexpr double kF = 1.0 / 298.257223563;   // flattening
constexpr double kE2 = kF * (2.0 - kF);      // first eccentricity squared
}  // namespace wgs84

struct Ecef {
  double x, y, z;
};

inline Ecef geodetic_to_ecef(double lat_deg, double lon_deg, double alt) {
  const double lat = lat_deg * M_PI / 180.0;
  const double lon = lon_deg * M_PI / 180.0;
  const double slat = std::sin(lat), clat = std::cos(lat);
  const double n = wgs84::kA / std::sqrt(1.0 - wgs84::kE2 * slat * slat);
  return {(n + alt) * clat * std::cos(lon), (n + alt) * clat * std::sin(lon),
          (n * (1.0 - wgs84::kE2) + alt) * slat};
}

// Converts geodetic samples to the local tangent plane anchored at `origin`.
// The origin itself maps to (0, 0); timestamps and order are preserved.
// Throws std::invalid_argument naming the first out-of-range sample.
inline std::vector<TimedPosition> geo_to_enu(const std::vector<GeoSample>& samples,
                                             const GeoSample& origin) {
  if (samples.empty()) throw std::invalid_argument("geo_to_enu: no samples");
  auto check = [](const GeoSample& g, std::size_t idx) {
    if (!(g.lat >= -90.0 && g.lat <= 90.0) || !(g.lon >= -180.0 && g.lon <= 180.0))
      throw std::invalid_argument("geo_to_enu: invalid lat/lon at sample " +
                                  std::to_string(idx));
  };
  check(origin, static_cast<std::size_t>(-1));
  const Ecef o = geodetic_to_ecef(origin.lat, origin.lon, origin.alt);
  const double lat = origin.lat * M_PI / 180.0, lon = origin.lon * M_PI / 180.0;
  const double slat = std::sin(lat), clat = std::cos(lat);
  const double slon = std::sin(lon), clon = std::cos(lon);

  std::vector<TimedPosition> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check(samples[i], i);
    const Ecef p = geodetic_to_ecef(samples[i].lat, samples[i].lon, samples[i].alt);
    const double dx = p.x - o.x, dy = p.y - o.y, dz = p.z - o.z;
    const double east = -slon * dx + clon * dy;
    const double north = -slat * clon * dx - slat * slon * dy + clat * dz;
    out.push_back({samples[i].t, east, north});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kinematics derivation
// ---------------------------------------------------------------------------

// Speed/heading/accel from a position track via central differences
// (one-sided at the endpoints). Heading is held through stationary stretches
// (speed <= 0.1 m/s) and unwrapped across samples.
inline Trip derive_kinematics(const std::vector<TimedPosition>& positions,
                              const std::string& vehicle_id = "trip") {
  if (positions.size() < 3)
    throw std::invalid_argument("derive_kinematics: need at least 3 samples");
  const std::size_t n = positions.size();
  Trip trip;
  trip.vehicle_id = vehicle_id;
  trip.states.resize(n);

  auto vel = [&](std::size_t a, std::size_t b) {
    const double dt = positions[b].t - positions[a].t;
    return std::pair<double, double>{(positions[b].x - positions[a].x) / dt,
                                     (positions[b].y - positions[a].y) / dt};
  };
  std::vector<double> vx(n), vy(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = (i == 0) ? 0 : i - 1;
    const std::size_t b = (i == n - 1) ? n - 1 : i + 1;
    std::tie(vx[i], vy[i]) = vel(a, b);
  }

  constexpr double kMovingSpeed = 0.1;
  double last_heading = 0.0;
  bool have_heading = false;
  for (std::size_t i = 0; i < n; ++i) {
    VehicleState& s = trip.states[i];
    s.t = positions[i].t;
    s.x = positions[i].x;
    s.y = positions[i].y;
    s.speed = std::hypot(vx[i], vy[i]);
    if (s.speed > kMovingSpeed) {
      double h = std::atan2(vy[i], vx[i]);
      if (have_heading) h = last_heading + wrap_pi(h - last_heading);  // unwrap
      last_heading = h;
      have_heading = true;
    }
    s.heading = last_heading;
  }
  // Backfill headings before the first moving sample.
  if (have_heading) {
    std::size_t first_moving = 0;
    while (first_moving < n && trip.states[first_moving].speed <= kMovingSpeed)
      ++first_moving;
    for (std::size_t i = 0; i < first_moving; ++i)
      trip.states[i].heading = trip.states[first_moving].heading;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = (i == 0) ? 0 : i - 1;
    const std::size_t b = (i == n - 1) ? n - 1 : i + 1;
    trip.states[i].accel = (trip.states[b].speed - trip.states[a].speed) /
                           (positions[b].t - positions[a].t);
  }
  const double dt0 = positions[1].t - positions[0].t;
  trip.sample_period = dt0;
  return trip;
}

// ---------------------------------------------------------------------------
// Synthetic trip generator
// ---------------------------------------------------------------------------

struct ManeuverSegment {
  enum class Kind { Cruise, Accelerate, Brake, LaneChange, Turn };
  Kind kind = Kind::Cruise;
  double duration = 0.0;    // s
  double value = 0.0;       // accel (m/s^2), yaw rate (rad/s) or lateral offset (m)
  std::optional<double> set_speed;  // cruise-only: speed to adopt at segment start
};

struct ManeuverScript {
  std::string id = "synthetic";
  double speed0 = 15.0;
  double heading0 = 0.0;
  double accel_jitter = 0.0;  // per-step N(0, sigma^2) accel perturbation
  std::vector<ManeuverSegment> segments;
};

// Deterministic for a given seed. Positions are integrated with the same
// piecewise rule the forecaster uses: x_{k+1} = x_k + dt*s_k*cos(h_k), so
// (speed, heading) integrate back to the recorded positions exactly.
inline Trip generate_synthetic_trip(const ManeuverScript& script, std::uint64_t seed) {
  Trip trip;
  trip.vehicle_id = script.id;
  trip.sample_period = kSamplePeriod;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);

  double t = 0.0, x = 0.0, y = 0.0;
  double s = script.speed0, h = script.heading0;
  const double dt = kSamplePeriod;

  auto emit = [&](double a) {
    trip.states.push_back({t, x, y, s, h, a});
  };

  for (const auto& seg : script.segments) {
    if (seg.kind == ManeuverSegment::Kind::Cruise && seg.set_speed) s = *seg.set_speed;
    const int steps = static_cast<int>(std::llround(seg.duration / dt));
    for (int k = 0; k < steps; ++k) {
      double a = 0.0, yaw = 0.0;
      const double tau = k * dt;
      switch (seg.kind) {
        case ManeuverSegment::Kind::Cruise:
          break;
        case ManeuverSegment::Kind::Accelerate:
        case ManeuverSegment::Kind::Brake:
          a = seg.value;
          break;
        case ManeuverSegment::Kind::Turn:
          yaw = seg.value;
          break;
        case ManeuverSegment::Kind::LaneChange: {
          // Heading bump delta(tau) = A sin^2(pi tau / d) integrates to a
          // lateral displacement of A*v*d/2 = offset.
          const double v_ref = std::max(s, 1.0);
          const double amp = 2.0 * seg.value / (v_ref * seg.duration);
          yaw = amp * (M_PI / seg.duration) * std::sin(2.0 * M_PI * tau / seg.duration);
          break;
        }
      }
      if (script.accel_jitter > 0.0) a += script.accel_jitter * jitter(rng);
      emit(a);
      // advance with start-of-step speed/heading
      x += dt * s * std::cos(h);
      y += dt * s * std::sin(h);
      s += a * dt;
      if (s < 0.0) {
        s = 0.0;
        trip.speed_clamped = true;
      }
      h += yaw * dt;
      t += dt;
    }
  }
  if (trip.states.empty()) throw std::invalid_argument("empty maneuver script");
  return trip;
}

// Transmitted copy with additive position noise; ground truth stays clean.
inline Trip add_position_noise(const Trip& trip, double sigma, std::uint64_t seed) {
  Trip out = trip;
  if (sigma <= 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& s : out.states) {
    s.x += n(rng);
    s.y += n(rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV I/O
// Schema: header `t,x,y,speed,heading,accel`; speed/heading/accel optional.
// ---------------------------------------------------------------------------

inline void save_trip_csv(const Trip& trip, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_trip_csv: cannot open " + path);
  f.precision(17);
  f << "t,x,y,speed,heading,accel\n";
  for (const auto& s : trip.states)
    f << s.t << ',' << s.x << ',' << s.y << ',' << s.speed << ',' << s.heading
      << ',' << s.accel << '\n';
}

inline Trip load_trip_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_trip_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_trip_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto col = [&](const std::string& name) -> int {
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : static_cast<int>(it - cols.begin());
  };
  const int ct = col("t"), cx = col("x"), cy = col("y");
  const int cs = col("speed"), ch = col("heading"), ca = col("accel");
  if (ct < 0 || cx < 0 || cy < 0)
    throw std::runtime_error("load_trip_csv: missing required column (t, x or y)");
  const bool full = cs >= 0 && ch >= 0 && ca >= 0;

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) {
      try {
        vals.push_back(std::stod(c));
      } catch (...) {
        throw std::runtime_error("load_trip_csv: bad value at row " +
                                 std::to_string(lineno));
      }
    }
    if (vals.size() < cols.size())
      throw std::runtime_error("load_trip_csv: short row " + std::to_string(lineno));
    for (double v : vals)
      if (std::isnan(v))
        throw std::runtime_error("load_trip_csv: NaN at row " + std::to_string(lineno));
    if (!rows.empty() && vals[ct] <= rows.back()[ct])
      throw std::runtime_error("load_trip_csv: non-monotone t at row " +
                               std::to_string(lineno));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error("load_trip_csv: no data rows");

  if (!full) {
    std::vector<TimedPosition> pos;
    pos.reserve(rows.size());
    for (const auto& r : rows) pos.push_back({r[ct], r[cx], r[cy]});
    return derive_kinematics(pos, path);
  }
  Trip trip;
  trip.vehicle_id = path;
  for (const auto& r : rows)
    trip.states.push_back({r[ct], r[cx], r[cy], r[cs], r[ch], r[ca]});
  if (trip.states.size() >= 2)
    trip.sample_period = trip.states[1].t - trip.states[0].t;
  return trip;
}

// Geo CSV: `t,lat,lon,alt`.
inline std::vector<GeoSample> load_geo_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_geo_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_geo_csv: empty file");
  std::vector<GeoSample> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string c;
    std::vector<double> vals;
    while (std::getline(ss, c, ',')) vals.push_back(std::stod(c));
    if (vals.size() < 4)
      throw std::runtime_error("load_geo_csv: short row " + std::to_string(lineno));
    out.push_back({vals[0], vals[1], vals[2], vals[3]});
  }
  return out;
}

// Linear resampling onto a uniform grid (default 100 ms), anchored at the
// first timestamp. Positions, speed and heading are interpolated; heading is
// assumed already unwrapped.
inline Trip resample_uniform(const Trip& trip, double period = kSamplePeriod) {
  if (trip.states.size() < 2) return trip;
  Trip out;
  out.vehicle_id = trip.vehicle_id;
  out.sample_period = period;
  const double t0 = trip.states.front().t;
  const double t1 = trip.states.back().t;
  std::size_t j = 0;
  for (double t = t0; t <= t1 + 1e-12; t += period) {
    while (j + 2 < trip.states.size() && trip.states[j + 1].t < t) ++j;
    const VehicleState& a = trip.states[j];
    const VehicleState& b = trip.states[j + 1];
    const double w = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
    auto lerp = [w](double u, double v) { return u + w * (v - u); };
    out.states.push_back({t, lerp(a.x, b.x), lerp(a.y, b.y), lerp(a.speed, b.speed),
                          lerp(a.heading, b.heading), lerp(a.accel, b.accel)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Maneuver script file: key-value lines, `segment = <kind> <dur> [value]`.
// ---------------------------------------------------------------------------

inline ManeuverScript parse_maneuver_script(std::istream& in) {
  ManeuverScript script;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
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
    if (key == "id") script.id = val;
    else if (key == "speed0") script.speed0 = std::stod(val);
    else if (key == "heading0") script.heading0 = std::stod(val);
    else if (key == "accel_jitter") script.accel_jitter = std::stod(val);
    else if (key == "segment") {
      std::stringstream ss(val);
      std::string kind;
      ss >> kind;
      ManeuverSegment seg;
      if (kind == "cruise") seg.kind = ManeuverSegment::Kind::Cruise;
      else if (kind == "accelerate") seg.kind = ManeuverSegment::Kind::Accelerate;
      else if (kind == "brake") seg.kind = ManeuverSegment::Kind::Brake;
      else if (kind == "lane_change") seg.kind = ManeuverSegment::Kind::LaneChange;
      else if (kind == "turn") seg.kind = ManeuverSegment::Kind::Turn;
      else throw std::runtime_error("unknown segment kind at line " +
                                    std::to_string(lineno) + ": " + kind);
      if (!(ss >> seg.duration))
        throw std::runtime_error("segment missing duration at line " +
                                 std::to_string(lineno));
      double v;
      if (ss >> v) {
        if (seg.kind == ManeuverSegment::Kind::Cruise) seg.set_speed = v;
        else seg.value = v;
      }
      script.segments.push_back(seg);
    }
  }
  if (script.segments.empty())
    throw std::runtime_error("maneuver script has no segments");
  return script;
}

inline ManeuverScript load_maneuver_script(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open script " + path);
  return parse_maneuver_script(f);
}

}  // namespace hgp
