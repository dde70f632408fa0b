#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "hgp/trajectory.hpp"

using namespace hgp;

TEST_CASE("wrap_pi maps angles into [-pi, pi)") {
  CHECK(wrap_pi(0.0) == doctest::Approx(0.0));
  CHECK(wrap_pi(3.0 * M_PI) == doctest::Approx(-M_PI).epsilon(1e-12));
  CHECK(wrap_pi(-3.0 * M_PI) == doctest::Approx(-M_PI).epsilon(1e-12));
  CHECK(wrap_pi(M_PI / 2.0 + 4.0 * M_PI) == doctest::Approx(M_PI / 2.0));
  for (double a = -20.0; a < 20.0; a += 0.37) {
    const double w = wrap_pi(a);
    CHECK(w > -M_PI - 1e-12);
    CHECK(w <= M_PI + 1e-12);
    CHECK(std::fabs(std::sin(w) - std::sin(a)) < 1e-12);
    CHECK(std::fabs(std::cos(w) - std::cos(a)) < 1e-12);
  }
}

TEST_CASE("geodetic conversion puts the origin at zero and north offsets on +y") {
  GeoSample origin{0.0, 45.0, 7.0, 200.0};
  std::vector<GeoSample> samples = {
      origin,
      {1.0, 45.001, 7.0, 200.0},   // due north
      {2.0, 45.0, 7.001, 200.0}};  // due east
  auto enu = geo_to_enu(samples, origin);
  CHECK(enu[0].x == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(enu[0].y == doctest::Approx(0.0).epsilon(1e-9));
  // one millidegree of latitude is ~111 m of northing
  CHECK(enu[1].y == doctest::Approx(111.1).epsilon(0.01));
  CHECK(std::fabs(enu[1].x) < 0.2);
  CHECK(enu[2].x == doctest::Approx(111.1 * std::cos(45.0 * M_PI / 180.0)).epsilon(0.01));
  CHECK(std::fabs(enu[2].y) < 0.2);
}

TEST_CASE("geodetic conversion rejects out-of-range coordinates by index") {
  GeoSample origin{0.0, 45.0, 7.0, 0.0};
  std::vector<GeoSample> bad = {{0.0, 45.0, 7.0, 0.0}, {1.0, 95.0, 7.0, 0.0}};
  CHECK_THROWS_WITH_AS(geo_to_enu(bad, origin),
                       "geo_to_enu: invalid lat/lon at sample 1",
                       std::invalid_argument);
}

TEST_CASE("kinematics derivation recovers speed and heading on straight motion") {
  std::vector<TimedPosition> pos;
  const double v = 12.0, h = 0.7;
  for (int i = 0; i < 50; ++i)
    pos.push_back({0.1 * i, v * std::cos(h) * 0.1 * i, v * std::sin(h) * 0.1 * i});
  Trip trip = derive_kinematics(pos, "straight");
  for (const auto& s : trip.states) {
    CHECK(s.speed == doctest::Approx(v).epsilon(1e-9));
    CHECK(s.heading == doctest::Approx(h).epsilon(1e-9));
    CHECK(std::fabs(s.accel) < 1e-9);
  }
  CHECK(trip.sample_period == doctest::Approx(0.1));
}

TEST_CASE("kinematics derivation holds heading through stationary stretches") {
  std::vector<TimedPosition> pos;
  // moving east, then parked, heading should persist through the stop
  for (int i = 0; i < 20; ++i) pos.push_back({0.1 * i, 5.0 * 0.1 * i, 0.0});
  for (int i = 20; i < 40; ++i) pos.push_back({0.1 * i, pos[19].x + 0.5, 0.0});
  Trip trip = derive_kinematics(pos);
  for (std::size_t i = 25; i < trip.size(); ++i) {
    CHECK(trip.states[i].speed < 0.2);
    CHECK(trip.states[i].heading == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("heading unwraps across the +/- pi seam") {
  std::vector<TimedPosition> pos;
  double x = 0.0, y = 0.0, h = M_PI - 0.2;
  for (int i = 0; i < 60; ++i) {
    pos.push_back({0.1 * i, x, y});
    x += 0.1 * 8.0 * std::cos(h);
    y += 0.1 * 8.0 * std::sin(h);
    h += 0.1 * 0.3;  // steady left turn through pi
  }
  Trip trip = derive_kinematics(pos);
  for (std::size_t i = 1; i < trip.size(); ++i)
    CHECK(std::fabs(trip.states[i].heading - trip.states[i - 1].heading) < 0.5);
  CHECK(trip.states.back().heading > M_PI);  // unwrapped, not re-wrapped
}

TEST_CASE("synthetic trips integrate speed and heading back to positions") {
  ManeuverScript script;
  script.speed0 = 10.0;
  script.segments = {{ManeuverSegment::Kind::Cruise, 2.0, 0.0},
                     {ManeuverSegment::Kind::Turn, 3.0, 0.2},
                     {ManeuverSegment::Kind::Brake, 2.0, -2.0}};
  Trip trip = generate_synthetic_trip(script, 1);
  REQUIRE(trip.size() == 70);
  for (std::size_t k = 0; k + 1 < trip.size(); ++k) {
    const auto& a = trip.states[k];
    const auto& b = trip.states[k + 1];
    CHECK(b.x == doctest::Approx(a.x + 0.1 * a.speed * std::cos(a.heading)).epsilon(1e-12));
    CHECK(b.y == doctest::Approx(a.y + 0.1 * a.speed * std::sin(a.heading)).epsilon(1e-12));
  }
  CHECK_FALSE(trip.speed_clamped);
}

TEST_CASE("braking past zero clamps speed and sets the flag") {
  ManeuverScript script;
  script.speed0 = 3.0;
  script.segments = {{ManeuverSegment::Kind::Brake, 5.0, -2.0}};
  Trip trip = generate_synthetic_trip(script, 1);
  CHECK(trip.speed_clamped);
  for (const auto& s : trip.states) CHECK(s.speed >= 0.0);
  CHECK(trip.states.back().speed == 0.0);
}

TEST_CASE("lane change displaces laterally by the requested offset") {
  ManeuverScript script;
  script.speed0 = 15.0;
  script.segments = {{ManeuverSegment::Kind::LaneChange, 4.0, 3.5}};
  Trip trip = generate_synthetic_trip(script, 1);
  CHECK(trip.states.back().y == doctest::Approx(3.5).epsilon(0.05));
  // heading returns near its original value by the last sample (the final
  // integration step lands just after it)
  CHECK(std::fabs(trip.states.back().heading) < 0.01);
}

TEST_CASE("trip CSV round trip is exact") {
  ManeuverScript script;
  script.speed0 = 14.0;
  script.accel_jitter = 0.1;
  script.segments = {{ManeuverSegment::Kind::Cruise, 1.0, 0.0},
                     {ManeuverSegment::Kind::Turn, 1.0, 0.1}};
  Trip trip = generate_synthetic_trip(script, 5);
  const std::string path = "/tmp/hgp_test_trip.csv";
  save_trip_csv(trip, path);
  Trip back = load_trip_csv(path);
  REQUIRE(back.size() == trip.size());
  for (std::size_t i = 0; i < trip.size(); ++i) {
    CHECK(back.states[i].t == trip.states[i].t);
    CHECK(back.states[i].x == trip.states[i].x);
    CHECK(back.states[i].y == trip.states[i].y);
    CHECK(back.states[i].speed == trip.states[i].speed);
    CHECK(back.states[i].heading == trip.states[i].heading);
    CHECK(back.states[i].accel == trip.states[i].accel);
  }
  std::remove(path.c_str());
}

TEST_CASE("position-only CSV falls back to derived kinematics") {
  const std::string path = "/tmp/hgp_test_posonly.csv";
  {
    std::ofstream f(path);
    f << "t,x,y\n";
    for (int i = 0; i < 30; ++i) f << 0.1 * i << ',' << 6.0 * 0.1 * i << ",0\n";
  }
  Trip trip = load_trip_csv(path);
  REQUIRE(trip.size() == 30);
  CHECK(trip.states[10].speed == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(trip.states[10].heading == doctest::Approx(0.0));
  std::remove(path.c_str());
}

TEST_CASE("malformed trip CSVs fail loudly with row numbers") {
  const std::string path = "/tmp/hgp_test_bad.csv";
  {
    std::ofstream f(path);
    f << "t,x,y\n0,0,0\n0.1,nan,0\n";
  }
  CHECK_THROWS_AS(load_trip_csv(path), std::runtime_error);
  {
    std::ofstream f(path);
    f << "t,x,y\n0.2,0,0\n0.1,1,0\n0.3,2,0\n";  // non-monotone time
  }
  CHECK_THROWS_AS(load_trip_csv(path), std::runtime_error);
  CHECK_THROWS_AS(load_trip_csv("/tmp/definitely_missing_file.csv"),
                  std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("resampling a uniform trip is the identity") {
  ManeuverScript script;
  script.segments = {{ManeuverSegment::Kind::Cruise, 2.0, 0.0}};
  Trip trip = generate_synthetic_trip(script, 1);
  Trip r = resample_uniform(trip);
  REQUIRE(r.size() == trip.size());
  for (std::size_t i = 0; i < trip.size(); ++i) {
    CHECK(r.states[i].x == doctest::Approx(trip.states[i].x).epsilon(1e-12));
    CHECK(r.states[i].speed == doctest::Approx(trip.states[i].speed).epsilon(1e-12));
  }
}

TEST_CASE("maneuver scripts parse from key-value text") {
  std::istringstream in(
      "id = demo42\n"
      "speed0 = 13.5\n"
      "heading0 = 0.25\n"
      "accel_jitter = 0.05\n"
      "segment = cruise 2.0\n"
      "segment = accelerate 3.0 1.5\n"
      "segment = brake 2.0 -2.5\n"
      "segment = lane_change 4.0 3.5\n"
      "segment = turn 5.0 0.1\n");
  ManeuverScript s = parse_maneuver_script(in);
  CHECK(s.id == "demo42");
  CHECK(s.speed0 == 13.5);
  CHECK(s.heading0 == 0.25);
  CHECK(s.accel_jitter == 0.05);
  REQUIRE(s.segments.size() == 5);
  CHECK(s.segments[0].kind == ManeuverSegment::Kind::Cruise);
  CHECK(s.segments[1].kind == ManeuverSegment::Kind::Accelerate);
  CHECK(s.segments[1].value == 1.5);
  CHECK(s.segments[2].value == -2.5);
  CHECK(s.segments[3].kind == ManeuverSegment::Kind::LaneChange);
  CHECK(s.segments[4].kind == ManeuverSegment::Kind::Turn);
  CHECK(s.segments[4].duration == 5.0);
}

TEST_CASE("noisy transmitted copies leave the original untouched") {
  ManeuverScript script;
  script.segments = {{ManeuverSegment::Kind::Cruise, 1.0, 0.0}};
  Trip trip = generate_synthetic_trip(script, 1);
  Trip noisy = add_position_noise(trip, 0.5, 9);
  bool moved = false;
  for (std::size_t i = 0; i < trip.size(); ++i) {
    if (noisy.states[i].x != trip.states[i].x) moved = true;
    CHECK(noisy.states[i].t == trip.states[i].t);
    CHECK(noisy.states[i].speed == trip.states[i].speed);
  }
  CHECK(moved);
  Trip clean = add_position_noise(trip, 0.0, 9);
  for (std::size_t i = 0; i < trip.size(); ++i)
    CHECK(clean.states[i].x == trip.states[i].x);
}
