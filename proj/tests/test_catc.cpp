#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "hgp/catc.hpp"

using namespace hgp;

namespace {

VehicleState at(double x, double y, double heading, double speed = 10.0) {
  return {0.0, x, y, speed, heading, 0.0};
}

}  // namespace

TEST_CASE("relative zones follow the HV-aligned frame") {
  const VehicleState hv = at(0.0, 0.0, 0.0);
  auto [z1, d1] = classify(hv, at(20.0, 0.0, 0.0));
  CHECK(z1.longitudinal == Longitudinal::Ahead);
  CHECK(z1.lateral == Lateral::OnCentre);
  CHECK(d1 == Direction::Ongoing);

  auto [z2, d2] = classify(hv, at(-5.0, 3.5, 0.0));  // one lane to the left, behind
  CHECK(z2.longitudinal == Longitudinal::Behind);
  CHECK(z2.lateral == Lateral::Left);

  auto [z3, d3] = classify(hv, at(10.0, -3.5, M_PI));  // adjacent right, oncoming
  CHECK(z3.lateral == Lateral::Right);
  CHECK(d3 == Direction::Oncoming);

  auto [z4, d4] = classify(hv, at(10.0, 9.0, M_PI / 2.0));
  CHECK(z4.lateral == Lateral::FarLeft);
  CHECK(d4 == Direction::Unclassified);  // crossing traffic
}

TEST_CASE("exact bin boundaries each land in exactly one zone") {
  const VehicleState hv = at(0.0, 0.0, 0.0);
  const double w = 3.5;
  // lateral ownership: OnCentre owns +/-0.5w, Left/Right own their outer 1.5w
  CHECK(classify(hv, at(5.0, 0.5 * w, 0.0)).first.lateral == Lateral::OnCentre);
  CHECK(classify(hv, at(5.0, -0.5 * w, 0.0)).first.lateral == Lateral::OnCentre);
  CHECK(classify(hv, at(5.0, 1.5 * w, 0.0)).first.lateral == Lateral::Left);
  CHECK(classify(hv, at(5.0, -1.5 * w, 0.0)).first.lateral == Lateral::Right);
  CHECK(classify(hv, at(5.0, std::nextafter(1.5 * w, 99.0), 0.0)).first.lateral ==
        Lateral::FarLeft);
  // longitudinal: Xrel = 0 counts as Ahead
  CHECK(classify(hv, at(0.0, 1.0, 0.0)).first.longitudinal == Longitudinal::Ahead);
  // direction boundaries are owned by the classified bins
  CHECK(classify(hv, at(5.0, 0.0, M_PI / 4.0)).second == Direction::Ongoing);
  CHECK(classify(hv, at(5.0, 0.0, 3.0 * M_PI / 4.0)).second == Direction::Oncoming);
  CHECK(classify(hv, at(5.0, 0.0, M_PI / 2.0)).second == Direction::Unclassified);
}

TEST_CASE("classification is invariant under rigid motions of the plane") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  for (int c = 0; c < 100000; ++c) {
    const VehicleState hv = at(u(rng), u(rng), ang(rng));
    const VehicleState rv = at(u(rng), u(rng), ang(rng));
    const auto base = classify(hv, rv);

    const double th = ang(rng), tx = u(rng), ty = u(rng);
    auto move = [&](const VehicleState& s) {
      VehicleState m = s;
      m.x = std::cos(th) * s.x - std::sin(th) * s.y + tx;
      m.y = std::sin(th) * s.x + std::cos(th) * s.y + ty;
      m.heading = s.heading + th;
      return m;
    };
    const auto moved = classify(move(hv), move(rv));
    CHECK(base.first.longitudinal == moved.first.longitudinal);
    CHECK(base.first.lateral == moved.first.lateral);
    CHECK(base.second == moved.second);
  }
}

TEST_CASE("every sample maps to exactly one zone and direction") {
  // enums are total by construction; verify the stringifier agrees (no "?")
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::uniform_real_distribution<double> ang(-7.0, 7.0);
  for (int c = 0; c < 1000; ++c) {
    const auto [zone, dir] = classify(at(u(rng), u(rng), ang(rng)),
                                      at(u(rng), u(rng), ang(rng)));
    CHECK(to_string(zone.longitudinal) != "?");
    CHECK(to_string(zone.lateral) != "?");
    CHECK(to_string(dir) != "?");
  }
}

TEST_CASE("zone routing table sends ahead-on-centre traffic to FCW") {
  ClassificationZone z{Longitudinal::Ahead, Lateral::OnCentre};
  CHECK(zones_to_apps(z, Direction::Ongoing).count("FCW") == 1);
  CHECK(zones_to_apps(z, Direction::Unclassified).count("FCW") == 1);
  CHECK(zones_to_apps(z, Direction::Oncoming).count("DNPW") == 1);
  CHECK(zones_to_apps(z, Direction::Oncoming).count("FCW") == 0);

  ClassificationZone left{Longitudinal::Behind, Lateral::Left};
  auto apps = zones_to_apps(left, Direction::Ongoing);
  CHECK(apps.count("BSW") == 1);
  CHECK(apps.count("LCW") == 1);

  ClassificationZone far{Longitudinal::Ahead, Lateral::FarLeft};
  CHECK(zones_to_apps(far, Direction::Ongoing).empty());
}

TEST_CASE("outlier gate accepts plausible and stale packets, rejects jumps") {
  GateConfig gate;  // 5 m + 60 m/s growth
  LocalMapRecord rec;
  rec.last_bsm = at(100.0, 50.0, 0.0);
  rec.last_rx_time = 10.0;
  rec.path_history.push_back(rec.last_bsm);

  // plausible: 3 m from the held position 0.1 s later (radius 11 m)
  CHECK(outlier_gate_accept(rec, at(103.0, 50.0, 0.0), 10.1, gate, 3.0));
  // teleport: 200 m jump
  CHECK_FALSE(outlier_gate_accept(rec, at(300.0, 50.0, 0.0), 10.1, gate, 3.0));
  // stale records accept anything so lost vehicles recover
  CHECK(outlier_gate_accept(rec, at(300.0, 50.0, 0.0), 14.0, gate, 3.0));
  // empty records accept their first packet
  LocalMapRecord fresh;
  CHECK(outlier_gate_accept(fresh, at(0.0, 0.0, 0.0), 0.0, gate, 3.0));
}

TEST_CASE("local map forecasts between receptions and flags staleness") {
  LocalMap::Config cfg;
  cfg.predictor_kind = "ca";
  LocalMap map(cfg);
  const VehicleState hv = at(0.0, 0.0, 0.0);

  // 10 Hz packets for 2 s, constant 10 m/s eastbound starting 30 m ahead
  for (int k = 0; k <= 20; ++k) {
    VehicleState s = at(30.0 + 1.0 * k, 0.0, 0.0);
    s.t = 0.1 * k;
    CHECK(map.update_record("rv1", s, s.t, &hv));
  }
  // snapshot 0.5 s after the last packet: dead-reckoned ahead
  auto snap = map.snapshot(2.5, &hv);
  REQUIRE(snap.size() == 1);
  CHECK_FALSE(snap[0].from_bsm);
  CHECK_FALSE(snap[0].stale);
  CHECK(snap[0].x == doctest::Approx(55.0).epsilon(0.01));
  CHECK(snap[0].zone.longitudinal == Longitudinal::Ahead);
  CHECK(snap[0].zone.lateral == Lateral::OnCentre);

  // snapshot at the reception instant reports the BSM itself
  auto snap2 = map.snapshot(2.0, &hv);
  CHECK(snap2[0].from_bsm);
  CHECK(snap2[0].x == doctest::Approx(50.0));

  // long after the horizon the record goes stale
  auto snap3 = map.snapshot(9.0, &hv);
  CHECK(snap3[0].stale);
}

TEST_CASE("snapshot export emits one parseable JSON object per vehicle") {
  LocalMap::Config cfg;
  cfg.predictor_kind = "cs";
  LocalMap map(cfg);
  const VehicleState hv = at(0.0, 0.0, 0.0);
  for (int k = 0; k <= 5; ++k) {
    VehicleState a = at(20.0 + k, 0.0, 0.0);
    a.t = 0.1 * k;
    map.update_record("a", a, a.t, &hv);
    VehicleState b = at(-10.0 - k, 3.5, 0.0);
    b.t = 0.1 * k;
    map.update_record("b", b, b.t, &hv);
  }
  std::ostringstream os;
  write_snapshot_ndjson(os, map.snapshot(0.5, &hv));
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);  // throws on malformed output
    CHECK(j.contains("id"));
    CHECK(j.contains("zone"));
    CHECK(j.contains("source"));
    ++lines;
  }
  CHECK(lines == 2);
}
