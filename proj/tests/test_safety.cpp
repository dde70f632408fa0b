#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "hgp/safety.hpp"

using namespace hgp;

TEST_CASE("brake onset range hand cases") {
  // stationary lead: 20^2 / (2*5) = 40.0 m, exactly
  const BorResult c1 = bor(20.0, 0.0, 0.0, 0.0, -5.0);
  CHECK(c1.bor_case == BorCase::Stationary);
  CHECK(c1.bor == 40.0);

  // both cruising at the same predicted speed: zero closing speed, zero range
  const BorResult c2 = bor(15.0, 15.0, 15.0, 0.0, -5.0);
  CHECK(c2.bor_case == BorCase::MovingMoving);
  CHECK(c2.bor == 0.0);

  // lead braking to a stop first: 400/10 - 100/4 = 15.0 m, exactly
  const BorResult c3 = bor(20.0, 10.0, 10.0, -2.0, -5.0, 500.0);
  CHECK(c3.bor_case == BorCase::MovingStopping);
  CHECK(c3.bor == 15.0);
}

TEST_CASE("degenerate matched decelerations give an infinite onset range") {
  const BorResult r = bor(20.0, 10.0, 10.0, -5.0, -5.0, 10.0);
  CHECK(r.bor_case == BorCase::MovingMoving);
  CHECK(std::isinf(r.bor));
}

TEST_CASE("negative onset ranges clamp to zero") {
  // fast lead with a long stopping distance: 100/10 - 400/16 < 0
  const BorResult r = bor(10.0, 20.0, 20.0, -8.0, -5.0, 100.0);
  CHECK(r.bor_case == BorCase::MovingStopping);
  CHECK(r.bor == 0.0);
}

TEST_CASE("stopping test defers to constant closing when the lead outlasts the gap") {
  // lead brakes gently but the HV reaches it first -> moving/moving
  const BorResult r = bor(30.0, 20.0, 20.0, -0.5, -5.0, 20.0);
  CHECK(r.bor_case == BorCase::MovingMoving);
}

namespace {

SnapshotEntry rv_entry(double x, double speed, double accel) {
  SnapshotEntry e;
  e.id = "rv";
  e.x = x;
  e.speed = speed;
  e.accel = accel;
  e.zone = {Longitudinal::Ahead, Lateral::OnCentre};
  e.direction = Direction::Ongoing;
  return e;
}

}  // namespace

TEST_CASE("warning range hand case: stationary lead, cruising host") {
  VehicleState hv{0.0, 0.0, 0.0, 20.0, 0.0, 0.0};
  SnapshotEntry rv = rv_entry(100.0, 0.0, 0.0);
  // r_w = 40 (onset) + 20 * 1.5 (delay travel) = 70 m
  const FcwDecision far = warning_range(hv, rv, 100.0);
  CHECK(far.r_w == doctest::Approx(70.0));
  CHECK_FALSE(far.warn);
  const FcwDecision close_by = warning_range(hv, rv, 65.0);
  CHECK(close_by.warn);
}

TEST_CASE("identical co-moving vehicles never warn") {
  VehicleState hv{0.0, 0.0, 0.0, 15.0, 0.0, 0.0};
  SnapshotEntry rv = rv_entry(30.0, 15.0, 0.0);
  const FcwDecision d = warning_range(hv, rv, 30.0);
  CHECK(d.r_w == 0.0);
  CHECK_FALSE(d.warn);
}

TEST_CASE("warning flag is monotone in range") {
  VehicleState hv{0.0, 0.0, 0.0, 25.0, 0.0, 0.0};
  SnapshotEntry rv = rv_entry(0.0, 5.0, -1.0);
  bool warned = false;
  for (double range = 200.0; range > 1.0; range -= 1.0) {
    const FcwDecision d = warning_range(hv, rv, range);
    if (warned) CHECK(d.warn);  // once warning, closer never unwarns
    warned = d.warn;
  }
  CHECK(warned);
}

TEST_CASE("per-snapshot evaluation only considers FCW-routed vehicles") {
  VehicleState hv{1.0, 0.0, 0.0, 20.0, 0.0, 0.0};
  std::vector<SnapshotEntry> snap;
  snap.push_back(rv_entry(10.0, 0.0, 0.0));  // ahead on-centre -> FCW, warns
  SnapshotEntry left = rv_entry(10.0, 0.0, 0.0);
  left.zone.lateral = Lateral::Left;  // routed to LCW, not FCW
  snap.push_back(left);
  SnapshotEntry oncoming = rv_entry(10.0, 0.0, 0.0);
  oncoming.direction = Direction::Oncoming;  // DNPW territory
  snap.push_back(oncoming);

  const auto decisions = fcw_step(hv, snap);
  REQUIRE(decisions.size() == 1);
  CHECK(decisions[0].warn);
  CHECK(decisions[0].t == 1.0);
}

TEST_CASE("decision log uses the documented CSV schema") {
  VehicleState hv{0.5, 0.0, 0.0, 20.0, 0.0, 0.0};
  auto decisions = fcw_step(hv, {rv_entry(30.0, 0.0, 0.0)});
  std::ostringstream os;
  write_fcw_csv(os, decisions);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "t,rv_id,range,r_w,warn,case,source");
  REQUIRE(std::getline(is, row));
  CHECK(row.find("rv") != std::string::npos);
  CHECK(row.find("Stationary") != std::string::npos);
}

TEST_CASE("identical inputs always produce identical decisions") {
  VehicleState hv{0.0, 0.0, 0.0, 22.0, 0.0, -1.0};
  SnapshotEntry rv = rv_entry(45.0, 8.0, -2.5);
  const FcwDecision a = warning_range(hv, rv, 45.0);
  const FcwDecision b = warning_range(hv, rv, 45.0);
  CHECK(a.r_w == b.r_w);
  CHECK(a.warn == b.warn);
  CHECK(a.bor_case == b.bor_case);
}
