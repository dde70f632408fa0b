// Kernel bank lifecycle: offline construction, clustering, likelihood-based
// selection, online extension, serialization, and the receiver predictors
// that consume banks.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>
#include <string>

#include "hgp/bank.hpp"
#include "hgp/receiver.hpp"
#include "hgp/trajectory.hpp"

using namespace hgp;

namespace {

ManeuverScript varied_script(const std::string& id, double speed0,
                             std::uint64_t /*unused*/) {
  ManeuverScript s;
  s.id = id;
  s.speed0 = speed0;
  s.accel_jitter = 0.05;
  s.segments = {
      {ManeuverSegment::Kind::Cruise, 4.0, 0.0, {}},
      {ManeuverSegment::Kind::Accelerate, 3.0, 1.2, {}},
      {ManeuverSegment::Kind::Turn, 3.0, 0.15, {}},
      {ManeuverSegment::Kind::Cruise, 3.0, 0.0, {}},
      {ManeuverSegment::Kind::Brake, 3.0, -2.0, {}},
      {ManeuverSegment::Kind::Cruise, 4.0, 0.0, {}},
  };
  return s;
}

std::vector<Trip> training_trips(int n, std::uint64_t seed) {
  std::vector<Trip> trips;
  for (int i = 0; i < n; ++i) {
    trips.push_back(generate_synthetic_trip(
        varied_script("trip" + std::to_string(i), 12.0 + 2.0 * i, 0),
        seed + 100 * i));
  }
  return trips;
}

TimeSeriesWindow window_from(const Trip& trip, std::size_t begin, int n,
                             SeriesKind kind) {
  TimeSeriesWindow w;
  w.kind = kind;
  for (int i = 0; i < n; ++i) {
    const auto& st = trip.states[begin + i];
    w.times.push_back(st.t);
    w.values.push_back(kind == SeriesKind::Speed ? st.speed : st.heading);
  }
  return w;
}

}  // namespace

TEST_CASE("building a bank over varied trips yields models and consistent stats") {
  const auto trips = training_trips(3, 17);
  BankBuildConfig cfg;
  cfg.seed = 5;
  auto [bank, stats] = build_bank(trips, cfg);

  CHECK(!bank.models.empty());
  CHECK(bank.tw == cfg.tw);
  CHECK(bank.pte_threshold == doctest::Approx(cfg.pte_th));
  // One id per model, all distinct.
  std::set<int> ids;
  for (const auto& m : bank.models) ids.insert(m.id);
  CHECK(ids.size() == bank.models.size());

  CHECK(stats.total_steps > 0);
  CHECK(stats.new_model_events == bank.models.size());
  CHECK(stats.new_model_mask.size() == stats.total_steps);
  std::size_t mask_events = 0;
  for (bool b : stats.new_model_mask) mask_events += b ? 1 : 0;
  // The bootstrap fit happens before stepping begins, so it has no mask entry.
  CHECK(mask_events + 1 == stats.new_model_events);
  CHECK(!stats.model_persistency_samples.empty());
  for (double p : stats.model_persistency_samples) CHECK(p > 0.0);
  CHECK(stats.mean_persistency() > 0.0);
}

TEST_CASE("bank construction is deterministic in trips and seed") {
  const auto trips = training_trips(2, 31);
  BankBuildConfig cfg;
  cfg.seed = 9;
  auto [b1, s1] = build_bank(trips, cfg);
  auto [b2, s2] = build_bank(trips, cfg);
  CHECK(to_json(b1).dump() == to_json(b2).dump());
  CHECK(s1.new_model_events == s2.new_model_events);
  CHECK(s1.model_persistency_samples == s2.model_persistency_samples);
}

TEST_CASE("evaluation-only mode never appends models") {
  const auto trips = training_trips(2, 47);
  BankBuildConfig train_cfg;
  train_cfg.seed = 3;
  auto [bank, train_stats] = build_bank({trips[0]}, train_cfg);
  REQUIRE(!bank.models.empty());

  BankBuildConfig eval_cfg = train_cfg;
  eval_cfg.allow_extend = false;
  auto [bank2, eval_stats] = build_bank({trips[1]}, eval_cfg, bank);
  CHECK(bank2.models.size() == bank.models.size());
  CHECK(eval_stats.total_steps > 0);
}

TEST_CASE("bank JSON round trip preserves every model exactly") {
  const auto trips = training_trips(1, 53);
  auto [bank, stats] = build_bank(trips, {});
  REQUIRE(!bank.models.empty());
  bank.models[0].usage_count = 7;

  const std::string path = "/tmp/hgp_test_bank.json";
  save_bank(bank, path, "unit-test");
  const KernelBank loaded = load_bank(path);
  std::remove(path.c_str());

  CHECK(loaded.tw == bank.tw);
  CHECK(loaded.pte_threshold == doctest::Approx(bank.pte_threshold));
  REQUIRE(loaded.models.size() == bank.models.size());
  for (std::size_t i = 0; i < bank.models.size(); ++i) {
    CHECK(loaded.models[i].id == bank.models[i].id);
    CHECK(loaded.models[i].usage_count == bank.models[i].usage_count);
    CHECK(loaded.models[i].created_at == bank.models[i].created_at);
    auto check_theta = [](const GpHyperparams& a, const GpHyperparams& b) {
      CHECK(a.gamma == doctest::Approx(b.gamma).epsilon(1e-12));
      CHECK(a.alpha1 == doctest::Approx(b.alpha1).epsilon(1e-12));
      CHECK(a.alpha2 == doctest::Approx(b.alpha2).epsilon(1e-12));
    };
    check_theta(loaded.models[i].speed_model.theta, bank.models[i].speed_model.theta);
    check_theta(loaded.models[i].heading_model.theta, bank.models[i].heading_model.theta);
  }
}

TEST_CASE("load_bank on a missing path throws") {
  CHECK_THROWS_AS(load_bank("/tmp/definitely_missing.bank.json"),
                  std::runtime_error);
}

TEST_CASE("clustering caps the bank size with medoids drawn from the input") {
  const auto trips = training_trips(4, 61);
  BankBuildConfig cfg;
  cfg.pte_th = 0.05;  // tight threshold to force many models
  cfg.seed = 11;
  auto [bank, stats] = build_bank(trips, cfg);
  REQUIRE(bank.models.size() >= 4);

  const int c_size = static_cast<int>(bank.models.size()) / 2;
  const KernelBank clustered = cluster_bank(bank, c_size, 99);
  CHECK(static_cast<int>(clustered.models.size()) == c_size);
  CHECK(clustered.tw == bank.tw);

  // Every representative is an untouched member of the original bank.
  std::set<int> orig_ids;
  for (const auto& m : bank.models) orig_ids.insert(m.id);
  int prev_id = -1;
  for (const auto& m : clustered.models) {
    CHECK(orig_ids.count(m.id) == 1);
    CHECK(m.id > prev_id);  // sorted by id
    prev_id = m.id;
  }

  // Deterministic for a fixed seed.
  const KernelBank again = cluster_bank(bank, c_size, 99);
  CHECK(to_json(clustered).dump() == to_json(again).dump());
}

TEST_CASE("clustering passes small banks through unchanged") {
  const auto trips = training_trips(1, 71);
  auto [bank, stats] = build_bank(trips, {});
  const KernelBank out = cluster_bank(bank, static_cast<int>(bank.models.size()) + 5, 1);
  CHECK(to_json(out).dump() == to_json(bank).dump());
}

TEST_CASE("selection prefers the model fitted on matching dynamics") {
  // Two hand-built pairs with contrasting length scales: a short-scale model
  // tracks wiggly series, a long-scale model tracks slow trends.
  KernelBank bank;
  ModelPair wiggly, smooth;
  wiggly.id = 0;
  wiggly.speed_model.theta = {0.3, 1.0, 1e-3};
  wiggly.heading_model.theta = {0.3, 0.5, 1e-3};
  smooth.id = 1;
  smooth.speed_model.theta = {5.0, 1.0, 1e-3};
  smooth.heading_model.theta = {5.0, 0.5, 1e-3};
  bank.models = {wiggly, smooth};

  TimeSeriesWindow sw, hw;
  sw.kind = SeriesKind::Speed;
  hw.kind = SeriesKind::Heading;
  for (int i = 0; i < 20; ++i) {
    const double t = 0.1 * i;
    sw.times.push_back(t);
    hw.times.push_back(t);
    sw.values.push_back(std::sin(12.0 * t));  // fast oscillation
    hw.values.push_back(0.5 * std::sin(12.0 * t));
  }
  CHECK(select_model(bank, sw, hw).id == 0);

  TimeSeriesWindow sw2 = sw, hw2 = hw;
  for (int i = 0; i < 20; ++i) {
    sw2.values[i] = 0.05 * sw.times[i];  // slow drift
    hw2.values[i] = 0.02 * sw.times[i];
  }
  CHECK(select_model(bank, sw2, hw2).id == 1);

  CHECK_THROWS_AS(select_model(KernelBank{}, sw, hw), std::invalid_argument);
  TimeSeriesWindow misaligned = hw;
  misaligned.times[3] += 0.01;
  CHECK_THROWS_AS(select_model(bank, sw, misaligned), std::invalid_argument);
}

TEST_CASE("online extension appends on success and reports fit failure") {
  const auto trip = training_trips(1, 83)[0];
  KernelBank bank;
  const auto sw = window_from(trip, 40, 30, SeriesKind::Speed);
  const auto hw = window_from(trip, 40, 30, SeriesKind::Heading);
  CHECK(maybe_extend_bank(bank, sw, hw, 7, "online"));
  REQUIRE(bank.models.size() == 1);
  CHECK(bank.models[0].id == 0);
  CHECK(bank.models[0].created_at == "online");
  CHECK(maybe_extend_bank(bank, sw, hw, 8));
  CHECK(bank.models[1].id == 1);

  // Windows below the minimum fit size must fail without touching the bank.
  TimeSeriesWindow tiny_s = sw, tiny_h = hw;
  tiny_s.times.resize(3); tiny_s.values.resize(3);
  tiny_h.times.resize(3); tiny_h.values.resize(3);
  CHECK(!maybe_extend_bank(bank, tiny_s, tiny_h, 9));
  CHECK(bank.models.size() == 2);
}

TEST_CASE("predictor registry builds every kind and rejects unknown names") {
  PredictorContext ctx;
  for (const char* name : {"bsm", "cs", "ca", "kf", "hgp", "hgp-d"}) {
    auto p = make_predictor(name, ctx);
    REQUIRE(p != nullptr);
    CHECK(!p->ready());
  }
  CHECK_THROWS_AS(make_predictor("nope", ctx), std::invalid_argument);
}

TEST_CASE("bank-backed predictor dead-reckons through a packet gap") {
  // Feed a steady cruise; between receptions the estimate must track the
  // vehicle within the persistency threshold.
  ManeuverScript script;
  script.id = "cruise";
  script.speed0 = 15.0;
  script.segments = {{ManeuverSegment::Kind::Cruise, 20.0, 0.0, {}}};
  const Trip trip = generate_synthetic_trip(script, 5);

  PredictorContext ctx;
  {
    auto [bank, stats] = build_bank({trip}, {});
    ctx.bank = bank;
  }
  auto p = make_predictor("hgp", ctx);
  const int feed_until = 60;
  for (int k = 0; k <= feed_until; ++k) {
    VehicleState st = trip.states[k];
    p->on_packet(st, st.t);
  }
  CHECK(p->ready());
  for (int k = feed_until + 1; k <= feed_until + 10; ++k) {
    const VehicleState& truth = trip.states[k];
    const ForecastPoint fp = p->estimate(truth.t);
    CHECK(std::hypot(fp.x - truth.x, fp.y - truth.y) < 0.5);
  }

  // Same context, fresh instance: estimates are reproducible.
  auto q = make_predictor("hgp", ctx);
  for (int k = 0; k <= feed_until; ++k) {
    VehicleState st = trip.states[k];
    q->on_packet(st, st.t);
  }
  const double t_probe = trip.states[feed_until + 5].t;
  const ForecastPoint a = p->estimate(t_probe), b = q->estimate(t_probe);
  CHECK(a.x == doctest::Approx(b.x).epsilon(1e-12));
  CHECK(a.y == doctest::Approx(b.y).epsilon(1e-12));
}
