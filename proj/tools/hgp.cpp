// Command-line front end: offline bank training/clustering, channel sweeps,
// single-scenario demos, fit-time profiling and synthetic trip generation.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hgp/harness.hpp"

namespace fs = std::filesystem;

namespace {

hgp::ExperimentConfig load_cfg(const std::string& config_path) {
  if (config_path.empty()) return {};
  return hgp::load_experiment_config(config_path);
}

void write_bank_reports(const hgp::BankStats& stats, const std::string& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir + "/mp_histogram.csv");
    f << "persistency_s\n";
    f.precision(9);
    for (double s : stats.model_persistency_samples) f << s << '\n';
  }
  {
    // new-model rate over evaluation quarters
    std::ofstream f(out_dir + "/new_model_rate.csv");
    f << "quarter,rate\n";
    const std::size_t n = stats.new_model_mask.size();
    for (int q = 0; q < 4 && n >= 4; ++q) {
      const std::size_t b = q * n / 4, e = (q + 1) * n / 4;
      std::size_t events = 0;
      for (std::size_t i = b; i < e; ++i) events += stats.new_model_mask[i];
      f << (q + 1) << ',' << double(events) / double(e - b) << '\n';
    }
  }
}

int cmd_train_bank(const std::string& config_path, std::uint64_t seed,
                   const std::string& out, const std::string& bank_path,
                   const std::string& csize_sweep) {
  hgp::ExperimentConfig cfg = load_cfg(config_path);
  if (seed) cfg.seed = seed;
  if (!out.empty()) cfg.out_dir = out;
  const std::string bank_file =
      !bank_path.empty() ? bank_path
      : !cfg.bank_path.empty() ? cfg.bank_path
                               : cfg.out_dir + "/trained.bank.json";

  auto trips = hgp::load_or_generate_trips(cfg);
  hgp::BankBuildConfig bc;
  bc.tw = cfg.tw;
  bc.pte_th = cfg.pte_th;
  bc.seed = cfg.seed;
  auto [bank, stats] = hgp::build_bank(trips, bc);
  std::cout << "trained " << bank.models.size() << " model pairs over "
            << stats.total_steps << " steps; mean persistency "
            << stats.mean_persistency() << " s\n";

  hgp::KernelBank reduced = hgp::cluster_bank(bank, cfg.c_size, cfg.seed);
  fs::create_directories(fs::path(bank_file).parent_path().empty()
                             ? "."
                             : fs::path(bank_file).parent_path().string());
  hgp::save_bank(reduced, bank_file);
  std::cout << "wrote " << bank_file << " (" << reduced.models.size()
            << " pairs after clustering to " << cfg.c_size << ")\n";
  write_bank_reports(stats, cfg.out_dir);

  if (!csize_sweep.empty()) {
    // Re-evaluate persistency on the same trips with each reduced bank size,
    // extension disabled so bank content is the only variable.
    std::ofstream f(cfg.out_dir + "/mp_vs_csize.csv");
    f << "c_size,mean_persistency_s\n";
    for (const auto& tok : hgp::detail::split_csv_list(csize_sweep)) {
      const int c = std::stoi(tok);
      hgp::KernelBank b = hgp::cluster_bank(bank, c, cfg.seed);
      hgp::BankBuildConfig ec = bc;
      ec.allow_extend = false;
      auto [b2, est] = hgp::build_bank(trips, ec, b);
      f << c << ',' << est.mean_persistency() << '\n';
    }
    std::cout << "wrote " << cfg.out_dir << "/mp_vs_csize.csv\n";
  }
  return 0;
}

int cmd_cluster(const std::string& bank_path, int c_size, std::uint64_t seed,
                const std::string& out) {
  hgp::KernelBank bank = hgp::load_bank(bank_path);
  hgp::KernelBank reduced = hgp::cluster_bank(bank, c_size, seed);
  const std::string dest = out.empty() ? bank_path : out;
  hgp::save_bank(reduced, dest);
  std::cout << bank.models.size() << " -> " << reduced.models.size()
            << " pairs; wrote " << dest << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, std::uint64_t seed,
              const std::string& out, const std::string& bank_path) {
  hgp::ExperimentConfig cfg = load_cfg(config_path);
  if (seed) cfg.seed = seed;
  if (!out.empty()) cfg.out_dir = out;
  if (!bank_path.empty()) cfg.bank_path = bank_path;

  auto trips = hgp::load_or_generate_trips(cfg);
  hgp::KernelBank bank;
  if (!cfg.bank_path.empty()) {
    bank = hgp::load_bank(cfg.bank_path);
  } else {
    hgp::BankBuildConfig bc;
    bc.tw = cfg.tw;
    bc.pte_th = cfg.pte_th;
    bc.seed = cfg.seed;
    bank = hgp::cluster_bank(hgp::build_bank(trips, bc).first, cfg.c_size, cfg.seed);
    std::cout << "no bank given; trained one in-process (" << bank.models.size()
              << " pairs)\n";
  }
  auto result = hgp::sweep(trips, bank, cfg);
  hgp::write_sweep_csvs(result, cfg, cfg.out_dir);
  {
    std::ofstream f(cfg.out_dir + "/config_used.txt");
    hgp::save_experiment_config(cfg, f);
  }
  std::cout << "wrote sweep CSVs to " << cfg.out_dir << '\n';
  return 0;
}

int cmd_demo(const std::string& script_path, const std::string& bank_path,
             double per, std::uint64_t seed, const std::string& out) {
  if (!bank_path.empty() && !fs::exists(bank_path)) {
    std::cerr << "error: bank file '" << bank_path
              << "' does not exist; run `hgp train-bank` first or drop --bank\n";
    return 2;
  }
  hgp::ManeuverScript script;
  if (!script_path.empty()) {
    script = hgp::load_maneuver_script(script_path);
  } else {
    // default scenario: cruise then hard brake
    script.id = "demo";
    script.speed0 = 15.0;
    script.segments = {{hgp::ManeuverSegment::Kind::Cruise, 8.0, 0.0},
                       {hgp::ManeuverSegment::Kind::Brake, 4.0, -3.0},
                       {hgp::ManeuverSegment::Kind::Cruise, 6.0, 0.0}};
  }
  hgp::Trip rv_trip = hgp::generate_synthetic_trip(script, seed);

  hgp::LocalMap::Config mc;
  mc.predictor_kind = bank_path.empty() ? "ca" : "hgp";
  if (!bank_path.empty()) mc.predictor_ctx.bank = hgp::load_bank(bank_path);
  hgp::LocalMap map(mc);

  hgp::ChannelConfig ch;
  ch.per = per;
  ch.seed = hgp::mix_seed(seed, 0xDE30ULL);
  auto packets = hgp::emit(rv_trip, ch);
  std::map<std::int64_t, const hgp::BsmPacket*> delivered;
  for (const auto& p : packets)
    if (!p.dropped)
      delivered[std::llround(p.rx_time / hgp::kSamplePeriod)] = &p;

  fs::create_directories(out);
  std::ofstream cam(out + "/cam_snapshots.ndjson");
  std::vector<hgp::FcwDecision> decisions;
  const int delay_steps = 20;  // HV trails by 2 s
  for (std::size_t k = 0; k < rv_trip.size(); ++k) {
    const double t = rv_trip.states[k].t;
    const auto key = static_cast<std::int64_t>(std::llround(t / hgp::kSamplePeriod));
    auto hit = delivered.find(key);
    hgp::VehicleState hv =
        rv_trip.states[k >= std::size_t(delay_steps) ? k - delay_steps : 0];
    hv.t = t;
    if (hit != delivered.end())
      map.update_record(rv_trip.vehicle_id, hit->second->state, t, &hv);
    if (k < std::size_t(delay_steps)) continue;
    auto snap = map.snapshot(t, &hv);
    hgp::write_snapshot_ndjson(cam, snap);
    auto d = hgp::fcw_step(hv, snap);
    decisions.insert(decisions.end(), d.begin(), d.end());
  }
  std::ofstream fcw(out + "/fcw_decisions.csv");
  hgp::write_fcw_csv(fcw, decisions);
  std::size_t warns = 0, forecast_sourced = 0;
  for (const auto& d : decisions) {
    warns += d.warn;
    forecast_sourced += !d.from_bsm;
  }
  std::cout << decisions.size() << " FCW evaluations, " << warns << " warns, "
            << forecast_sourced << " forecast-sourced; logs in " << out << '\n';
  return 0;
}

int cmd_profile(const std::string& tw_grid_csv, int reps, std::uint64_t seed,
                const std::string& out) {
  std::vector<int> grid;
  for (const auto& tok : hgp::detail::split_csv_list(tw_grid_csv))
    grid.push_back(std::stoi(tok));
  auto prof = hgp::profile_fit_time(grid, reps, seed);
  fs::create_directories(out);
  std::ofstream f(out + "/fit_time_profile.csv");
  f << "tw,median_ms\n";
  for (std::size_t i = 0; i < prof.tw_grid.size(); ++i)
    f << prof.tw_grid[i] << ',' << prof.median_ms[i] << '\n';
  for (std::size_t i = 0; i < prof.tw_grid.size(); ++i)
    std::cout << "TW=" << prof.tw_grid[i] << ": median "
              << prof.median_ms[i] << " ms\n";
  std::cout << "quadratic fit t(n) = " << prof.quad_a << " n^2 + " << prof.quad_b
            << " n + " << prof.quad_c << ", RMSE " << prof.quad_rmse_ms
            << " ms\n";
  return 0;
}

int cmd_gen_trips(int n, std::uint64_t seed, const std::string& out) {
  fs::create_directories(out);
  auto scripts = hgp::synthetic_suite_scripts(n, seed);
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    auto trip = hgp::generate_synthetic_trip(scripts[i], hgp::mix_seed(seed, i));
    hgp::save_trip_csv(trip, out + "/" + scripts[i].id + ".csv");
  }
  std::cout << "wrote " << n << " trips to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-forecasting suite for cooperative collision warning"};
  app.require_subcommand(1);

  std::string config, out, bank, script, csize_sweep, tw_grid = "10,20,30,40";
  std::uint64_t seed = 0;
  double per = 0.8;
  int c_size = 16, n_trips = 20, reps = 5;

  auto* train = app.add_subcommand("train-bank", "fit a kernel bank offline");
  train->add_option("--config", config, "key-value config file");
  train->add_option("--seed", seed, "root RNG seed (overrides config)");
  train->add_option("--out", out, "output directory");
  train->add_option("--bank", bank, "bank file to write");
  train->add_option("--c-size-sweep", csize_sweep,
                    "comma list of bank sizes for an MP-vs-size CSV");

  auto* cluster = app.add_subcommand("cluster", "reduce a bank to c_size medoids");
  cluster->add_option("--bank", bank, "bank file to read")->required();
  cluster->add_option("--c-size", c_size, "target bank size");
  cluster->add_option("--seed", seed, "k-means seed");
  cluster->add_option("--out", out, "destination (defaults to in-place)");

  auto* sweep = app.add_subcommand("sweep", "PER/rate factorial sweep");
  sweep->add_option("--config", config, "key-value config file");
  sweep->add_option("--seed", seed, "root RNG seed (overrides config)");
  sweep->add_option("--out", out, "output directory");
  sweep->add_option("--bank", bank, "pre-trained bank file");

  auto* demo = app.add_subcommand("demo", "single two-vehicle scenario");
  demo->add_option("--script", script, "maneuver script for the lead vehicle");
  demo->add_option("--bank", bank, "bank file for the GP predictor");
  demo->add_option("--per", per, "packet error rate [0,1]");
  demo->add_option("--seed", seed, "scenario seed");
  demo->add_option("--out", out, "output directory")->default_val("out");

  auto* profile = app.add_subcommand("profile", "fit-time scaling profile");
  profile->add_option("--tw-grid", tw_grid, "comma list of window lengths");
  profile->add_option("--reps", reps, "repetitions per window length");
  profile->add_option("--seed", seed, "RNG seed");
  profile->add_option("--out", out, "output directory")->default_val("out");

  auto* gen = app.add_subcommand("gen-trips", "write synthetic trip CSVs");
  gen->add_option("--n", n_trips, "number of trips");
  gen->add_option("--seed", seed, "suite seed");
  gen->add_option("--out", out, "output directory")->default_val("trips");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train_bank(config, seed, out, bank, csize_sweep);
    if (cluster->parsed()) return cmd_cluster(bank, c_size, seed, out);
    if (sweep->parsed()) return cmd_sweep(config, seed, out, bank);
    if (demo->parsed()) return cmd_demo(script, bank, per, seed, out);
    if (profile->parsed()) return cmd_profile(tw_grid, reps, seed, out);
    if (gen->parsed()) return cmd_gen_trips(n_trips, seed, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
