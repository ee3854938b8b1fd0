// traplab command line: environment generation, single-walker and particle
// system runs, duality batteries, field pairings, fractional solvers, and the
// experiment harness (`run` / `report`).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "traplab/duality.hpp"
#include "traplab/fields.hpp"
#include "traplab/fin.hpp"
#include "traplab/fke.hpp"
#include "traplab/harness.hpp"
#include "traplab/io.hpp"
#include "traplab/version.hpp"

using namespace traplab;

namespace {

Environment load_env(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open environment file " + path);
  nlohmann::json j;
  in >> j;
  return io::environment_from_json(j);
}

void write_walker_path_csv(const std::string& path, const Environment& env,
                           const WalkerPath& wp) {
  std::vector<std::string> cols = {"time", "site"};
  for (int i = 0; i < env.d(); ++i) cols.push_back("x_" + std::to_string(i + 1));
  io::CsvWriter csv(path, "walker-path", cols);
  auto emit = [&](double t, std::int64_t site) {
    std::vector<double> vals = {t, static_cast<double>(site)};
    const Coord c = env.lattice.coord_of(site);
    for (int i = 0; i < env.d(); ++i) vals.push_back(static_cast<double>(c[i]));
    csv.row_values(vals);
  };
  emit(0.0, wp.start);
  for (const JumpEvent& ev : wp.events) emit(ev.time, ev.site);
}

std::vector<Configuration> read_snapshots_csv(const std::string& path,
                                              const Environment& env,
                                              std::vector<double>* times) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open snapshot file " + path);
  std::string line;
  std::map<double, Configuration> by_time;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("time", 0) == 0) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3) continue;
    const double t = std::stod(cells[0]);
    const std::int64_t site = std::stoll(cells[1]);
    const std::int64_t count = std::stoll(cells[2]);
    auto it = by_time.find(t);
    if (it == by_time.end()) {
      Configuration c;
      c.counts.assign(static_cast<std::size_t>(env.n_sites()), 0);
      it = by_time.emplace(t, std::move(c)).first;
    }
    it->second.counts[static_cast<std::size_t>(site)] = count;
  }
  std::vector<Configuration> out;
  for (auto& [t, c] : by_time) {
    times->push_back(t);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kVersion) + " - trap-model hydrodynamics toolkit"};
  app.require_subcommand(1);

  // ---- env
  auto* env_cmd = app.add_subcommand("env", "generate a quenched environment");
  int env_d = 1, env_l = 10;
  double env_beta = 0.5;
  std::uint64_t env_seed = 1;
  std::string env_json = "environment.json", env_ppp_out, env_measure_out;
  double ppp_eps = 0.0, ppp_box = 1.0;
  int measure_n = 0;
  env_cmd->add_option("--d", env_d, "dimension (1,2,3)");
  env_cmd->add_option("--L", env_l, "box half-width");
  env_cmd->add_option("--beta", env_beta, "tail index in (0,1)");
  env_cmd->add_option("--seed", env_seed, "environment seed");
  env_cmd->add_option("--json", env_json, "output environment JSON path");
  env_cmd->add_option("--ppp-eps", ppp_eps, "sample the limit measure, truncation eps");
  env_cmd->add_option("--ppp-box", ppp_box, "half-width of the PPP box");
  env_cmd->add_option("--ppp-out", env_ppp_out, "PPP atoms CSV path");
  env_cmd->add_option("--measure-n", measure_n, "emit the rescaled measure W^n");
  env_cmd->add_option("--measure-out", env_measure_out, "W^n atoms CSV path");

  // ---- walk
  auto* walk_cmd = app.add_subcommand("walk", "simulate a single trap walker");
  std::string walk_env, walk_out = "path.csv";
  double walk_a = 0.0, walk_horizon = 100.0;
  std::int64_t walk_x0 = -1;
  std::uint64_t walk_seed = 1;
  bool walk_clock = false;
  walk_cmd->add_option("--env", walk_env, "environment JSON")->required();
  walk_cmd->add_option("--a", walk_a, "trap parameter in [0,1]");
  walk_cmd->add_option("--horizon", walk_horizon, "time horizon");
  walk_cmd->add_option("--x0", walk_x0, "start site index (default: center)");
  walk_cmd->add_option("--seed", walk_seed, "path seed");
  walk_cmd->add_option("--out", walk_out, "path CSV");
  walk_cmd->add_flag("--clock", walk_clock, "simulate the conductance chain + clock");

  // ---- ips
  auto* ips_cmd = app.add_subcommand("ips", "simulate the partial exclusion system");
  std::string ips_env, ips_out = "snapshots.csv", ips_rho0 = "cos2:0:1.5:0.4";
  double ips_a = 0.0;
  int ips_n = 10;
  std::string ips_times = "0.25,0.5,1.0";
  std::uint64_t ips_seed = 1;
  ips_cmd->add_option("--env", ips_env, "environment JSON")->required();
  ips_cmd->add_option("--a", ips_a, "trap parameter");
  ips_cmd->add_option("--n", ips_n, "scaling index (times are sped up by theta_n)");
  ips_cmd->add_option("--t", ips_times, "macro observation times, comma separated");
  ips_cmd->add_option("--rho0", ips_rho0, "initial profile bump kind:center:radius:amp");
  ips_cmd->add_option("--seed", ips_seed, "replica seed");
  ips_cmd->add_option("--out", ips_out, "snapshot CSV (time,site,count)");

  // ---- duality
  auto* du_cmd = app.add_subcommand("duality", "run the duality battery");
  int du_cases = 200;
  std::uint64_t du_seed = 0x5eed;
  double du_tol = 1e-10;
  std::string du_out = "duality.jsonl";
  du_cmd->add_option("--cases", du_cases, "number of randomized cases");
  du_cmd->add_option("--seed", du_seed, "battery seed");
  du_cmd->add_option("--tol", du_tol, "gap tolerance");
  du_cmd->add_option("--out", du_out, "JSON-lines report path");

  // ---- fields
  auto* fields_cmd = app.add_subcommand("fields", "pair snapshots with a test function");
  std::string fields_env, fields_snaps, fields_f = "triangle:0:1:1", fields_out = "fields.csv";
  int fields_n = 10;
  fields_cmd->add_option("--env", fields_env, "environment JSON")->required();
  fields_cmd->add_option("--snapshots", fields_snaps, "snapshot CSV")->required();
  fields_cmd->add_option("--n", fields_n, "scaling index");
  fields_cmd->add_option("--f", fields_f, "test function bump spec");
  fields_cmd->add_option("--out", fields_out, "output CSV");

  // ---- fke
  auto* fke_cmd = app.add_subcommand("fke", "L1 solve of the fractional kinetics equation");
  double fke_beta = 0.5, fke_d = 1.0, fke_t = 1.0;
  int fke_grid = 256, fke_steps = 1024;
  std::string fke_out = "fke.csv", fke_rho0;
  fke_cmd->add_option("--beta", fke_beta, "Caputo order in (0,1]");
  fke_cmd->add_option("--D", fke_d, "diffusivity");
  fke_cmd->add_option("--t", fke_t, "final time");
  fke_cmd->add_option("--grid", fke_grid, "grid points on [0, 2pi)");
  fke_cmd->add_option("--steps", fke_steps, "time steps");
  fke_cmd->add_option("--rho0", fke_rho0, "bump initial data (default: 1 + 0.4 cos x)");
  fke_cmd->add_option("--out", fke_out, "solution CSV (t,x,value)");

  // ---- fin
  auto* fin_cmd = app.add_subcommand("fin", "FIN chain annealed MSD");
  double fin_beta = 0.5, fin_eps = 0.02, fin_box = 40.0;
  int fin_envs = 10, fin_paths = 100;
  std::string fin_times = "10,31.6,100,316,1000", fin_out = "fin_msd.csv";
  std::uint64_t fin_seed = 1;
  fin_cmd->add_option("--beta", fin_beta, "tail index");
  fin_cmd->add_option("--eps", fin_eps, "weight truncation");
  fin_cmd->add_option("--box", fin_box, "half-width of the atom box");
  fin_cmd->add_option("--envs", fin_envs, "environments");
  fin_cmd->add_option("--paths", fin_paths, "paths per environment");
  fin_cmd->add_option("--t", fin_times, "times, comma separated");
  fin_cmd->add_option("--seed", fin_seed, "seed");
  fin_cmd->add_option("--out", fin_out, "MSD CSV");

  // ---- run / report
  auto* run_cmd = app.add_subcommand("run", "run an experiment config");
  std::string run_config;
  std::int64_t run_seed_override = -1;
  run_cmd->add_option("config", run_config, "config file (key = value lines)")->required();
  run_cmd->add_option("--seed", run_seed_override, "override the config master seed");

  auto* rep_cmd = app.add_subcommand("report", "convergence report across run dirs");
  std::vector<std::string> rep_dirs;
  std::string rep_out = "report";
  rep_cmd->add_option("dirs", rep_dirs, "run output directories")->required();
  rep_cmd->add_option("--out", rep_out, "report output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*env_cmd) {
      const TailLaw law{env_beta, 1};
      const Environment env = build_environment(env_d, env_l, law, env_seed);
      std::ofstream out(env_json);
      out << io::environment_to_json(env).dump(2) << "\n";
      std::printf("wrote %s (%lld sites)\n", env_json.c_str(),
                  static_cast<long long>(env.n_sites()));
      if (!env_measure_out.empty() && measure_n >= 1) {
        io::write_point_measure_csv(env_measure_out, rescaled_measure(env, measure_n));
        std::printf("wrote %s\n", env_measure_out.c_str());
      }
      if (!env_ppp_out.empty() && ppp_eps > 0.0) {
        const PppSample s = sample_ppp_w(env_beta, env_d, ppp_box, ppp_eps, env_seed);
        io::write_point_measure_csv(env_ppp_out, s.measure);
        std::printf("wrote %s (%zu atoms, bias bound %.3e * sup|f|)\n", env_ppp_out.c_str(),
                    s.measure.atoms.size(), s.bias_bound);
      }
    } else if (*walk_cmd) {
      const Environment env = load_env(walk_env);
      const std::int64_t x0 =
          walk_x0 >= 0 ? walk_x0 : env.lattice.index_of({0, 0, 0});
      rng::Engine eng(walk_seed);
      if (walk_clock) {
        const ClockPath cp = simulate_rcm_clock(env, walk_a, x0, walk_horizon, eng);
        io::CsvWriter csv(walk_out, "clock-path", {"time", "site", "clock"});
        for (const ClockEvent& ev : cp.events)
          csv.row_values({ev.time, static_cast<double>(ev.site), ev.clock});
        std::printf("wrote %s (%zu jumps, S_end=%.6g)\n", walk_out.c_str(),
                    cp.events.size(), cp.clock_end);
      } else {
        const WalkerPath wp = simulate_btm(env, walk_a, x0, walk_horizon, eng);
        write_walker_path_csv(walk_out, env, wp);
        std::printf("wrote %s (%zu jumps)\n", walk_out.c_str(), wp.events.size());
      }
    } else if (*ips_cmd) {
      const Environment env = load_env(ips_env);
      const TestFunction rho0 = harness::parse_bump(ips_rho0);
      rng::Engine eng(ips_seed);
      auto rho0_fn = [&](const Point& p) { return rho0(p, env.d()); };
      Configuration eta0 = sample_binomial_profile(env, rho0_fn, ips_n, eng);
      EventSchedule sched;
      {
        std::istringstream ss(ips_times);
        std::string item;
        const double th = theta_n(ips_n, env.d(), env.beta);
        while (std::getline(ss, item, ',')) sched.times.push_back(std::stod(item) * th);
      }
      const IpsResult res = simulate_ips(env, ips_a, eta0, sched, eng);
      io::CsvWriter csv(ips_out, "ips-snapshots", {"time", "site", "count"});
      for (std::size_t k = 0; k < res.snapshots.size(); ++k)
        for (std::int64_t s = 0; s < env.n_sites(); ++s)
          csv.row_values({res.times[k], static_cast<double>(s),
                          static_cast<double>(res.snapshots[k].counts[s])});
      std::printf("wrote %s (%llu events%s)\n", ips_out.c_str(),
                  static_cast<unsigned long long>(res.events),
                  res.completed ? "" : ", INCOMPLETE");
      if (!res.completed) return 3;
    } else if (*du_cmd) {
      harness::Config cfg;
      cfg.kv["kind"] = "duality-battery";
      cfg.kv["seed"] = std::to_string(du_seed);
      cfg.kv["cases"] = std::to_string(du_cases);
      cfg.kv["out"] = ".";
      auto e = harness::ExperimentConfig::parse(cfg);
      e.out_dir = du_out.substr(0, du_out.find_last_of('/') == std::string::npos
                                       ? 0
                                       : du_out.find_last_of('/'));
      if (e.out_dir.empty()) e.out_dir = ".";
      auto man = harness::run_experiment(e);
      std::rename((e.out_dir + "/duality.jsonl").c_str(), du_out.c_str());
      std::printf("battery: %s/%s pass, worst gap %.3e -> %s\n",
                  man.summary["passed"].dump().c_str(), man.summary["checked"].dump().c_str(),
                  man.summary["worst_gap"].get<double>(), du_out.c_str());
      if (!man.ok) return 2;
    } else if (*fields_cmd) {
      const Environment env = load_env(fields_env);
      const TestFunction f = harness::parse_bump(fields_f);
      std::vector<double> times;
      const std::vector<Configuration> snaps = read_snapshots_csv(fields_snaps, env, &times);
      io::CsvWriter csv(fields_out, "field-samples",
                        {"n", "t", "f_id", "replica", "X_pair", "Z_pair"});
      const double th = theta_n(fields_n, env.d(), env.beta);
      for (std::size_t k = 0; k < snaps.size(); ++k)
        csv.row({std::to_string(fields_n), io::format_g17(times[k] / th), fields_f, "0",
                 io::format_g17(density_pair(env, snaps[k], fields_n, f)),
                 io::format_g17(frequency_pair(env, snaps[k], fields_n, f))});
      std::printf("wrote %s (%zu snapshots)\n", fields_out.c_str(), snaps.size());
    } else if (*fke_cmd) {
      Grid1D grid{0.0, 2.0 * M_PI / fke_grid, fke_grid};
      std::vector<double> rho0(static_cast<std::size_t>(fke_grid));
      if (fke_rho0.empty()) {
        for (int i = 0; i < fke_grid; ++i)
          rho0[static_cast<std::size_t>(i)] = 1.0 + 0.4 * std::cos(grid.x(i));
      } else {
        const TestFunction b = harness::parse_bump(fke_rho0);
        for (int i = 0; i < fke_grid; ++i)
          rho0[static_cast<std::size_t>(i)] = b({grid.x(i), 0, 0}, 1);
      }
      const double dt = fke_t / fke_steps;
      const auto sol = fke_solve_l1(grid, fke_beta, fke_d, rho0, dt, fke_steps);
      io::CsvWriter csv(fke_out, "fke-solution", {"t", "x", "value"});
      for (std::size_t m = 0; m < sol.size(); ++m)
        for (int i = 0; i < fke_grid; ++i)
          csv.row_values({dt * static_cast<double>(m), grid.x(i),
                          sol[m][static_cast<std::size_t>(i)]});
      nlohmann::json meta;
      meta["scheme"] = "l1-implicit";
      meta["beta"] = fke_beta;
      meta["dt"] = dt;
      meta["h"] = grid.h;
      meta["steps"] = fke_steps;
      std::ofstream mf(fke_out + ".meta.json");
      mf << meta.dump(2) << "\n";
      std::printf("wrote %s and %s.meta.json\n", fke_out.c_str(), fke_out.c_str());
    } else if (*fin_cmd) {
      FinMsdOptions opt;
      opt.box_half = fin_box;
      opt.eps = fin_eps;
      opt.environments = fin_envs;
      opt.paths_per_env = fin_paths;
      std::vector<double> ts;
      {
        std::istringstream ss(fin_times);
        std::string item;
        while (std::getline(ss, item, ',')) ts.push_back(std::stod(item));
      }
      const FinMsdCurve curve = fin_msd(fin_beta, ts, opt, fin_seed);
      io::CsvWriter csv(fin_out, "fin-msd", {"t", "msd", "se"});
      for (const MsdPoint& p : curve.points) csv.row_values({p.t, p.msd, p.se});
      const double slope = log_log_slope(curve.points, ts.front() * 0.999, ts.back() * 1.001);
      std::printf("wrote %s (log-log slope %.4f, target %.4f)\n", fin_out.c_str(), slope,
                  2.0 * fin_beta / (1.0 + fin_beta));
    } else if (*run_cmd) {
      harness::Config cfg = harness::Config::from_file(run_config);
      if (run_seed_override >= 0) cfg.kv["seed"] = std::to_string(run_seed_override);
      const auto e = harness::ExperimentConfig::parse(cfg);
      const auto man = harness::run_experiment(e);
      std::printf("%s: %s (%.2fs) -> %s/manifest.json\n", e.kind.c_str(),
                  man.ok ? "ok" : "FAILED", man.wall_clock_s, e.out_dir.c_str());
      for (const auto& err : man.errors) std::printf("  error: %s\n", err.c_str());
      if (!man.ok) return 2;
    } else if (*rep_cmd) {
      harness::report_convergence(rep_dirs, rep_out);
      std::printf("wrote %s/report.csv and %s/report.svg\n", rep_out.c_str(),
                  rep_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
