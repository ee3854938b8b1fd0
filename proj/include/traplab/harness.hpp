#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "traplab/duality.hpp"
#include "traplab/environment.hpp"
#include "traplab/fields.hpp"
#include "traplab/fin.hpp"
#include "traplab/fke.hpp"
#include "traplab/io.hpp"
#include "traplab/ips.hpp"
#include "traplab/mittag_leffler.hpp"
#include "traplab/stable.hpp"
#include "traplab/version.hpp"
#include "traplab/walker.hpp"

#include "json.hpp"

// Experiment orchestration: key/value configs with canonical hashing,
// derived per-replica seeds, a bounded worker pool with deterministic
// replica-order aggregation, and one pipeline per experiment kind.

namespace traplab::harness {

// ---------------------------------------------------------------------------
// Config: `key = value` lines, '#' comments. Canonical form sorts keys, so the
// hash is stable under reordering.

struct Config {
  std::map<std::string, std::string> kv;

  static Config from_string(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      if (trim(line).empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      if (key.empty()) throw std::invalid_argument("config: empty key");
      c.kv[key] = val;
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
  }

  bool has(const std::string& k) const { return kv.count(k) > 0; }

  std::string str(const std::string& k) const {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::invalid_argument("config: missing key '" + k + "'");
    return it->second;
  }
  std::string str_or(const std::string& k, const std::string& dflt) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  }
  double real(const std::string& k) const { return std::stod(str(k)); }
  double real_or(const std::string& k, double dflt) const {
    return has(k) ? real(k) : dflt;
  }
  long long integer(const std::string& k) const { return std::stoll(str(k)); }
  long long integer_or(const std::string& k, long long dflt) const {
    return has(k) ? integer(k) : dflt;
  }

  std::vector<double> real_list(const std::string& k) const {
    std::vector<double> out;
    std::istringstream ss(str(k));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
  }
  std::vector<int> int_list(const std::string& k) const {
    std::vector<int> out;
    std::istringstream ss(str(k));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
  }

  std::string canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    return os.str();
  }

  std::string hash() const {
    // FNV-1a 64
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : canonical()) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

// bump spec "kind:center:radius:amplitude", center "0" or "0.1,0.2"
inline TestFunction parse_bump(const std::string& spec) {
  std::vector<std::string> parts;
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() < 3 || parts.size() > 4)
    throw std::invalid_argument("bump spec must be kind:center:radius[:amplitude]");
  TestFunction f;
  if (parts[0] == "triangle")
    f.kind = BumpKind::kTriangle;
  else if (parts[0] == "cos2")
    f.kind = BumpKind::kSquaredCosine;
  else
    throw std::invalid_argument("bump kind must be triangle or cos2");
  {
    std::istringstream cs(parts[1]);
    std::string c;
    int i = 0;
    while (std::getline(cs, c, ',') && i < 3) f.center[i++] = std::stod(c);
  }
  f.radius = std::stod(parts[2]);
  if (f.radius <= 0.0) throw std::invalid_argument("bump radius must be > 0");
  f.amplitude = parts.size() == 4 ? std::stod(parts[3]) : 1.0;
  if (f.amplitude < 0.0) throw std::invalid_argument("bump amplitude must be >= 0");
  return f;
}

inline std::string bump_to_string(const TestFunction& f, int dim) {
  std::ostringstream os;
  os << bump_kind_name(f.kind) << ":";
  for (int i = 0; i < dim; ++i) os << f.center[i] << (i + 1 < dim ? "," : "");
  os << ":" << f.radius << ":" << f.amplitude;
  return os.str();
}

// ---------------------------------------------------------------------------
// Worker pool: replica-level parallelism, deterministic aggregation by index.

inline int worker_count() {
  if (const char* env = std::getenv("TRAPLAB_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

inline void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), std::max(count, 1));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Experiment configuration and manifest

struct ExperimentConfig {
  std::string kind;
  int d = 1;
  double beta = 0.5;
  double a = 0.0;
  std::vector<int> n_list;
  int box_factor = 3;  // L = box_factor * n for hydro runs
  int box_l = 10;      // explicit L for walker runs
  std::vector<double> t_list;
  TestFunction f = TestFunction::triangle({0, 0, 0}, 1.0);
  TestFunction rho0 = TestFunction::cos2({0, 0, 0}, 1.5, 0.4);
  int replicas = 100;
  int cases = 200;
  int samples = 1'000'000;
  double eps = 0.01;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  Config raw;

  static ExperimentConfig parse(const Config& cfg) {
    ExperimentConfig e;
    e.raw = cfg;
    e.kind = cfg.str("kind");
    static const char* kinds[] = {"env-tail",       "walker-msd", "duality-battery",
                                  "hydro-density",  "hydro-frequency",
                                  "fke-validate",   "fin-msd"};
    bool known = false;
    for (const char* k : kinds) known |= (e.kind == k);
    if (!known) throw std::invalid_argument("unknown experiment kind: " + e.kind);
    if (!cfg.has("seed")) throw std::invalid_argument("config: master seed is mandatory");
    e.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    e.d = static_cast<int>(cfg.integer_or("d", 1));
    e.beta = cfg.real_or("beta", 0.5);
    e.a = cfg.real_or("a", 0.0);
    if (cfg.has("n")) e.n_list = cfg.int_list("n");
    e.box_factor = static_cast<int>(cfg.integer_or("box_factor", 3));
    e.box_l = static_cast<int>(cfg.integer_or("L", 10));
    if (cfg.has("t")) e.t_list = cfg.real_list("t");
    if (cfg.has("f")) e.f = parse_bump(cfg.str("f"));
    if (cfg.has("rho0")) e.rho0 = parse_bump(cfg.str("rho0"));
    e.replicas = static_cast<int>(cfg.integer_or("replicas", 100));
    e.cases = static_cast<int>(cfg.integer_or("cases", 200));
    e.samples = static_cast<int>(cfg.integer_or("samples", 1'000'000));
    e.eps = cfg.real_or("eps", 0.01);
    e.out_dir = cfg.str_or("out", "out");
    if (!(e.beta > 0.0 && e.beta < 1.0))
      throw std::invalid_argument("config: beta must be in (0,1)");
    if (!(e.a >= 0.0 && e.a <= 1.0)) throw std::invalid_argument("config: a must be in [0,1]");
    if (e.rho0.amplitude > 1.0)
      throw std::invalid_argument("config: rho0 amplitude must be <= 1");
    return e;
  }
};

struct RunManifest {
  std::string config_hash;
  std::string code_version = kVersion;
  std::vector<std::uint64_t> replica_seeds;
  double wall_clock_s = 0.0;
  std::vector<std::string> outputs;
  nlohmann::json summary;
  bool ok = true;
  std::vector<std::string> errors;

  void write(const std::string& dir) const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["code_version"] = code_version;
    j["replica_seeds"] = replica_seeds;
    j["wall_clock_s"] = wall_clock_s;
    j["outputs"] = outputs;
    j["summary"] = summary;
    j["ok"] = ok;
    j["errors"] = errors;
    std::ofstream f(dir + "/manifest.json");
    f << j.dump(2) << "\n";
  }
};

inline std::uint64_t kind_salt(const std::string& kind) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : kind) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t replica_seed(std::uint64_t master, const std::string& kind, int idx) {
  return rng::derive(master, kind_salt(kind), static_cast<std::uint64_t>(idx));
}

// ---------------------------------------------------------------------------
// Hydro ensemble shared by the density and frequency pipelines

struct HydroLevel {
  int n = 0;
  Environment env;
  std::vector<ReplicaSnapshot> replicas;
};

inline HydroLevel run_hydro_level(const ExperimentConfig& cfg, int n, int replicas) {
  HydroLevel level;
  level.n = n;
  const TailLaw law{cfg.beta, 1};
  level.env = build_environment(cfg.d, cfg.box_factor * n, law,
                                rng::derive(cfg.seed, kind_salt("env"), n));
  auto rho0_fn = [&](const Point& p) { return cfg.rho0(p, cfg.d); };
  level.replicas.resize(static_cast<std::size_t>(replicas));
  parallel_for(replicas, [&](int r) {
    level.replicas[static_cast<std::size_t>(r)] =
        run_field_replica(level.env, cfg.a, n, cfg.t_list, rho0_fn,
                          rng::derive(replica_seed(cfg.seed, cfg.kind, r), n));
  });
  return level;
}

// Fit the effective FKE diffusivity by matching the exact one-particle
// semigroup profile against the spectral solution (d >= 2 reference; the
// constant itself is a fitted empirical quantity).
inline double fit_d_eff_2d(const Environment& env, const ExperimentConfig& cfg, int n,
                           double t) {
  auto rho0_fn = [&](const Point& p) { return cfg.rho0(p, cfg.d); };
  const std::vector<double> rho0v = profile_from_function(env, n, rho0_fn);
  const std::vector<double> target =
      solve_one_particle_forward(env, cfg.a, n, {t}, rho0v)[0];
  const int side = env.lattice.extent[0];
  const double h = 1.0 / static_cast<double>(n);

  auto loss = [&](double d_eff) {
    const std::vector<double> ref = fke_spectral_periodic_2d(
        rho0v, side, side, h, cfg.beta, d_eff, t);
    double acc = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      acc += (ref[i] - target[i]) * (ref[i] - target[i]);
    return acc;
  };
  // golden-section search on log10(D)
  double lo = -3.0, hi = 1.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = loss(std::pow(10.0, c)), fd = loss(std::pow(10.0, d));
  for (int it = 0; it < 40; ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = loss(std::pow(10.0, c));
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = loss(std::pow(10.0, d));
    }
  }
  return std::pow(10.0, 0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Experiment pipelines

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
}

inline void run_env_tail(const ExperimentConfig& cfg, RunManifest* man) {
  const TailLaw law{cfg.beta, 1};
  const std::vector<std::int64_t> thresholds = {10, 100, 1000};
  std::vector<std::int64_t> hits(thresholds.size(), 0);
  for (int i = 0; i < cfg.samples; ++i) {
    const std::int64_t alpha =
        sample_alpha(law, rng::site_u01(cfg.seed, static_cast<std::uint64_t>(i)));
    for (std::size_t k = 0; k < thresholds.size(); ++k)
      if (alpha > thresholds[k]) ++hits[k];
  }
  io::CsvWriter csv(cfg.out_dir + "/tail.csv", "env-tail",
                    {"u", "empirical", "exact", "se", "z"});
  nlohmann::json rows = nlohmann::json::array();
  double worst_z = 0.0;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    const double p_hat = static_cast<double>(hits[k]) / cfg.samples;
    const double p = alpha_tail_exact(law, thresholds[k]);
    const double se = std::sqrt(p * (1.0 - p) / cfg.samples);
    const double z = (p_hat - p) / se;
    worst_z = std::max(worst_z, std::abs(z));
    csv.row_values({static_cast<double>(thresholds[k]), p_hat, p, se, z});
    rows.push_back({{"u", thresholds[k]}, {"z", z}});
  }
  man->outputs.push_back("tail.csv");
  man->summary["tail"] = rows;
  man->summary["worst_z"] = worst_z;
  man->ok = worst_z <= 4.0;
}

inline void run_walker_msd(const ExperimentConfig& cfg, RunManifest* man) {
  const TailLaw law{cfg.beta, 1};
  std::vector<double> ts = cfg.t_list;
  if (ts.empty()) ts = {1e2, 3e2, 1e3, 3e3, 1e4, 3e4, 1e5};
  std::vector<std::vector<MsdPoint>> per_replica(static_cast<std::size_t>(cfg.replicas));
  parallel_for(cfg.replicas, [&](int r) {
    per_replica[static_cast<std::size_t>(r)] =
        msd_curve(cfg.d, cfg.box_l, law, cfg.a, ts, 1, replica_seed(cfg.seed, cfg.kind, r));
  });
  std::vector<MsdPoint> curve(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    std::vector<double> vals;
    vals.reserve(per_replica.size());
    for (const auto& pr : per_replica) vals.push_back(pr[k].msd);
    const MeanSe m = reduce_mean_se(vals);
    curve[k] = {ts[k], m.mean, m.se};
  }
  io::CsvWriter csv(cfg.out_dir + "/msd.csv", "walker-msd", {"t", "msd", "se"});
  io::SvgSeries series{"msd", {}};
  for (const MsdPoint& p : curve) {
    csv.row_values({p.t, p.msd, p.se});
    series.points.emplace_back(p.t, p.msd);
  }
  man->outputs.push_back("msd.csv");
  const double slope = log_log_slope(curve, ts.front() * 0.999, ts.back() * 1.001);
  man->summary["slope"] = slope;
  man->summary["beta"] = cfg.beta;
  io::write_svg_chart(cfg.out_dir + "/msd.svg", {series},
                      {"annealed walker MSD", "t", "E|X_t|^2", true, true});
  man->outputs.push_back("msd.svg");
}

inline void run_duality_battery(const ExperimentConfig& cfg, RunManifest* man) {
  std::vector<DualityReport> reports(2 * static_cast<std::size_t>(cfg.cases));
  parallel_for(cfg.cases, [&](int i) {
    const BatteryCase c = draw_battery_case(cfg.seed, i);
    reports[2 * static_cast<std::size_t>(i)] =
        verify_duality_one(c.env, c.a, c.eta, c.x, c.t);
    reports[2 * static_cast<std::size_t>(i) + 1] =
        verify_duality_two(c.env, c.a, c.eta, c.x, c.y, c.t);
  });
  std::ofstream jl(cfg.out_dir + "/duality.jsonl");
  int passed = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const DualityReport& r = reports[i];
    nlohmann::json j;
    j["case"] = i / 2;
    j["relation"] = (i % 2 == 0) ? 1 : 2;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["abs_gap"] = r.abs_gap;
    j["tol"] = r.tol;
    j["pass"] = r.pass;
    j["undefined"] = r.undefined;
    j["provenance"] = r.provenance;
    jl << j.dump() << "\n";
    if (r.pass || r.undefined) ++passed;
    if (!r.undefined) worst = std::max(worst, r.abs_gap);
  }
  man->outputs.push_back("duality.jsonl");
  man->summary["checked"] = reports.size();
  man->summary["passed"] = passed;
  man->summary["worst_gap"] = worst;
  man->ok = passed == static_cast<int>(reports.size());
}

inline void write_field_samples_csv(const ExperimentConfig& cfg, const HydroLevel& level,
                                    io::CsvWriter* csv) {
  const std::string f_id = bump_to_string(cfg.f, cfg.d);
  for (std::size_t r = 0; r < level.replicas.size(); ++r)
    for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti) {
      const Configuration& eta = level.replicas[r].eta_t[ti];
      csv->row({std::to_string(level.n), io::format_g17(cfg.t_list[ti]), f_id,
                std::to_string(r), io::format_g17(density_pair(level.env, eta, level.n, cfg.f)),
                io::format_g17(frequency_pair(level.env, eta, level.n, cfg.f))});
    }
}

inline void run_hydro_density(const ExperimentConfig& cfg, RunManifest* man) {
  if (cfg.n_list.size() < 1) throw std::invalid_argument("hydro-density: need n list");
  io::CsvWriter fields_csv(cfg.out_dir + "/fields.csv", "field-samples",
                           {"n", "t", "f_id", "replica", "X_pair", "Z_pair"});
  io::CsvWriter cmp(cfg.out_dir + "/comparison.csv", "hydro-density-comparison",
                    {"n", "t", "mean_X", "se", "reference", "gap", "gap_z", "var_I",
                     "var_bound", "var_ratio"});
  nlohmann::json conv = nlohmann::json::array();
  auto rho0_fn = [&](const Point& p) { return cfg.rho0(p, cfg.d); };
  std::map<double, io::SvgSeries> series;

  for (int n : cfg.n_list) {
    const HydroLevel level = run_hydro_level(cfg, n, cfg.replicas);
    write_field_samples_csv(cfg, level, &fields_csv);
    for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti) {
      const double t = cfg.t_list[ti];
      const DecompositionDiagnostics diag = decomposition_diagnostics(
          level.env, cfg.a, n, t, cfg.f, rho0_fn, level.replicas, ti);
      const double gap = diag.field.mean - diag.reference;
      const double gap_z = diag.field.se > 0.0 ? gap / diag.field.se : 0.0;
      const double ratio =
          diag.var_bound_mean > 0.0 ? diag.var_i / diag.var_bound_mean : 0.0;
      cmp.row_values({static_cast<double>(n), t, diag.field.mean, diag.field.se,
                      diag.reference, gap, gap_z, diag.var_i, diag.var_bound_mean, ratio});
      nlohmann::json j;
      j["n"] = n;
      j["t"] = t;
      j["f"] = bump_to_string(cfg.f, cfg.d);
      j["kind"] = cfg.kind;
      j["d"] = cfg.d;
      j["beta"] = cfg.beta;
      j["a"] = cfg.a;
      j["mean_X"] = diag.field.mean;
      j["se"] = diag.field.se;
      j["reference"] = diag.reference;
      j["gap"] = gap;
      j["gap_z"] = gap_z;
      j["var_I"] = diag.var_i;
      j["var_I_se"] = diag.var_i_se;
      j["var_bound"] = diag.var_bound_mean;
      j["var_ratio"] = ratio;
      j["term_II_var"] = diag.var_ii;
      j["term_II_var_oracle"] = diag.var_ii_oracle;
      conv.push_back(j);
      io::SvgSeries& s = series[t];
      if (s.name.empty()) s.name = "t=" + io::format_g17(t);
      s.points.emplace_back(static_cast<double>(n), std::abs(gap));
    }
  }
  man->outputs.push_back("fields.csv");
  man->outputs.push_back("comparison.csv");
  std::ofstream cj(cfg.out_dir + "/convergence.json");
  cj << conv.dump(2) << "\n";
  man->outputs.push_back("convergence.json");
  std::vector<io::SvgSeries> sv;
  for (auto& [t, s] : series) sv.push_back(s);
  io::write_svg_chart(cfg.out_dir + "/gap.svg", sv,
                      {"density field vs dual reference", "n", "|gap|", false, false});
  man->outputs.push_back("gap.svg");
  man->summary["levels"] = conv;
}

inline void run_hydro_frequency(const ExperimentConfig& cfg, RunManifest* man) {
  if (cfg.n_list.size() < 1) throw std::invalid_argument("hydro-frequency: need n list");
  io::CsvWriter fields_csv(cfg.out_dir + "/fields.csv", "field-samples",
                           {"n", "t", "f_id", "replica", "X_pair", "Z_pair"});
  io::CsvWriter cmp(cfg.out_dir + "/comparison.csv", "hydro-frequency-comparison",
                    {"n", "t", "mean_Z", "se", "reference", "gap", "band"});
  nlohmann::json conv = nlohmann::json::array();
  auto rho0_fn = [&](const Point& p) { return cfg.rho0(p, cfg.d); };

  double d_eff = 0.0;  // estimated once at the largest n for d >= 2
  if (cfg.d >= 2) {
    const int n_ref = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
    const TailLaw law{cfg.beta, 1};
    const Environment env_ref = build_environment(
        cfg.d, cfg.box_factor * n_ref, law, rng::derive(cfg.seed, kind_salt("env"), n_ref));
    d_eff = fit_d_eff_2d(env_ref, cfg, n_ref, cfg.t_list.back());
    man->summary["d_eff"] = d_eff;
  }

  std::map<double, io::SvgSeries> series;
  for (int n : cfg.n_list) {
    const HydroLevel level = run_hydro_level(cfg, n, cfg.replicas);
    write_field_samples_csv(cfg, level, &fields_csv);

    // reference P_t rho0 per observation time
    const std::vector<double> rho0v = profile_from_function(level.env, n, rho0_fn);
    std::vector<std::vector<double>> pref(cfg.t_list.size());
    if (cfg.d == 1) {
      const FinChain chain = build_fin_chain(rescaled_measure(level.env, n));
      for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti)
        pref[ti] = fin_semigroup(chain, rho0v, cfg.t_list[ti]).values;
    } else {
      const int side = level.env.lattice.extent[0];
      for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti)
        pref[ti] = fke_spectral_periodic_2d(rho0v, side, side, 1.0 / n, cfg.beta, d_eff,
                                            cfg.t_list[ti]);
    }

    const double nd = std::pow(static_cast<double>(n), cfg.d);
    for (std::size_t ti = 0; ti < cfg.t_list.size(); ++ti) {
      std::vector<double> zvals;
      zvals.reserve(level.replicas.size());
      for (const ReplicaSnapshot& rep : level.replicas)
        zvals.push_back(frequency_pair(level.env, rep.eta_t[ti], n, cfg.f));
      const MeanSe z = reduce_mean_se(zvals);
      double ref = 0.0;
      for (std::int64_t s = 0; s < level.env.n_sites(); ++s)
        ref += pref[ti][static_cast<std::size_t>(s)] *
               cfg.f(level.env.lattice.point_of(s, static_cast<double>(n)), cfg.d);
      ref /= nd;
      const double gap = z.mean - ref;
      const double band = std::abs(gap) + 2.0 * z.se;
      cmp.row_values({static_cast<double>(n), cfg.t_list[ti], z.mean, z.se, ref, gap, band});
      nlohmann::json j;
      j["n"] = n;
      j["t"] = cfg.t_list[ti];
      j["f"] = bump_to_string(cfg.f, cfg.d);
      j["kind"] = cfg.kind;
      j["d"] = cfg.d;
      j["beta"] = cfg.beta;
      j["a"] = cfg.a;
      j["mean_Z"] = z.mean;
      j["se"] = z.se;
      j["reference"] = ref;
      j["gap"] = gap;
      j["band"] = band;
      conv.push_back(j);
      io::SvgSeries& s = series[cfg.t_list[ti]];
      if (s.name.empty()) s.name = "t=" + io::format_g17(cfg.t_list[ti]);
      s.points.emplace_back(static_cast<double>(n), band);
    }
  }
  man->outputs.push_back("fields.csv");
  man->outputs.push_back("comparison.csv");
  std::ofstream cj(cfg.out_dir + "/convergence.json");
  cj << conv.dump(2) << "\n";
  man->outputs.push_back("convergence.json");
  std::vector<io::SvgSeries> sv;
  for (auto& [t, s] : series) sv.push_back(s);
  io::write_svg_chart(cfg.out_dir + "/band.svg", sv,
                      {"frequency field vs fractional reference", "n", "|gap|+2se", false,
                       false});
  man->outputs.push_back("band.svg");
  man->summary["levels"] = conv;
}

inline void run_fke_validate(const ExperimentConfig& cfg, RunManifest* man) {
  std::vector<double> betas = {0.3, 0.5, 0.8};
  if (cfg.raw.has("betas")) betas = cfg.raw.real_list("betas");
  io::CsvWriter csv(cfg.out_dir + "/fke_mode.csv", "fke-mode",
                    {"beta", "t", "amp_l1", "amp_exact", "err"});
  nlohmann::json summary = nlohmann::json::array();
  bool all_ok = true;
  const int grid_n = static_cast<int>(cfg.raw.integer_or("grid", 256));
  const int steps = static_cast<int>(cfg.raw.integer_or("steps", 1024));
  const double t_end = cfg.raw.real_or("t_end", 1.0);
  for (double beta : betas) {
    Grid1D grid{0.0, 2.0 * M_PI / grid_n, grid_n};
    std::vector<double> rho0(static_cast<std::size_t>(grid_n));
    const double delta = 0.4;
    for (int i = 0; i < grid_n; ++i) rho0[static_cast<std::size_t>(i)] = 1.0 + delta * std::cos(grid.x(i));
    const auto sol = fke_solve_l1(grid, beta, 1.0, rho0, t_end / steps, steps);
    double amp = 0.0;
    for (int i = 0; i < grid_n; ++i)
      amp += sol.back()[static_cast<std::size_t>(i)] * std::cos(grid.x(i));
    amp *= 2.0 / grid_n;
    const double exact = delta * mittag_leffler(beta, -std::pow(t_end, beta));
    csv.row_values({beta, t_end, amp, exact, amp - exact});
    summary.push_back({{"beta", beta}, {"err", amp - exact}});
    all_ok = all_ok && std::abs(amp - exact) <= 1e-3;
  }
  man->outputs.push_back("fke_mode.csv");
  man->summary["modes"] = summary;
  man->ok = all_ok;
}

inline void run_fin_msd(const ExperimentConfig& cfg, RunManifest* man) {
  FinMsdOptions opt;
  opt.box_half = cfg.raw.real_or("box_half", 40.0);
  opt.eps = cfg.eps;
  opt.environments = static_cast<int>(cfg.raw.integer_or("environments", 50));
  opt.paths_per_env = static_cast<int>(cfg.raw.integer_or("paths", 200));
  std::vector<double> ts = cfg.t_list;
  if (ts.empty()) ts = {10, 21.5, 46.4, 100, 215, 464, 1000};
  const FinMsdCurve curve = fin_msd(cfg.beta, ts, opt, cfg.seed);
  io::CsvWriter csv(cfg.out_dir + "/fin_msd.csv", "fin-msd", {"t", "msd", "se"});
  io::SvgSeries series{"msd", {}};
  for (const MsdPoint& p : curve.points) {
    csv.row_values({p.t, p.msd, p.se});
    series.points.emplace_back(p.t, p.msd);
  }
  man->outputs.push_back("fin_msd.csv");
  const double slope = log_log_slope(curve.points, ts.front() * 0.999, ts.back() * 1.001);
  man->summary["slope"] = slope;
  man->summary["target"] = 2.0 * cfg.beta / (1.0 + cfg.beta);
  io::write_svg_chart(cfg.out_dir + "/fin_msd.svg", {series},
                      {"FIN chain annealed MSD", "t", "E[Z(t)^2]", true, true});
  man->outputs.push_back("fin_msd.svg");
}

}  // namespace detail

inline RunManifest run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  detail::ensure_dir(cfg.out_dir);
  RunManifest man;
  man.config_hash = cfg.raw.hash();
  for (int r = 0; r < cfg.replicas; ++r)
    man.replica_seeds.push_back(replica_seed(cfg.seed, cfg.kind, r));

  try {
    if (cfg.kind == "env-tail")
      detail::run_env_tail(cfg, &man);
    else if (cfg.kind == "walker-msd")
      detail::run_walker_msd(cfg, &man);
    else if (cfg.kind == "duality-battery")
      detail::run_duality_battery(cfg, &man);
    else if (cfg.kind == "hydro-density")
      detail::run_hydro_density(cfg, &man);
    else if (cfg.kind == "hydro-frequency")
      detail::run_hydro_frequency(cfg, &man);
    else if (cfg.kind == "fke-validate")
      detail::run_fke_validate(cfg, &man);
    else if (cfg.kind == "fin-msd")
      detail::run_fin_msd(cfg, &man);
  } catch (const std::exception& e) {
    man.ok = false;
    man.errors.push_back(e.what());
  }

  man.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  man.write(cfg.out_dir);
  return man;
}

// ---------------------------------------------------------------------------
// Convergence report across runs: per (t, f) the gap trend over n.

inline void report_convergence(const std::vector<std::string>& dirs,
                               const std::string& out_dir) {
  std::vector<nlohmann::json> records;
  for (const std::string& dir : dirs) {
    std::ifstream in(dir + "/convergence.json");
    if (!in)
      throw std::invalid_argument("report_convergence: no convergence.json in " + dir);
    nlohmann::json arr;
    in >> arr;
    for (const auto& j : arr) records.push_back(j);
  }
  if (records.empty()) throw std::invalid_argument("report_convergence: no records");
  std::set<int> ns;
  for (const auto& j : records) ns.insert(j.at("n").get<int>());
  if (ns.size() < 2)
    throw std::invalid_argument(
        "report_convergence: need at least 2 values of n, got " + std::to_string(ns.size()));
  for (const auto& j : records) {
    if (j.at("d") != records.front().at("d") || j.at("beta") != records.front().at("beta") ||
        j.at("a") != records.front().at("a") || j.at("kind") != records.front().at("kind"))
      throw std::invalid_argument("report_convergence: mismatched run configurations");
  }

  detail::ensure_dir(out_dir);
  io::CsvWriter csv(out_dir + "/report.csv", "convergence-report",
                    {"n", "t", "f_id", "gap", "se", "var_ratio"});
  std::map<std::string, io::SvgSeries> series;
  for (const auto& j : records) {
    const double gap = j.at("gap").get<double>();
    const double se = j.at("se").get<double>();
    const double ratio = j.contains("var_ratio") ? j.at("var_ratio").get<double>() : 0.0;
    csv.row({std::to_string(j.at("n").get<int>()), io::format_g17(j.at("t").get<double>()),
             j.at("f").get<std::string>(), io::format_g17(gap), io::format_g17(se),
             io::format_g17(ratio)});
    const std::string key =
        "t=" + io::format_g17(j.at("t").get<double>()) + " " + j.at("f").get<std::string>();
    io::SvgSeries& s = series[key];
    if (s.name.empty()) s.name = key;
    s.points.emplace_back(j.at("n").get<double>(), std::abs(gap));
  }
  std::vector<io::SvgSeries> sv;
  for (auto& [k, s] : series) {
    std::sort(s.points.begin(), s.points.end());
    sv.push_back(s);
  }
  io::write_svg_chart(out_dir + "/report.svg", sv,
                      {"field gap vs n", "n", "|gap|", false, false});
}

}  // namespace traplab::harness
