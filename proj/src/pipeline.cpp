#include "closeness/pipeline.hpp"

#include "closeness/error.hpp"
#include "closeness/parallel.hpp"
#include "closeness/random.hpp"
#include "closeness/trajectory_io.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace closeness {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- config parsing -------------------------------------------------------

namespace {

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

template <class T>
T convert(const json& v, const std::string& path);

template <>
double convert<double>(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
  return d;
}

template <>
std::size_t convert<std::size_t>(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::size_t>(v.get<long long>());
  throw ConfigError(path, "expected a nonnegative integer");
}

template <>
bool convert<bool>(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

template <>
std::string convert<std::string>(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

template <class T>
std::vector<T> convert_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<T>(v[i], fmt::format("{}[{}]", path, i)));
  return out;
}

/// Object reader that tracks consumed keys so unknown (misspelt) keys are rejected.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }
  std::string path(const std::string& key) const { return join_path(path_, key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    const json* v = find(key);
    return v ? convert<T>(*v, path(key)) : fallback;
  }
  template <class T>
  std::optional<T> opt(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return convert<T>(*v, path(key));
  }
  template <class T>
  std::optional<std::vector<T>> list(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return convert_list<T>(*v, path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(path(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

EmbeddingSpec default_embedding(SystemKind kind) {
  EmbeddingSpec e;
  switch (kind) {
    case SystemKind::HenonHenon: e = {4, 1, 0, 0, 0}; break;
    case SystemKind::RosslerLorenz: e = {6, 8, 10, 1, 1}; break;
    case SystemKind::RosslerRossler: e = {6, 8, 10, 2, 2}; break;
    case SystemKind::LinearForced: e = {250, 1, 0, 0, 0}; break;
  }
  return e;
}

std::size_t block_dim(SystemKind kind) { return kind == SystemKind::HenonHenon || kind == SystemKind::LinearForced ? 2 : 3; }

}  // namespace

ExperimentConfig parse_config(const json& root) {
  ExperimentConfig cfg;
  Reader r(root, "");
  cfg.run_id = r.get<std::string>("run_id", "run");
  cfg.seed = r.get<std::size_t>("seed", 0);
  cfg.jobs = std::max<std::size_t>(1, r.get<std::size_t>("jobs", 1));

  // system
  {
    const json* sj = r.find("system");
    if (!sj) throw ConfigError("system", "missing");
    Reader s(*sj, "system");
    const std::string kind = s.get<std::string>("kind", "");
    try {
      cfg.simulation.kind = parse_system_kind(kind);
    } catch (const ValidationError&) {
      throw ConfigError("system.kind", fmt::format("unknown system kind '{}'", kind));
    }
    auto& sim = cfg.simulation;
    sim.n_samples = s.get<std::size_t>("n_samples", sim.n_samples);
    sim.n_transient = s.get<std::size_t>("n_transient", sim.n_transient);
    sim.dt = s.opt<double>("dt");
    sim.rel_tol = s.get<double>("rel_tol", sim.rel_tol);
    sim.abs_tol = s.get<double>("abs_tol", sim.abs_tol);
    sim.rossler.omega1 = s.get<double>("omega1", sim.rossler.omega1);
    sim.rossler.omega2 = s.get<double>("omega2", sim.rossler.omega2);
    sim.linear_seed = s.get<std::size_t>("linear_seed", sim.linear_seed);
    if (auto ic = s.list<double>("initial_condition")) {
      sim.initial_condition = Eigen::Map<const Vector>(ic->data(), static_cast<Eigen::Index>(ic->size()));
    }
    s.finish();
  }

  // embedding
  cfg.embedding = default_embedding(cfg.simulation.kind);
  if (const json* ej = r.find("embedding")) {
    Reader e(*ej, "embedding");
    cfg.embedding.m = e.get<std::size_t>("m", cfg.embedding.m);
    cfg.embedding.tau = e.get<std::size_t>("tau", cfg.embedding.tau);
    cfg.embedding.theiler_window = e.get<std::size_t>("theiler_window", cfg.embedding.theiler_window);
    cfg.embedding.x_coordinate = e.get<std::size_t>("x_coordinate", cfg.embedding.x_coordinate);
    cfg.embedding.y_coordinate = e.get<std::size_t>("y_coordinate", cfg.embedding.y_coordinate);
    e.finish();
  }

  // analysis
  if (const json* aj = r.find("analysis")) {
    Reader a(*aj, "analysis");
    auto& an = cfg.analysis;
    if (auto grid = a.list<double>("coupling_grid")) an.coupling_grid = *grid;
    if (auto maps = a.list<std::string>("maps")) {
      an.maps.clear();
      for (std::size_t i = 0; i < maps->size(); ++i) {
        try {
          an.maps.push_back(parse_map_kind((*maps)[i]));
        } catch (const ValidationError& ex) {
          throw ConfigError(fmt::format("analysis.maps[{}]", i), ex.what());
        }
      }
    }
    an.n_pairs = a.get<std::size_t>("n_pairs", an.n_pairs);
    an.linear_pairs = a.get<std::size_t>("linear_pairs", an.linear_pairs);
    if (const json* hj = a.find("heuristics")) {
      Reader h(*hj, "analysis.heuristics");
      auto& hs = an.heuristics;
      hs.enabled = h.get<bool>("enabled", hs.enabled);
      hs.m_measure = h.get<bool>("M", hs.m_measure);
      hs.l_measure = h.get<bool>("L", hs.l_measure);
      hs.ccm = h.get<bool>("ccm", hs.ccm);
      hs.pecora = h.get<bool>("pecora", hs.pecora);
      hs.k = h.get<std::size_t>("k", hs.k);
      if (auto libs = h.list<std::size_t>("library_sizes")) hs.library_sizes = *libs;
      hs.ccm_replicates = h.get<std::size_t>("ccm_replicates", hs.ccm_replicates);
      if (auto metric = h.opt<std::string>("ccm_metric")) {
        if (*metric == "pearson") {
          hs.ccm_metric = SkillMetric::Pearson;
        } else if (*metric == "rmse") {
          hs.ccm_metric = SkillMetric::Rmse;
        } else {
          throw ConfigError("analysis.heuristics.ccm_metric", fmt::format("expected pearson or rmse, got '{}'", *metric));
        }
      }
      if (auto eps = h.list<double>("epsilons")) hs.continuity.epsilons = *eps;
      hs.continuity.n_probes = h.get<std::size_t>("n_probes", hs.continuity.n_probes);
      hs.continuity.n_max = h.get<std::size_t>("n_max", hs.continuity.n_max);
      h.finish();
    }
    if (const json* cj = a.find("certificate")) {
      Reader c(*cj, "analysis.certificate");
      auto& cs = an.certificate;
      cs.enabled = c.get<bool>("enabled", cs.enabled);
      cs.n_pairs = c.get<std::size_t>("n_pairs", cs.n_pairs);
      cs.assumption2_declared = c.get<bool>("assumption2_declared", cs.assumption2_declared);
      cs.assumption1_pairs = c.get<std::size_t>("assumption1_pairs", cs.assumption1_pairs);
      c.finish();
    }
    a.finish();
  }

  // output
  if (const json* oj = r.find("output")) {
    Reader o(*oj, "output");
    cfg.out_dir = o.get<std::string>("directory", cfg.out_dir.string());
    const std::string f = o.get<std::string>("format", "csv");
    if (f == "csv") {
      cfg.format = OutputFormat::Csv;
    } else if (f == "json") {
      cfg.format = OutputFormat::Json;
    } else {
      throw ConfigError("output.format", fmt::format("expected csv or json, got '{}'", f));
    }
    o.finish();
  }
  r.finish();
  validate_config(cfg);
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& sim = cfg.simulation;
  const auto& emb = cfg.embedding;
  const auto& an = cfg.analysis;
  if (sim.n_samples == 0) throw ConfigError("system.n_samples", "must be positive");
  if (sim.dt && !(*sim.dt > 0.0)) throw ConfigError("system.dt", "must be positive");
  if (!(sim.rel_tol > 0.0)) throw ConfigError("system.rel_tol", "must be positive");
  if (!(sim.abs_tol > 0.0)) throw ConfigError("system.abs_tol", "must be positive");
  if (sim.initial_condition && static_cast<std::size_t>(sim.initial_condition->size()) != 2 * block_dim(sim.kind)) {
    throw ConfigError("system.initial_condition", fmt::format("expected {} entries", 2 * block_dim(sim.kind)));
  }
  if (emb.m == 0) throw ConfigError("embedding.m", "must be positive");
  if (emb.tau == 0) throw ConfigError("embedding.tau", "must be positive");
  if (sim.kind != SystemKind::LinearForced) {
    if (emb.x_coordinate >= block_dim(sim.kind)) throw ConfigError("embedding.x_coordinate", "outside the x block");
    if (emb.y_coordinate >= block_dim(sim.kind)) throw ConfigError("embedding.y_coordinate", "outside the y block");
  }
  const std::size_t span = (emb.m - 1) * emb.tau;
  if (sim.n_samples <= span + 1) throw ConfigError("embedding.m", "series too short for this (m, tau)");
  const std::size_t t_prime = sim.n_samples - span;
  if (an.coupling_grid.empty()) throw ConfigError("analysis.coupling_grid", "must not be empty");
  for (std::size_t i = 0; i < an.coupling_grid.size(); ++i) {
    if (!(an.coupling_grid[i] >= 0.0)) throw ConfigError(fmt::format("analysis.coupling_grid[{}]", i), "must be >= 0");
  }
  if (an.maps.empty()) throw ConfigError("analysis.maps", "must not be empty");
  if (an.n_pairs == 0) throw ConfigError("analysis.n_pairs", "must be positive");
  if (an.linear_pairs == 0) throw ConfigError("analysis.linear_pairs", "must be positive");
  const auto& hs = an.heuristics;
  if (hs.enabled) {
    try {
      NeighborQuery{hs.k, emb.theiler_window}.validate(t_prime);
    } catch (const ValidationError& e) {
      throw ConfigError("analysis.heuristics.k", e.what());
    }
    if (hs.ccm) {
      if (hs.library_sizes.empty()) throw ConfigError("analysis.heuristics.library_sizes", "must not be empty");
      if (hs.ccm_replicates == 0) throw ConfigError("analysis.heuristics.ccm_replicates", "must be positive");
      for (std::size_t i = 0; i < hs.library_sizes.size(); ++i) {
        const std::size_t L = hs.library_sizes[i];
        if (L > t_prime || L <= emb.m + 1 + 2 * emb.theiler_window) {
          throw ConfigError(fmt::format("analysis.heuristics.library_sizes[{}]", i),
                            fmt::format("must lie in ({}, {}]", emb.m + 1 + 2 * emb.theiler_window, t_prime));
        }
      }
    }
    if (hs.pecora) {
      if (hs.continuity.epsilons.empty()) throw ConfigError("analysis.heuristics.epsilons", "must not be empty");
      for (std::size_t i = 0; i < hs.continuity.epsilons.size(); ++i) {
        if (!(hs.continuity.epsilons[i] > 0.0)) {
          throw ConfigError(fmt::format("analysis.heuristics.epsilons[{}]", i), "must be positive");
        }
      }
      if (hs.continuity.n_probes == 0) throw ConfigError("analysis.heuristics.n_probes", "must be positive");
      if (hs.continuity.n_max == 0) throw ConfigError("analysis.heuristics.n_max", "must be positive");
    }
  }
  if (an.certificate.enabled && an.certificate.n_pairs == 0) {
    throw ConfigError("analysis.certificate.n_pairs", "must be positive");
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", fmt::format("cannot open {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", e.what());
  }
  return parse_config(j);
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["run_id"] = cfg.run_id;
  j["seed"] = cfg.seed;
  j["jobs"] = cfg.jobs;
  const auto& sim = cfg.simulation;
  ordered_json s;
  s["kind"] = to_string(sim.kind);
  s["n_samples"] = sim.n_samples;
  s["n_transient"] = sim.n_transient;
  s["dt"] = sim.dt ? json(*sim.dt) : json(nullptr);
  s["rel_tol"] = sim.rel_tol;
  s["abs_tol"] = sim.abs_tol;
  s["omega1"] = sim.rossler.omega1;
  s["omega2"] = sim.rossler.omega2;
  s["linear_seed"] = sim.linear_seed;
  if (sim.initial_condition) {
    s["initial_condition"] = std::vector<double>(sim.initial_condition->data(),
                                                 sim.initial_condition->data() + sim.initial_condition->size());
  } else {
    s["initial_condition"] = nullptr;
  }
  j["system"] = s;
  const auto& e = cfg.embedding;
  j["embedding"] = {{"m", e.m}, {"tau", e.tau}, {"theiler_window", e.theiler_window},
                    {"x_coordinate", e.x_coordinate}, {"y_coordinate", e.y_coordinate}};
  const auto& an = cfg.analysis;
  ordered_json a;
  a["coupling_grid"] = an.coupling_grid;
  std::vector<std::string> maps;
  for (auto m : an.maps) maps.push_back(to_string(m));
  a["maps"] = maps;
  a["n_pairs"] = an.n_pairs;
  a["linear_pairs"] = an.linear_pairs;
  const auto& hs = an.heuristics;
  a["heuristics"] = {{"enabled", hs.enabled},
                     {"M", hs.m_measure},
                     {"L", hs.l_measure},
                     {"ccm", hs.ccm},
                     {"pecora", hs.pecora},
                     {"k", hs.k},
                     {"library_sizes", hs.library_sizes},
                     {"ccm_replicates", hs.ccm_replicates},
                     {"ccm_metric", hs.ccm_metric == SkillMetric::Pearson ? "pearson" : "rmse"},
                     {"epsilons", hs.continuity.epsilons},
                     {"n_probes", hs.continuity.n_probes},
                     {"n_max", hs.continuity.n_max}};
  const auto& cs = an.certificate;
  a["certificate"] = {{"enabled", cs.enabled},
                      {"n_pairs", cs.n_pairs},
                      {"assumption2_declared", cs.assumption2_declared},
                      {"assumption1_pairs", cs.assumption1_pairs}};
  j["analysis"] = a;
  j["output"] = {{"directory", cfg.out_dir.string()}, {"format", cfg.format == OutputFormat::Csv ? "csv" : "json"}};
  return j;
}

// ---- cells ------------------------------------------------------------------

CellSeeds cell_seeds(std::uint64_t master, std::size_t c_index) {
  return {derive_seed(master, {0xCC11ULL, c_index}), derive_seed(master, {0x9EC0ULL, c_index}),
          derive_seed(master, {0xCE47ULL, c_index}), derive_seed(master, {0xA551ULL, c_index})};
}

namespace {

std::string eps_label(double e) { return fmt::format("theta_eps{:g}", e); }

}  // namespace

std::vector<HeuristicRecord> run_heuristics(const AlignedPointSets& sets, const ExperimentConfig& cfg,
                                            std::size_t c_index) {
  const auto& hs = cfg.analysis.heuristics;
  const NeighborQuery q{hs.k, cfg.embedding.theiler_window};
  const auto seeds = cell_seeds(cfg.seed, c_index);
  const Matrix& nx = *sets.gx;
  const Matrix& ny = *sets.py;
  std::vector<HeuristicRecord> out;
  // Heuristics run inside a grid cell, which is already one worker of the pool.
  const std::size_t jobs = 1;
  if (hs.m_measure) {
    const auto M = andrzejak_M(nx, ny, q, jobs);
    out.push_back({"M", "X|Y", "M", M.M_xy, {}});
    out.push_back({"M", "Y|X", "M", M.M_yx, {}});
    out.push_back({"M", "X-Y", "delta_M", M.delta_M, {}});
    out.push_back({"M", "sym", "M_s", M.M_s, {}});
    out.push_back({"M", "X|Y", "mean_D", M.stats_x.D_mean.mean(), {}});
    out.push_back({"M", "X|Y", "mean_D_knn", M.stats_x.D_knn.mean(), {}});
    out.push_back({"M", "X|Y", "mean_D_mutual", M.stats_x.D_mutual.mean(), {}});
    out.push_back({"M", "Y|X", "mean_D", M.stats_y.D_mean.mean(), {}});
    out.push_back({"M", "Y|X", "mean_D_knn", M.stats_y.D_knn.mean(), {}});
    out.push_back({"M", "Y|X", "mean_D_mutual", M.stats_y.D_mutual.mean(), {}});
  }
  if (hs.l_measure) {
    const auto L = chicharro_L(nx, ny, q, jobs);
    out.push_back({"L", "X|Y", "L", L.L_xy, {}});
    out.push_back({"L", "Y|X", "L", L.L_yx, {}});
    out.push_back({"L", "X-Y", "delta_L", L.delta_L, L.wilcoxon.p_one_sided});
    out.push_back({"L", "X|Y", "mean_G_mutual", L.G_mutual_x.mean(), {}});
    out.push_back({"L", "Y|X", "mean_G_mutual", L.G_mutual_y.mean(), {}});
  }
  if (hs.ccm) {
    CcmSpec spec{hs.library_sizes, hs.ccm_replicates, cfg.embedding.theiler_window, seeds.ccm, hs.ccm_metric};
    const char* label = hs.ccm_metric == SkillMetric::Pearson ? "skill" : "rmse";
    const auto to_x = ccm(ny, *sets.x, spec, jobs);
    spec.seed = derive_seed(seeds.ccm, {1});
    const auto to_y = ccm(nx, *sets.y, spec, jobs);
    for (const auto& [res, dir] : {std::pair{&to_x, "Ny->x"}, std::pair{&to_y, "Nx->y"}}) {
      for (std::size_t i = 0; i < res->library_sizes.size(); ++i) {
        out.push_back({"CCM", dir, fmt::format("{}_L{}", label, res->library_sizes[i]), res->skill[i], {}});
      }
      out.push_back({"CCM", dir, "max_weight_sum_error", res->max_weight_sum_error, {}});
      out.push_back({"CCM", dir, "nearest_weight_maximal", res->nearest_weight_maximal ? 1.0 : 0.0, {}});
    }
  }
  if (hs.pecora) {
    ContinuitySpec spec = hs.continuity;
    spec.theiler_window = cfg.embedding.theiler_window;
    spec.seed = seeds.pecora;
    const auto P = pecora_continuity(ny, nx, spec);
    for (std::size_t e = 0; e < P.epsilons.size(); ++e) {
      out.push_back({"Pecora", "Psi_y->x", eps_label(P.epsilons[e]), P.theta[e], {}});
      out.push_back({"Pecora", "Psi_x->y", eps_label(P.epsilons[e]), P.theta_inverse[e], {}});
      out.push_back({"Pecora", "product", eps_label(P.epsilons[e]), P.theta_product[e], {}});
    }
  }
  return out;
}

CellResult run_cell(const ExperimentConfig& cfg, std::size_t ci, CellTasks tasks) {
  CellResult cell;
  cell.c_index = ci;
  cell.coupling = cfg.analysis.coupling_grid.at(ci);
  try {
    const auto sim = simulate(cfg.simulation, cell.coupling, cfg.embedding.m);
    const auto sets = build_point_sets(sim.trajectory, cfg.embedding, sim.linear_measurements);
    auto estimate = [&](MapKind map) {
      const auto pts = map_points(sets, map);
      return empirical_isometry(pts.domain, pts.image, cfg.analysis.n_pairs, isometry_seed(cfg.seed, ci, map));
    };
    if (tasks.isometry) {
      for (MapKind map : cfg.analysis.maps) cell.isometry.push_back({ci, cell.coupling, map, estimate(map)});
    }
    if (tasks.heuristics && cfg.analysis.heuristics.enabled) cell.heuristics = run_heuristics(sets, cfg, ci);
    if (tasks.certificate && cfg.analysis.certificate.enabled) {
      const auto& cs = cfg.analysis.certificate;
      const auto seeds = cell_seeds(cfg.seed, ci);
      const auto gx = estimate(MapKind::PhiGammaX);
      const auto py = estimate(MapKind::PhiPhiY);
      std::optional<Assumption1Result> a1;
      try {
        const double bound = assumption1_bound(gx.upper, estimate(MapKind::PhiGammaY).upper,
                                               estimate(MapKind::PhiPhiX).lower, py.lower);
        if (bound >= 1.0) a1 = check_assumption1(*sets.x, *sets.y, bound, cs.assumption1_pairs, seeds.assumption1);
      } catch (const ThresholdUndefined&) {
      }
      cell.verdict = run_iff_test(*sets.py, *sets.gx, gx.upper, py.lower, Provenance::Empirical, cs.n_pairs,
                                  seeds.certificate, cs.assumption2_declared, a1);
    }
  } catch (const Error& e) {
    cell.isometry.clear();
    cell.heuristics.clear();
    cell.verdict.reset();
    cell.error = e.what();
  }
  return cell;
}

std::vector<CellResult> run_grid(const ExperimentConfig& cfg, CellTasks tasks) {
  std::vector<CellResult> cells(cfg.analysis.coupling_grid.size());
  parallel_for(cells.size(), cfg.jobs, [&](std::size_t ci) { cells[ci] = run_cell(cfg, ci, tasks); });
  return cells;
}

// ---- writers ----------------------------------------------------------------

namespace {

std::string num(double v) { return fmt::format("{}", v); }

std::vector<std::pair<std::string, double>> estimate_stats(const IsometryEstimate& e) {
  return {{"lower", e.lower}, {"p5", e.p5}, {"p50", e.p50}, {"p95", e.p95}, {"upper", e.upper},
          {"n_pairs", static_cast<double>(e.n_pairs)}};
}

}  // namespace

void write_isometry_table(std::ostream& out, const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
  const std::string system = to_string(cfg.simulation.kind);
  if (cfg.format == OutputFormat::Csv) {
    out << "run_id,system,C,map,stat,value\n";
    for (const auto& c : cells) {
      for (const auto& r : c.isometry) {
        for (const auto& [stat, v] : estimate_stats(r.estimate)) {
          fmt::print(out, "{},{},{},{},{},{}\n", cfg.run_id, system, num(c.coupling), to_string(r.map), stat, num(v));
        }
      }
    }
    return;
  }
  ordered_json arr = ordered_json::array();
  for (const auto& c : cells) {
    for (const auto& r : c.isometry) {
      for (const auto& [stat, v] : estimate_stats(r.estimate)) {
        arr.push_back({{"run_id", cfg.run_id}, {"system", system}, {"C", c.coupling}, {"map", to_string(r.map)},
                       {"stat", stat}, {"value", v}});
      }
    }
  }
  out << arr.dump(1) << '\n';
}

void write_heuristics_table(std::ostream& out, const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
  const std::string system = to_string(cfg.simulation.kind);
  if (cfg.format == OutputFormat::Csv) {
    out << "system,C,method,direction,statistic,value,p_value\n";
    for (const auto& c : cells) {
      for (const auto& h : c.heuristics) {
        fmt::print(out, "{},{},{},{},{},{},{}\n", system, num(c.coupling), h.method, h.direction, h.statistic,
                   num(h.value), h.p_value ? num(*h.p_value) : "");
      }
    }
    return;
  }
  ordered_json arr = ordered_json::array();
  for (const auto& c : cells) {
    for (const auto& h : c.heuristics) {
      arr.push_back({{"system", system}, {"C", c.coupling}, {"method", h.method}, {"direction", h.direction},
                     {"statistic", h.statistic}, {"value", h.value},
                     {"p_value", h.p_value ? json(*h.p_value) : json(nullptr)}});
    }
  }
  out << arr.dump(1) << '\n';
}

// ---- linear verification ------------------------------------------------

LinearVerifyReport linear_verify(const ExperimentConfig& cfg) {
  if (cfg.simulation.kind != SystemKind::LinearForced) {
    throw ConfigError("system.kind", "linear-verify requires LinearForced");
  }
  LinearVerifyReport rep;
  rep.coupling = cfg.analysis.coupling_grid.front();
  rep.m = cfg.embedding.m;
  rep.T_s = cfg.simulation.dt.value_or(1.0);
  const std::size_t n_pairs = cfg.analysis.linear_pairs;

  const auto bench = example1_system(cfg.simulation.linear_seed, rep.m, rep.coupling);
  rep.n_x = bench.system.n_x();
  rep.n_y = bench.system.n_y();
  const auto sim = simulate(cfg.simulation, rep.coupling, rep.m);
  const auto sets = build_point_sets(sim.trajectory, cfg.embedding, sim.linear_measurements);
  const auto& h = bench.measurements;

  rep.x_bound = analytic_linear_bounds(bench.system.x_subsystem(), h.gamma_x, rep.m, rep.T_s);
  try {
    rep.phi_y_bound = analytic_linear_bounds(bench.system, h.phi_y, rep.m, rep.T_s);
  } catch (const Error& e) {
    rep.flags.push_back(fmt::format("PhiPhiY bound unavailable: {}", e.what()));
  }

  auto add_row = [&](MapKind map, const std::optional<TheoremBound>& b, std::string note) {
    const auto pts = map_points(sets, map);
    const auto est = empirical_isometry(pts.domain, pts.image, n_pairs, isometry_seed(cfg.seed, 0, map));
    LinearVerifyRow row;
    row.map = to_string(map);
    row.empirical_lower = est.lower;
    row.empirical_upper = est.upper;
    row.analytic_note = std::move(note);
    if (b) {
      row.analytic_lower = b->lower();
      row.analytic_upper = b->upper();
      row.inside = est.lower >= b->lower() && est.upper <= b->upper();
      if (!row.inside) rep.flags.push_back(fmt::format("{} empirical range leaves the analytic band", row.map));
    }
    rep.rows.push_back(row);
    return est;
  };

  add_row(MapKind::PhiGammaX, rep.x_bound, "autonomous x subsystem");
  add_row(MapKind::PhiGammaY, std::nullopt, "y subsystem is forced; bound not applicable");
  add_row(MapKind::PhiPhiX, std::nullopt, "measurement blind to the y modes");
  add_row(MapKind::PhiPhiY, rep.phi_y_bound, rep.phi_y_bound ? "full system" : "hypotheses fail");
  add_row(MapKind::PiX, std::nullopt, "nonexpansive");
  add_row(MapKind::IotaX, std::nullopt, "noncontractive");

  // Analytic certificate threshold: u_gamma_x / l_phi_y.
  const auto psi = map_points(sets, MapKind::PsiYtoX);
  if (rep.phi_y_bound && rep.phi_y_bound->lower() > 0.0) {
    rep.psi_threshold = rep.x_bound.upper() / rep.phi_y_bound->lower();
    const auto thr = CertificateThreshold::make(rep.x_bound.upper(), rep.phi_y_bound->lower(), Provenance::Analytic);
    rep.verdict = iff_test(expansivity_certificate(psi.domain, psi.image, thr, n_pairs, cell_seeds(cfg.seed, 0).certificate),
                           thr, cfg.analysis.certificate.assumption2_declared, std::nullopt);
  } else {
    rep.verdict.note = "analytic lower constant unavailable";
  }
  LinearVerifyRow psi_row;
  psi_row.map = to_string(MapKind::PsiYtoX);
  const auto pe = empirical_isometry(psi.domain, psi.image, n_pairs, isometry_seed(cfg.seed, 0, MapKind::PsiYtoX));
  psi_row.empirical_lower = pe.lower;
  psi_row.empirical_upper = pe.upper;
  if (rep.psi_threshold > 0.0) {
    psi_row.analytic_upper = rep.psi_threshold;
    psi_row.analytic_note = "certificate threshold";
    psi_row.inside = pe.upper <= rep.psi_threshold;
    if (!psi_row.inside) rep.flags.push_back("PsiYtoX exceeds the certificate threshold");
  }
  rep.rows.push_back(psi_row);
  add_row(MapKind::PsiXtoY, std::nullopt, "bounded contractiveness only");

  rep.phi_y_rank = phi_matrix(bench.system, h.phi_y, rep.m, rep.T_s).rank;
  const auto decoupled = example1_system(cfg.simulation.linear_seed, rep.m, 0.0);
  const auto pm = phi_matrix(decoupled.system, decoupled.measurements.phi_y, rep.m, rep.T_s);
  rep.phi_y_rank_decoupled = pm.rank;
  rep.decoupled_x_columns_zero = (pm.matrix.leftCols(static_cast<Eigen::Index>(rep.n_x)).array() == 0.0).all();
  const auto dsim = simulate(cfg.simulation, 0.0, rep.m);
  const auto dsets = build_point_sets(dsim.trajectory, cfg.embedding, dsim.linear_measurements);
  const auto dpts = map_points(dsets, MapKind::PhiPhiY);
  rep.decoupled_phi_y_lower =
      empirical_isometry(dpts.domain, dpts.image, n_pairs, isometry_seed(cfg.seed, 1, MapKind::PhiPhiY)).lower;
  return rep;
}

void write_linear_verify(std::ostream& out, const LinearVerifyReport& r, OutputFormat format) {
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string{}; };
  if (format == OutputFormat::Csv) {
    out << "map,analytic_lower,analytic_upper,empirical_lower,empirical_upper,inside,note\n";
    for (const auto& row : r.rows) {
      fmt::print(out, "{},{},{},{},{},{},\"{}\"\n", row.map, opt(row.analytic_lower), opt(row.analytic_upper),
                 num(row.empirical_lower), num(row.empirical_upper), row.inside ? "yes" : "no", row.analytic_note);
    }
    fmt::print(out, "# x bound: C={} delta0={} delta1={} nu={}\n", num(r.x_bound.scale), num(r.x_bound.delta0),
               num(r.x_bound.delta1), num(r.x_bound.nu));
    fmt::print(out, "# phi_y rank coupled={} decoupled={} (n_x={}, n_y={}), decoupled x columns zero={}\n", r.phi_y_rank,
               r.phi_y_rank_decoupled, r.n_x, r.n_y, r.decoupled_x_columns_zero ? "yes" : "no");
    fmt::print(out, "# decoupled PhiPhiY empirical lower={}\n", num(r.decoupled_phi_y_lower));
    fmt::print(out, "# verdict={} threshold={}\n", to_string(r.verdict.outcome), num(r.psi_threshold));
    for (const auto& f : r.flags) fmt::print(out, "# flag: {}\n", f);
    return;
  }
  ordered_json j;
  j["coupling"] = r.coupling;
  j["m"] = r.m;
  j["T_s"] = r.T_s;
  ordered_json rows = ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"map", row.map},
                    {"analytic_lower", row.analytic_lower ? json(*row.analytic_lower) : json(nullptr)},
                    {"analytic_upper", row.analytic_upper ? json(*row.analytic_upper) : json(nullptr)},
                    {"empirical_lower", row.empirical_lower},
                    {"empirical_upper", row.empirical_upper},
                    {"inside", row.inside},
                    {"note", row.analytic_note}});
  }
  j["rows"] = rows;
  auto bound_json = [](const TheoremBound& b) {
    return ordered_json{{"C", b.scale},   {"delta0", b.delta0}, {"delta1", b.delta1},
                        {"nu", b.nu},     {"kappa1", b.kappa1}, {"kappa2", b.kappa2},
                        {"A1", b.A1},     {"A2", b.A2},         {"hypothesis_a", b.hypothesis_a}};
  };
  j["x_bound"] = bound_json(r.x_bound);
  j["phi_y_bound"] = r.phi_y_bound ? bound_json(*r.phi_y_bound) : ordered_json(nullptr);
  j["phi_y_rank"] = {{"coupled", r.phi_y_rank}, {"decoupled", r.phi_y_rank_decoupled}, {"n_x", r.n_x}, {"n_y", r.n_y},
                     {"decoupled_x_columns_zero", r.decoupled_x_columns_zero}};
  j["decoupled_phi_y_lower"] = r.decoupled_phi_y_lower;
  j["verdict"] = to_json(r.verdict);
  j["flags"] = r.flags;
  out << j.dump(2) << '\n';
}

// ---- commands -------------------------------------------------------------

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(fmt::format("cannot write {}", path.string()));
  f << content;
}

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

ordered_json manifest(const ExperimentConfig& cfg, const std::string& command, const std::vector<CellResult>* cells,
                      const std::vector<std::string>& outputs) {
  ordered_json m;
  m["schema"] = "closeness-manifest/1";
  m["command"] = command;
  m["config"] = config_to_json(cfg);
  ordered_json grid = ordered_json::array();
  for (std::size_t ci = 0; ci < cfg.analysis.coupling_grid.size(); ++ci) {
    const auto s = cell_seeds(cfg.seed, ci);
    ordered_json iso;
    for (auto map : cfg.analysis.maps) iso[to_string(map)] = isometry_seed(cfg.seed, ci, map);
    ordered_json cell{{"c_index", ci},
                      {"C", cfg.analysis.coupling_grid[ci]},
                      {"seeds",
                       {{"isometry", iso},
                        {"ccm", s.ccm},
                        {"pecora", s.pecora},
                        {"certificate", s.certificate},
                        {"assumption1", s.assumption1}}}};
    if (cells) {
      const auto& c = (*cells)[ci];
      cell["status"] = c.error ? "failed" : "ok";
      if (c.error) cell["error"] = *c.error;
    }
    grid.push_back(cell);
  }
  m["cells"] = grid;
  m["outputs"] = outputs;
  return m;
}

std::string ext(const ExperimentConfig& cfg) { return cfg.format == OutputFormat::Csv ? ".csv" : ".json"; }

int finish_grid(const ExperimentConfig& cfg, const std::string& command, const std::vector<CellResult>& cells,
                std::vector<std::string> outputs, std::ostream& log) {
  int failed = 0;
  for (const auto& c : cells) {
    if (c.error) {
      ++failed;
      fmt::print(log, "cell {} (C={}) failed: {}\n", c.c_index, c.coupling, *c.error);
    }
  }
  outputs.push_back("manifest.json");
  write_file(cfg.out_dir / "manifest.json", manifest(cfg, command, &cells, outputs).dump(2) + "\n");
  fmt::print(log, "{}: {} cells, {} failed, outputs in {}\n", command, cells.size(), failed, cfg.out_dir.string());
  return failed ? 1 : 0;
}

}  // namespace

int run_command(const std::string& command, const ExperimentConfig& cfg, std::ostream& log) {
  try {
    validate_config(cfg);
    fs::create_directories(cfg.out_dir);
    if (command == "simulate" || command == "embed") {
      std::vector<std::string> outputs;
      std::vector<CellResult> cells(cfg.analysis.coupling_grid.size());
      std::vector<std::vector<std::pair<std::string, std::string>>> files(cells.size());
      parallel_for(cells.size(), cfg.jobs, [&](std::size_t ci) {
        cells[ci].c_index = ci;
        cells[ci].coupling = cfg.analysis.coupling_grid[ci];
        try {
          const auto sim = simulate(cfg.simulation, cells[ci].coupling, cfg.embedding.m);
          const std::string stem = fmt::format("c{:02}", ci);
          if (command == "simulate") {
            files[ci].emplace_back("trajectory_" + stem + ".csv",
                                   render([&](std::ostream& o) { write_trajectory_csv(o, sim.trajectory); }));
            write_trajectory_cache(cfg.out_dir / ("trajectory_" + stem + ".bin"), sim.trajectory);
          } else {
            const auto sets = build_point_sets(sim.trajectory, cfg.embedding, sim.linear_measurements);
            for (const auto& [name, pts] : {std::pair{"gx", sets.gx}, std::pair{"gy", sets.gy},
                                            std::pair{"px", sets.px}, std::pair{"py", sets.py}}) {
              DelayEmbedding e;
              e.points = *pts;
              e.m = cfg.embedding.m;
              e.tau = cfg.embedding.tau;
              e.base_offset = sets.first_time;
              files[ci].emplace_back(fmt::format("embedding_{}_{}.csv", stem, name),
                                     render([&](std::ostream& o) { write_embedding_csv(o, e); }));
            }
          }
        } catch (const Error& e) {
          cells[ci].error = e.what();
        }
      });
      for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        for (const auto& [name, content] : files[ci]) {
          write_file(cfg.out_dir / name, content);
          outputs.push_back(name);
          if (command == "simulate") {
            const auto bin = name.substr(0, name.size() - 4) + ".bin";
            outputs.push_back(bin);
            outputs.push_back(bin + ".json");
          }
        }
      }
      return finish_grid(cfg, command, cells, outputs, log);
    }
    if (command == "isometry" || command == "heuristics" || command == "sweep") {
      CellTasks tasks{command != "heuristics", command != "isometry", command == "sweep"};
      const auto cells = run_grid(cfg, tasks);
      std::vector<std::string> outputs;
      if (tasks.isometry) {
        write_file(cfg.out_dir / ("isometry" + ext(cfg)),
                   render([&](std::ostream& o) { write_isometry_table(o, cfg, cells); }));
        outputs.push_back("isometry" + ext(cfg));
      }
      if (tasks.heuristics && cfg.analysis.heuristics.enabled) {
        write_file(cfg.out_dir / ("heuristics" + ext(cfg)),
                   render([&](std::ostream& o) { write_heuristics_table(o, cfg, cells); }));
        outputs.push_back("heuristics" + ext(cfg));
      }
      if (tasks.certificate && cfg.analysis.certificate.enabled) {
        ordered_json arr = ordered_json::array();
        for (const auto& c : cells) {
          if (!c.verdict) continue;
          ordered_json v = to_json(*c.verdict);
          v["C"] = c.coupling;
          arr.push_back(v);
        }
        write_file(cfg.out_dir / "verdicts.json", arr.dump(2) + "\n");
        outputs.push_back("verdicts.json");
      }
      return finish_grid(cfg, command, cells, outputs, log);
    }
    if (command == "linear-verify") {
      const auto rep = linear_verify(cfg);
      const std::string name = "linear_verify" + ext(cfg);
      write_file(cfg.out_dir / name, render([&](std::ostream& o) { write_linear_verify(o, rep, cfg.format); }));
      write_file(cfg.out_dir / "manifest.json", manifest(cfg, command, nullptr, {name, "manifest.json"}).dump(2) + "\n");
      fmt::print(log, "linear-verify: {} rows, {} flags, verdict {}\n", rep.rows.size(), rep.flags.size(),
                 to_string(rep.verdict.outcome));
      return rep.flags.empty() ? 0 : 1;
    }
    throw ConfigError("<command>", fmt::format("unknown subcommand '{}'", command));
  } catch (const ConfigError& e) {
    fmt::print(log, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(log, "error: {}\n", e.what());
    return 1;
  }
}

}  // namespace closeness
