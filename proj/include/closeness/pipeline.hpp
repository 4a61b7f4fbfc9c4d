#pragma once

#include "closeness/causal_tests.hpp"
#include "closeness/dynamics.hpp"
#include "closeness/heuristics.hpp"
#include "closeness/isometry.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace closeness {

enum class OutputFormat { Csv, Json };

struct HeuristicsSpec {
  bool enabled = true;
  bool m_measure = true;
  bool l_measure = true;
  bool ccm = true;
  bool pecora = true;
  std::size_t k = 5;
  std::vector<std::size_t> library_sizes{25, 50, 100, 200, 400, 800, 1600, 3200, 6400};
  std::size_t ccm_replicates = 8;
  SkillMetric ccm_metric = SkillMetric::Pearson;
  ContinuitySpec continuity;
};

struct CertificateSpec {
  bool enabled = false;
  std::size_t n_pairs = 50'000;
  bool assumption2_declared = false;
  std::size_t assumption1_pairs = 50'000;
};

struct AnalysisSpec {
  std::vector<double> coupling_grid;
  std::vector<MapKind> maps{std::begin(kAllMaps), std::end(kAllMaps)};
  std::size_t n_pairs = 5'000;
  HeuristicsSpec heuristics;
  CertificateSpec certificate;
  std::size_t linear_pairs = 50'000;  ///< pairs per map in linear-verify
};

struct ExperimentConfig {
  std::string run_id = "run";
  std::uint64_t seed = 0;
  SimulationSpec simulation;
  EmbeddingSpec embedding;
  AnalysisSpec analysis;
  std::filesystem::path out_dir = "out";
  OutputFormat format = OutputFormat::Csv;
  std::size_t jobs = 1;
};

/// Parses and validates a JSON experiment description. Every problem is a
/// ConfigError naming the offending field path (e.g. "system.kind").
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Re-checks cross-field constraints (used after command-line overrides).
void validate_config(const ExperimentConfig& cfg);
/// Normalised configuration, sufficient to rerun any grid cell.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

struct HeuristicRecord {
  std::string method;
  std::string direction;
  std::string statistic;
  double value = 0.0;
  std::optional<double> p_value;
};

struct CellSeeds {
  std::uint64_t ccm = 0;
  std::uint64_t pecora = 0;
  std::uint64_t certificate = 0;
  std::uint64_t assumption1 = 0;
};
CellSeeds cell_seeds(std::uint64_t master, std::size_t c_index);

struct CellResult {
  std::size_t c_index = 0;
  double coupling = 0.0;
  std::vector<SweepRecord> isometry;
  std::vector<HeuristicRecord> heuristics;
  std::optional<CausalVerdict> verdict;
  std::optional<std::string> error;
};

struct CellTasks {
  bool isometry = true;
  bool heuristics = true;
  bool certificate = true;
};

/// Simulate + embed + analyse one coupling value. Errors are captured in
/// the result rather than thrown.
CellResult run_cell(const ExperimentConfig& cfg, std::size_t c_index, CellTasks tasks);

/// Heuristic families on already-built point sets.
std::vector<HeuristicRecord> run_heuristics(const AlignedPointSets& sets, const ExperimentConfig& cfg,
                                            std::size_t c_index);

std::vector<CellResult> run_grid(const ExperimentConfig& cfg, CellTasks tasks);

void write_isometry_table(std::ostream& out, const ExperimentConfig& cfg, const std::vector<CellResult>& cells);
void write_heuristics_table(std::ostream& out, const ExperimentConfig& cfg, const std::vector<CellResult>& cells);

struct LinearVerifyRow {
  std::string map;
  std::optional<double> analytic_lower;
  std::optional<double> analytic_upper;
  std::string analytic_note;
  double empirical_lower = 0.0;
  double empirical_upper = 0.0;
  bool inside = true;  ///< empirical extremes lie within the analytic band (when one exists)
};

struct LinearVerifyReport {
  double coupling = 1.0;
  std::size_t m = 0;
  double T_s = 1.0;
  std::vector<LinearVerifyRow> rows;
  TheoremBound x_bound;
  std::optional<TheoremBound> phi_y_bound;
  double psi_threshold = 0.0;  ///< analytic u_gamma_x / l_phi_y
  CausalVerdict verdict;
  std::size_t phi_y_rank = 0;
  std::size_t phi_y_rank_decoupled = 0;
  bool decoupled_x_columns_zero = false;
  double decoupled_phi_y_lower = 0.0;
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  std::vector<std::string> flags;  ///< violations of analytic bounds
};

/// Compares analytical bounds, empirical constants and Phi-matrix ranks for
/// the forced linear benchmark.
LinearVerifyReport linear_verify(const ExperimentConfig& cfg);
void write_linear_verify(std::ostream& out, const LinearVerifyReport& r, OutputFormat format);

/// Subcommand driver: "simulate", "embed", "isometry", "heuristics",
/// "sweep", "linear-verify". Returns the process exit code (0 ok, 1
/// runtime failure incl. partial sweep failure, 2 config error).
int run_command(const std::string& command, const ExperimentConfig& cfg, std::ostream& log);

}  // namespace closeness
