#pragma once

#include "closeness/dynamics.hpp"
#include "closeness/embedding.hpp"
#include "closeness/linear_system.hpp"
#include "closeness/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace closeness {

/// Maps between attractor samples and delay embeddings.
///   PhiGammaX: M_x -> N_x       PhiGammaY: M_y -> N_y
///   PhiPhiX:   M_xy -> N_x(phi) PhiPhiY:   M_xy -> N_y(phi)
///   PiX: M_xy -> M_x            PiY: M_xy -> M_y
///   IotaX: M_y -> M_xy          IotaY: M_x -> M_xy
///   PsiYtoX: N_y(phi) -> N_x    PsiXtoY: N_x -> N_y(phi)
enum class MapKind { PhiGammaX, PhiGammaY, PhiPhiX, PhiPhiY, PiX, PiY, IotaX, IotaY, PsiYtoX, PsiXtoY };

inline constexpr MapKind kAllMaps[] = {MapKind::PhiGammaX, MapKind::PhiGammaY, MapKind::PhiPhiX, MapKind::PhiPhiY,
                                       MapKind::PiX,       MapKind::PiY,       MapKind::IotaX,   MapKind::IotaY,
                                       MapKind::PsiYtoX,   MapKind::PsiXtoY};

std::string to_string(MapKind kind);
/// Throws ValidationError on unknown names.
MapKind parse_map_kind(const std::string& name);

/// Contemporaneous point sets; row i of every member refers to the same time.
struct AlignedPointSets {
  std::shared_ptr<const Matrix> joint, x, y;  // attractor samples
  std::shared_ptr<const Matrix> gx, gy;       // embeddings of the block measurements
  std::shared_ptr<const Matrix> px, py;       // embeddings of the joint measurements
  std::size_t first_time = 0;                 // trajectory row of point 0

  std::size_t size() const { return joint ? static_cast<std::size_t>(joint->rows()) : 0; }
};

struct MapPoints {
  const Matrix& domain;
  const Matrix& image;
};
MapPoints map_points(const AlignedPointSets& sets, MapKind kind);

/// Embedding settings shared by every measurement of a run.
struct EmbeddingSpec {
  std::size_t m = 4;
  std::size_t tau = 1;
  std::size_t theiler_window = 0;
  /// Coordinates observed in each block (used for nonlinear systems).
  std::size_t x_coordinate = 0;
  std::size_t y_coordinate = 0;
};

/// Builds the four embeddings and the aligned attractor samples. With
/// linear measurement vectors, gx/gy/px/py use <h, .>; otherwise gx and gy
/// observe the configured coordinates and the joint measurements coincide
/// with them (phi_x = gamma_x o pi_x).
AlignedPointSets build_point_sets(const Trajectory& traj, const EmbeddingSpec& spec,
                                  const std::optional<MeasurementSet>& linear = std::nullopt);

struct IsometryEstimate {
  double lower = 0.0;
  double p5 = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double upper = 0.0;
  std::size_t n_pairs = 0;
  std::uint64_t seed = 0;
  IndexPair argmax{0, 0};
  IndexPair argmin{0, 0};
};

inline constexpr double kCoincidenceCutoff = 1e-12;

/// n_pairs index pairs (i != j), sampled with replacement, whose squared
/// distance is at least kCoincidenceCutoff in every listed point set.
/// Throws DegenerateInputError when the sets are (almost) all coincident.
std::vector<IndexPair> sample_pairs(const std::vector<const Matrix*>& domains, std::size_t n_pairs,
                                    std::uint64_t seed);

/// Squared-distance ratios image/domain over the given pairs.
std::vector<double> pair_ratios(const Matrix& domain, const Matrix& image, const std::vector<IndexPair>& pairs);

/// Summary of ratios (linear-interpolation percentiles).
IsometryEstimate summarize_ratios(const std::vector<double>& ratios, const std::vector<IndexPair>& pairs,
                                  std::uint64_t seed);

IsometryEstimate empirical_isometry(const Matrix& domain, const Matrix& image, std::size_t n_pairs,
                                    std::uint64_t seed);

/// Percentile p in [0, 100] of sorted values, linear interpolation.
double percentile_sorted(const std::vector<double>& sorted, double p);

/// Analytical constants of the linear stable-embedding bound.
struct TheoremBound {
  double scale = 0.0;  ///< C
  double delta0 = 0.0;
  double delta1 = 0.0;  ///< at the requested m
  double nu = 0.0;
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  double A1 = 0.0;
  double A2 = 0.0;
  std::size_t m = 0;
  std::size_t d = 0;
  double T_s = 1.0;
  bool hypothesis_a = false;  ///< m > (2d-1) A2 kappa2^2 / (A1 kappa1^2) * nu
  bool rescaled = false;      ///< h did not have squared norm 2d/m

  double delta() const { return delta0 + delta1; }
  double lower() const { return scale * (1.0 - delta()); }
  double upper() const { return scale * (1.0 + delta()); }
};

/// Evaluates the bound for measurement vector h, dimension m and sample
/// period T_s. Throws HypothesisViolation when some mode is invisible to h
/// and ResonanceError when a sine term in nu vanishes.
TheoremBound analytic_linear_bounds(const LinearSystemAd& sys, const Vector& h, std::size_t m, double T_s);

/// max over modes and mode pairs of the reciprocal sine terms.
double resonance_factor(const std::vector<double>& thetas, double T_s);

struct PhiMatrix {
  Eigen::MatrixXd matrix;  ///< m x n, row k = h^T e^{-k A tau}
  Eigen::VectorXd singular_values;
  std::size_t rank = 0;
};

inline constexpr double kRankTolerance = 1e-10;

PhiMatrix phi_matrix(const LinearSystemAd& sys, const Vector& h_full, std::size_t m, double tau);

struct SweepRecord {
  std::size_t c_index = 0;
  double coupling = 0.0;
  MapKind map = MapKind::PhiGammaX;
  IsometryEstimate estimate;
};

struct SweepCell {
  std::size_t c_index = 0;
  double coupling = 0.0;
  std::vector<SweepRecord> records;
  std::optional<std::string> error;
};

struct SweepSpec {
  SimulationSpec simulation;
  EmbeddingSpec embedding;
  std::vector<double> coupling_grid;
  std::vector<MapKind> maps;
  std::size_t n_pairs = 5000;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Per-cell sub-seed of the isometry estimate for one map.
std::uint64_t isometry_seed(std::uint64_t master, std::size_t c_index, MapKind map);

/// Simulate, embed and profile every requested map at each coupling.
/// Cells that fail record their error and the sweep continues.
std::vector<SweepCell> distance_ratio_sweep(const SweepSpec& spec);

}  // namespace closeness
