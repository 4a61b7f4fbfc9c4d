#pragma once

#include "closeness/embedding.hpp"
#include "closeness/types.hpp"

#include <cstdint>
#include <vector>

namespace closeness {

// ---- Wilcoxon signed-rank -------------------------------------------------

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;  ///< nonzero differences
  double p_one_sided = 1.0;  ///< P(W+ >= observed) under the symmetric null
  bool exact = false;
};

enum class WilcoxonMethod { Auto, Exact, Normal };

inline constexpr std::size_t kWilcoxonExactLimit = 20;
inline constexpr std::size_t kWilcoxonMinSamples = 5;

/// One-sided test of a positive location shift. Zeros are dropped and tied
/// magnitudes share their average rank. Auto uses the exact null for
/// n <= 20 and a tie- and continuity-corrected normal law above.
/// Throws DegenerateInputError when every difference is zero and
/// ValidationError with fewer than five nonzero differences.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

/// Exact P(W+ >= observed) for the given (possibly tied, half-integer) ranks.
double wilcoxon_exact_upper_tail(const std::vector<double>& ranks, double observed);
/// Normal approximation of the same tail.
double wilcoxon_normal_upper_tail(const std::vector<double>& ranks, double observed);

/// Average ranks (1-based) of |values|.
std::vector<double> average_ranks(const std::vector<double>& values);

// ---- Neighbour-distance statistics ---------------------------------------

/// Per-point distance summaries of one embedding given neighbour indices
/// taken from the other.
struct NeighborStats {
  Vector D_mean;    ///< mean squared distance to every other point
  Vector D_knn;     ///< mean squared distance to the k nearest
  Vector D_mutual;  ///< mean squared distance to the k mutual neighbours
  std::size_t k = 0;
  std::size_t T_prime = 0;
};

struct MResult {
  double M_xy = 0.0;  ///< M(X|Y)
  double M_yx = 0.0;  ///< M(Y|X)
  double delta_M = 0.0;
  double M_s = 0.0;
  NeighborStats stats_x;  ///< on N_x with neighbours from N_y
  NeighborStats stats_y;  ///< on N_y with neighbours from N_x
};

/// k nearest admissible neighbours of every row (nearest first).
std::vector<std::vector<std::size_t>> all_knn(const Matrix& points, const NeighborQuery& q, std::size_t jobs = 1);

/// Andrzejak M measures from contemporaneous (aligned) embeddings.
MResult andrzejak_M(const Matrix& nx, const Matrix& ny, const NeighborQuery& q, std::size_t jobs = 1);
MResult andrzejak_M(const DelayEmbedding& nx, const DelayEmbedding& ny, const NeighborQuery& q,
                    std::size_t jobs = 1);

struct LResult {
  double L_xy = 0.0;  ///< L(X|Y)
  double L_yx = 0.0;
  double delta_L = 0.0;
  WilcoxonResult wilcoxon;  ///< on l_i(X|Y) - l_i(Y|X); n = 0 and p = 1 when all differences vanish
  double G_mean = 0.0;      ///< T'/2
  double G_knn = 0.0;       ///< (k+1)/2
  Vector G_mutual_x;        ///< G_i^k(X|Y)
  Vector G_mutual_y;        ///< G_i^k(Y|X)
};

/// Chicharro-Andrzejak rank measures. Ranks of distances from point i are
/// taken over the points admissible under the Theiler window, ties averaged.
LResult chicharro_L(const Matrix& nx, const Matrix& ny, const NeighborQuery& q, std::size_t jobs = 1);
LResult chicharro_L(const DelayEmbedding& nx, const DelayEmbedding& ny, const NeighborQuery& q,
                    std::size_t jobs = 1);

// ---- Convergent cross mapping --------------------------------------------

/// Normalised exponential weights exp(-d_j/d_1) for distances sorted
/// ascending. A zero nearest distance is floored at kCcmDistanceFloor.
std::vector<double> simplex_weights(const std::vector<double>& distances);
inline constexpr double kCcmDistanceFloor = 1e-12;

double pearson(const Vector& a, const Vector& b);
double rmse(const Vector& a, const Vector& b);

/// Pearson correlation (higher is better) or root-mean-square error (lower is better).
enum class SkillMetric { Pearson, Rmse };

struct CcmSpec {
  std::vector<std::size_t> library_sizes;
  std::size_t replicates = 8;
  std::size_t theiler_window = 0;
  std::uint64_t seed = 0;
  SkillMetric metric = SkillMetric::Pearson;
};

struct CcmResult {
  std::vector<std::size_t> library_sizes;
  std::vector<double> skill;     ///< mean skill per library size, averaged over target columns
  std::vector<double> skill_sd;  ///< spread across replicates
  std::size_t n_neighbors = 0;   ///< m + 1
  double max_weight_sum_error = 0.0;
  bool nearest_weight_maximal = true;
};

/// Cross-maps `target` (rows aligned with `source`) from neighbours on the
/// source embedding, for contiguous random-offset libraries of each size.
CcmResult ccm(const Matrix& source, const Matrix& target, const CcmSpec& spec, std::size_t jobs = 1);

// ---- Continuity statistic ------------------------------------------------

struct ContinuitySpec {
  std::vector<double> epsilons{0.05, 0.1, 0.2, 0.3, 0.5};  ///< in units of the image spread
  std::size_t n_probes = 400;
  std::size_t n_max = 12;  ///< domain neighbours examined per probe
  std::size_t theiler_window = 0;
  std::uint64_t seed = 0;
};

struct ContinuityCurve {
  std::vector<double> theta;
  std::size_t probes_used = 0;
  std::size_t probes_skipped = 0;
};

struct ContinuityStat {
  std::vector<double> epsilons;
  std::vector<double> theta;          ///< forward map domain -> image
  std::vector<double> theta_inverse;  ///< image -> domain
  std::vector<double> theta_product;
  std::size_t probes_used = 0;
  std::size_t probes_skipped = 0;
};

/// One direction: for each probe, n = the longest run of nearest domain
/// neighbours whose images stay inside the epsilon ball around the probe's
/// image; the chance of that run under the null is p^n with p the ball's
/// empirical mass. Theta = 1 - mean chance.
ContinuityCurve continuity_curve(const Matrix& domain, const Matrix& image, const ContinuitySpec& spec);

ContinuityStat pecora_continuity(const Matrix& domain, const Matrix& image, const ContinuitySpec& spec);

/// sqrt of the summed per-column variance.
double point_spread(const Matrix& points);

}  // namespace closeness
