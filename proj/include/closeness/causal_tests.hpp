#pragma once

#include "closeness/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace closeness {

enum class Provenance { Empirical, Analytic };
std::string to_string(Provenance p);

/// u_{gamma_x} / l_{phi_y}: the largest expansion of Psi_{y->x} compatible with x -> y.
struct CertificateThreshold {
  double u_gamma_x = 0.0;
  double l_phi_y = 0.0;
  double threshold = 0.0;
  Provenance provenance = Provenance::Empirical;

  /// Throws ThresholdUndefined when l_phi_y <= 0 and ValidationError when
  /// u_gamma_x is not positive.
  static CertificateThreshold make(double u_gamma_x, double l_phi_y, Provenance provenance);
};

struct Witness {
  std::size_t i = 0;
  std::size_t j = 0;
  double ratio = 0.0;
};

struct CertificateSearch {
  std::optional<Witness> witness;  ///< the maximal-ratio pair, when it beats the threshold
  Witness max_pair;                ///< maximal-ratio pair regardless of the threshold
  std::size_t pairs_examined = 0;
  bool exhaustive = false;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kExhaustiveLimit = 2000;

/// Largest ratio of the map with the given domain/image point sets over the
/// sampled pairs, plus every pair when there are at most kExhaustiveLimit
/// points. Pairs with domain distance below the coincidence cutoff are skipped.
Witness max_ratio_pair(const Matrix& domain, const Matrix& image, std::size_t n_pairs, std::uint64_t seed,
                       std::size_t* examined = nullptr, bool* exhaustive = nullptr);

/// Searches for a pair whose Psi_{y->x} ratio |dN_x|^2 / |dN_y|^2 exceeds the threshold.
CertificateSearch expansivity_certificate(const Matrix& n_y, const Matrix& n_x, const CertificateThreshold& thr,
                                          std::size_t n_pairs, std::uint64_t seed);

struct Assumption1Result {
  std::optional<Witness> witness;  ///< pair with |dx|^2 > (bound - 1) |dy|^2
  double bound = 1.0;
  double max_ratio = 0.0;  ///< largest 1 + |dx|^2/|dy|^2 seen (inf when dy = 0)
  std::size_t pairs_examined = 0;
};

/// Searches contemporaneous pairs of the x and y attractor samples for an
/// inclusion-map expansion above `bound` (bound >= 1).
Assumption1Result check_assumption1(const Matrix& x, const Matrix& y, double bound, std::size_t n_pairs,
                                    std::uint64_t seed);

/// u_gx u_gy / (l_px l_py).
double assumption1_bound(double u_gamma_x, double u_gamma_y, double l_phi_x, double l_phi_y);

enum class Direction { XtoY, YtoX };
enum class Outcome { RuledOut, ConsistentWithCoupling, Established, Inconclusive };
std::string to_string(Direction d);
std::string to_string(Outcome o);

struct CausalVerdict {
  Direction direction = Direction::XtoY;
  Outcome outcome = Outcome::Inconclusive;
  std::optional<Witness> witness;
  std::optional<CertificateThreshold> threshold;
  bool assumption1_checked = false;  ///< an inclusion-map expansion witness was found
  bool assumption2_declared = false;
  std::uint64_t seed = 0;
  std::string note;
};

/// Decision rule. A certificate always rules the link out; otherwise the
/// link is established only with both assumptions in force.
CausalVerdict iff_test(const CertificateSearch& search, const CertificateThreshold& thr, bool assumption2_declared,
                       const std::optional<Assumption1Result>& assumption1);

/// Full test from raw point sets and constants; degenerate inputs (undefined
/// threshold, coincident points) produce an Inconclusive verdict.
CausalVerdict run_iff_test(const Matrix& n_y, const Matrix& n_x, double u_gamma_x, double l_phi_y,
                           Provenance provenance, std::size_t n_pairs, std::uint64_t seed,
                           bool assumption2_declared, const std::optional<Assumption1Result>& assumption1);

nlohmann::json to_json(const CausalVerdict& v);

}  // namespace closeness
