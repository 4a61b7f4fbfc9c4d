#include "closeness/causal_tests.hpp"

#include "closeness/error.hpp"
#include "closeness/isometry.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <random>

namespace closeness {

std::string to_string(Provenance p) { return p == Provenance::Empirical ? "Empirical" : "Analytic"; }

std::string to_string(Direction d) { return d == Direction::XtoY ? "XtoY" : "YtoX"; }

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::RuledOut: return "RuledOut";
    case Outcome::ConsistentWithCoupling: return "ConsistentWithCoupling";
    case Outcome::Established: return "Established";
    case Outcome::Inconclusive: return "Inconclusive";
  }
  return "?";
}

CertificateThreshold CertificateThreshold::make(double u_gamma_x, double l_phi_y, Provenance provenance) {
  if (!(l_phi_y > 0.0)) {
    throw ThresholdUndefined(fmt::format("lower constant of the y embedding is {}; the map is not injective", l_phi_y));
  }
  if (!(u_gamma_x > 0.0)) throw ValidationError("upper constant of the x embedding must be positive");
  return {u_gamma_x, l_phi_y, u_gamma_x / l_phi_y, provenance};
}

Witness max_ratio_pair(const Matrix& domain, const Matrix& image, std::size_t n_pairs, std::uint64_t seed,
                       std::size_t* examined, bool* exhaustive) {
  if (domain.rows() != image.rows()) throw ValidationError("domain and image differ in cardinality");
  const auto n = static_cast<std::size_t>(domain.rows());
  Witness best{0, 0, -1.0};
  std::size_t count = 0;
  auto consider = [&](std::size_t i, std::size_t j) {
    const double dd = squared_distance(domain, i, j);
    if (dd < kCoincidenceCutoff) return;
    ++count;
    const double r = squared_distance(image, i, j) / dd;
    if (r > best.ratio) best = {i, j, r};
  };
  if (n_pairs > 0) {
    for (const auto& [i, j] : sample_pairs({&domain}, n_pairs, seed)) consider(i, j);
  }
  const bool full = n <= kExhaustiveLimit;
  if (full) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) consider(i, j);
    }
  }
  if (count == 0) throw DegenerateInputError("no pair with distinct domain points");
  if (examined) *examined = count;
  if (exhaustive) *exhaustive = full;
  return best;
}

CertificateSearch expansivity_certificate(const Matrix& n_y, const Matrix& n_x, const CertificateThreshold& thr,
                                          std::size_t n_pairs, std::uint64_t seed) {
  if (!(thr.l_phi_y > 0.0)) throw ThresholdUndefined("certificate threshold needs a positive lower constant");
  CertificateSearch out;
  out.seed = seed;
  out.max_pair = max_ratio_pair(n_y, n_x, n_pairs, seed, &out.pairs_examined, &out.exhaustive);
  if (out.max_pair.ratio > thr.threshold) out.witness = out.max_pair;
  return out;
}

double assumption1_bound(double u_gamma_x, double u_gamma_y, double l_phi_x, double l_phi_y) {
  if (!(l_phi_x > 0.0) || !(l_phi_y > 0.0)) throw ThresholdUndefined("lower constants must be positive");
  return u_gamma_x * u_gamma_y / (l_phi_x * l_phi_y);
}

Assumption1Result check_assumption1(const Matrix& x, const Matrix& y, double bound, std::size_t n_pairs,
                                    std::uint64_t seed) {
  if (!(bound >= 1.0)) throw ValidationError("assumption bound must be at least 1");
  if (x.rows() != y.rows()) throw ValidationError("x and y samples differ in length");
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw ValidationError("need at least two samples");

  Assumption1Result out;
  out.bound = bound;
  const double inf = std::numeric_limits<double>::infinity();
  auto consider = [&](std::size_t i, std::size_t j) {
    ++out.pairs_examined;
    const double dx = squared_distance(x, i, j);
    const double dy = squared_distance(y, i, j);
    const double ratio = dy > 0.0 ? 1.0 + dx / dy : (dx > 0.0 ? inf : 1.0);
    const bool exceeds = dx > (bound - 1.0) * dy;
    if (ratio > out.max_ratio) out.max_ratio = ratio;
    if (exceeds && (!out.witness || ratio > out.witness->ratio)) out.witness = Witness{i, j, ratio};
  };
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t p = 0; p < n_pairs;) {
    const std::size_t i = pick(rng), j = pick(rng);
    if (i == j) continue;
    consider(i, j);
    ++p;
  }
  if (n <= kExhaustiveLimit) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) consider(i, j);
    }
  }
  return out;
}

CausalVerdict iff_test(const CertificateSearch& search, const CertificateThreshold& thr, bool assumption2_declared,
                       const std::optional<Assumption1Result>& assumption1) {
  CausalVerdict v;
  v.direction = Direction::XtoY;
  v.threshold = thr;
  v.seed = search.seed;
  v.assumption2_declared = assumption2_declared;
  v.assumption1_checked = assumption1 && assumption1->witness.has_value();
  if (search.witness) {
    v.outcome = Outcome::RuledOut;
    v.witness = search.witness;
    v.note = "expansion above the threshold certifies that x does not drive y";
  } else if (v.assumption1_checked && v.assumption2_declared) {
    v.outcome = Outcome::Established;
    v.note = "no certificate; both assumptions in force";
  } else {
    v.outcome = Outcome::ConsistentWithCoupling;
    v.note = "no certificate; coupling is necessary but not established";
  }
  return v;
}

CausalVerdict run_iff_test(const Matrix& n_y, const Matrix& n_x, double u_gamma_x, double l_phi_y,
                           Provenance provenance, std::size_t n_pairs, std::uint64_t seed,
                           bool assumption2_declared, const std::optional<Assumption1Result>& assumption1) {
  try {
    const auto thr = CertificateThreshold::make(u_gamma_x, l_phi_y, provenance);
    return iff_test(expansivity_certificate(n_y, n_x, thr, n_pairs, seed), thr, assumption2_declared, assumption1);
  } catch (const ThresholdUndefined& e) {
    CausalVerdict v;
    v.seed = seed;
    v.assumption2_declared = assumption2_declared;
    v.note = e.what();
    return v;
  } catch (const DegenerateInputError& e) {
    CausalVerdict v;
    v.seed = seed;
    v.assumption2_declared = assumption2_declared;
    v.note = e.what();
    return v;
  }
}

nlohmann::json to_json(const CausalVerdict& v) {
  nlohmann::json j;
  j["direction"] = to_string(v.direction);
  j["outcome"] = to_string(v.outcome);
  if (v.threshold) {
    j["threshold"] = {{"value", v.threshold->threshold},
                      {"u_gamma_x", v.threshold->u_gamma_x},
                      {"l_phi_y", v.threshold->l_phi_y},
                      {"provenance", to_string(v.threshold->provenance)}};
  } else {
    j["threshold"] = nullptr;
  }
  if (v.witness) {
    j["witness"] = {{"i", v.witness->i}, {"j", v.witness->j}, {"ratio", v.witness->ratio}};
  } else {
    j["witness"] = nullptr;
  }
  j["seeds"] = {{"search", v.seed}};
  j["assumptions"] = {{"assumption1_checked", v.assumption1_checked},
                      {"assumption2_declared", v.assumption2_declared}};
  j["note"] = v.note;
  return j;
}

}  // namespace closeness
