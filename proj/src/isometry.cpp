#include "closeness/isometry.hpp"

#include "closeness/error.hpp"
#include "closeness/parallel.hpp"
#include "closeness/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

namespace closeness {

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::PhiGammaX: return "PhiGammaX";
    case MapKind::PhiGammaY: return "PhiGammaY";
    case MapKind::PhiPhiX: return "PhiPhiX";
    case MapKind::PhiPhiY: return "PhiPhiY";
    case MapKind::PiX: return "PiX";
    case MapKind::PiY: return "PiY";
    case MapKind::IotaX: return "IotaX";
    case MapKind::IotaY: return "IotaY";
    case MapKind::PsiYtoX: return "PsiYtoX";
    case MapKind::PsiXtoY: return "PsiXtoY";
  }
  return "?";
}

MapKind parse_map_kind(const std::string& name) {
  for (auto k : kAllMaps) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError(fmt::format("unknown map '{}'", name));
}

MapPoints map_points(const AlignedPointSets& s, MapKind kind) {
  switch (kind) {
    case MapKind::PhiGammaX: return {*s.x, *s.gx};
    case MapKind::PhiGammaY: return {*s.y, *s.gy};
    case MapKind::PhiPhiX: return {*s.joint, *s.px};
    case MapKind::PhiPhiY: return {*s.joint, *s.py};
    case MapKind::PiX: return {*s.joint, *s.x};
    case MapKind::PiY: return {*s.joint, *s.y};
    case MapKind::IotaX: return {*s.y, *s.joint};
    case MapKind::IotaY: return {*s.x, *s.joint};
    case MapKind::PsiYtoX: return {*s.py, *s.gx};
    case MapKind::PsiXtoY: return {*s.gx, *s.py};
  }
  throw ValidationError("unknown map kind");
}

AlignedPointSets build_point_sets(const Trajectory& traj, const EmbeddingSpec& spec,
                                  const std::optional<MeasurementSet>& linear) {
  traj.validate();
  Measurement mgx, mgy, mpx, mpy;
  if (linear) {
    mgx = Measurement::linear(Domain::XOnly, linear->gamma_x);
    mgy = Measurement::linear(Domain::YOnly, linear->gamma_y);
    mpx = Measurement::linear(Domain::Joint, linear->phi_x);
    mpy = Measurement::linear(Domain::Joint, linear->phi_y);
  } else {
    mgx = Measurement::projection(Domain::XOnly, spec.x_coordinate);
    mgy = Measurement::projection(Domain::YOnly, spec.y_coordinate);
  }
  auto embed = [&](const Measurement& meas) { return delay_embed(measure(traj, meas), spec.m, spec.tau, meas); };

  const DelayEmbedding gx = embed(mgx);
  const DelayEmbedding gy = embed(mgy);
  const std::size_t offset = gx.base_offset;
  const std::size_t len = gx.length();

  AlignedPointSets sets;
  sets.first_time = offset;
  sets.joint = std::make_shared<const Matrix>(slice_rows(traj.samples, offset, len));
  sets.x = std::make_shared<const Matrix>(sets.joint->leftCols(static_cast<Eigen::Index>(traj.n_x)));
  sets.y = std::make_shared<const Matrix>(sets.joint->rightCols(static_cast<Eigen::Index>(traj.n_y)));
  sets.gx = std::make_shared<const Matrix>(gx.points);
  sets.gy = std::make_shared<const Matrix>(gy.points);
  if (linear) {
    sets.px = std::make_shared<const Matrix>(embed(mpx).points);
    sets.py = std::make_shared<const Matrix>(embed(mpy).points);
  } else {
    sets.px = sets.gx;
    sets.py = sets.gy;
  }
  return sets;
}

std::vector<IndexPair> sample_pairs(const std::vector<const Matrix*>& domains, std::size_t n_pairs,
                                    std::uint64_t seed) {
  if (domains.empty()) throw ValidationError("no point set to sample from");
  const auto n = static_cast<std::size_t>(domains.front()->rows());
  for (const Matrix* d : domains) {
    if (static_cast<std::size_t>(d->rows()) != n) throw ValidationError("point sets differ in size");
  }
  if (n < 2) throw ValidationError("need at least two points to form pairs");
  if (n_pairs == 0) throw ValidationError("n_pairs must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<IndexPair> pairs;
  pairs.reserve(n_pairs);
  const std::size_t max_attempts = 100 * n_pairs + 10'000;
  std::size_t attempts = 0;
  while (pairs.size() < n_pairs) {
    if (++attempts > max_attempts) {
      throw DegenerateInputError("point set is (almost) entirely coincident; no separable pairs found");
    }
    const std::size_t i = pick(rng);
    const std::size_t j = pick(rng);
    if (i == j) continue;
    bool ok = true;
    for (const Matrix* d : domains) {
      if (squared_distance(*d, i, j) < kCoincidenceCutoff) {
        ok = false;
        break;
      }
    }
    if (ok) pairs.emplace_back(i, j);
  }
  return pairs;
}

std::vector<double> pair_ratios(const Matrix& domain, const Matrix& image, const std::vector<IndexPair>& pairs) {
  if (domain.rows() != image.rows()) throw ValidationError("domain and image differ in cardinality");
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) out.push_back(squared_distance(image, i, j) / squared_distance(domain, i, j));
  return out;
}

double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ValidationError("percentile of an empty set");
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  // Clamp so the interpolated value never leaves [sorted[lo], sorted[hi]].
  return std::clamp(sorted[lo] + frac * (sorted[hi] - sorted[lo]), sorted[lo], sorted[hi]);
}

IsometryEstimate summarize_ratios(const std::vector<double>& ratios, const std::vector<IndexPair>& pairs,
                                  std::uint64_t seed) {
  if (ratios.empty() || ratios.size() != pairs.size()) throw ValidationError("ratios and pairs mismatch");
  IsometryEstimate est;
  est.n_pairs = ratios.size();
  est.seed = seed;
  const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
  est.argmin = pairs[static_cast<std::size_t>(mn - ratios.begin())];
  est.argmax = pairs[static_cast<std::size_t>(mx - ratios.begin())];
  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  est.lower = sorted.front();
  est.upper = sorted.back();
  est.p5 = percentile_sorted(sorted, 5.0);
  est.p50 = percentile_sorted(sorted, 50.0);
  est.p95 = percentile_sorted(sorted, 95.0);
  return est;
}

IsometryEstimate empirical_isometry(const Matrix& domain, const Matrix& image, std::size_t n_pairs,
                                    std::uint64_t seed) {
  const auto pairs = sample_pairs({&domain}, n_pairs, seed);
  return summarize_ratios(pair_ratios(domain, image, pairs), pairs, seed);
}

double resonance_factor(const std::vector<double>& thetas, double T_s) {
  double nu = 0.0;
  auto take = [&](double s, const char* what) {
    if (std::abs(s) < 1e-14) throw ResonanceError(fmt::format("{} vanishes; resonance factor undefined", what));
    nu = std::max(nu, 1.0 / std::abs(s));
  };
  for (double t : thetas) take(std::sin(t * T_s), "sin(theta T_s)");
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      if (i == j) continue;
      take(std::sin((thetas[i] - thetas[j]) * T_s / 2.0), "sin((theta_i - theta_j) T_s / 2)");
      take(std::sin((thetas[i] + thetas[j]) * T_s / 2.0), "sin((theta_i + theta_j) T_s / 2)");
    }
  }
  return nu;
}

TheoremBound analytic_linear_bounds(const LinearSystemAd& sys, const Vector& h_in, std::size_t m, double T_s) {
  if (m == 0) throw ValidationError("m must be positive");
  if (!(T_s > 0.0)) throw ValidationError("T_s must be positive");
  if (static_cast<std::size_t>(h_in.size()) != sys.n()) {
    throw ValidationError(fmt::format("h has dimension {} but the system has {}", h_in.size(), sys.n()));
  }
  const std::size_t d = sys.d();
  if (d == 0) throw HypothesisViolation("system has no oscillatory modes");

  TheoremBound b;
  b.m = m;
  b.d = d;
  b.T_s = T_s;
  Vector h = h_in;
  const double target = 2.0 * static_cast<double>(d) / static_cast<double>(m);
  const double hn2 = h.squaredNorm();
  if (hn2 == 0.0) throw HypothesisViolation("measurement vector is zero");
  if (std::abs(hn2 - target) > 1e-9 * target) {
    h *= std::sqrt(target / hn2);
    b.rescaled = true;
    std::fprintf(stderr, "warning: measurement vector rescaled to squared norm 2d/m = %.6g\n", target);
  }

  const Eigen::MatrixXcd V = sys.oscillatory_modes();
  const Eigen::MatrixXcd gram = V.adjoint() * V;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
  b.A1 = es.eigenvalues().minCoeff();
  b.A2 = es.eigenvalues().maxCoeff();

  const Eigen::VectorXcd hc = h.cast<std::complex<double>>();
  const double hnorm = h.norm();
  b.kappa1 = std::numeric_limits<double>::infinity();
  b.kappa2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double a = std::abs(V.col(static_cast<Eigen::Index>(2 * i)).dot(hc)) / hnorm;
    if (a < 1e-14) throw HypothesisViolation(fmt::format("mode {} is orthogonal to the measurement", i + 1));
    b.kappa1 = std::min(b.kappa1, a);
    b.kappa2 = std::max(b.kappa2, a);
  }
  b.nu = resonance_factor(sys.thetas(), T_s);

  const double dd = static_cast<double>(d);
  const double hi = b.A2 * b.kappa2 * b.kappa2;
  const double lo = b.A1 * b.kappa1 * b.kappa1;
  b.scale = dd * (b.kappa1 * b.kappa1 / b.A2 + b.kappa2 * b.kappa2 / b.A1);
  b.delta0 = (hi - lo) / (hi + lo);
  b.delta1 = (2.0 * dd - 1.0) * b.nu / static_cast<double>(m) * (2.0 * hi / (hi + lo));
  b.hypothesis_a = static_cast<double>(m) > (2.0 * dd - 1.0) * hi / lo * b.nu;
  return b;
}

PhiMatrix phi_matrix(const LinearSystemAd& sys, const Vector& h_full, std::size_t m, double tau) {
  if (static_cast<std::size_t>(h_full.size()) != sys.n()) throw ValidationError("h_full dimension mismatch");
  if (m == 0) throw ValidationError("m must be positive");
  PhiMatrix out;
  out.matrix.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(sys.n()));
  for (std::size_t k = 0; k < m; ++k) {
    const Eigen::MatrixXd P = sys.propagator(-static_cast<double>(k) * tau);
    out.matrix.row(static_cast<Eigen::Index>(k)) = (P.transpose() * h_full).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.matrix);
  out.singular_values = svd.singularValues();
  const double smax = out.singular_values.size() ? out.singular_values[0] : 0.0;
  for (Eigen::Index i = 0; i < out.singular_values.size(); ++i) {
    if (out.singular_values[i] > smax * kRankTolerance) ++out.rank;
  }
  return out;
}

std::uint64_t isometry_seed(std::uint64_t master, std::size_t c_index, MapKind map) {
  return derive_seed(master, {0x150ULL, c_index, static_cast<std::uint64_t>(map)});
}

std::vector<SweepCell> distance_ratio_sweep(const SweepSpec& spec) {
  if (spec.coupling_grid.empty()) throw ValidationError("coupling grid is empty");
  if (spec.maps.empty()) throw ValidationError("no maps requested");
  std::vector<SweepCell> cells(spec.coupling_grid.size());
  parallel_for(cells.size(), spec.jobs, [&](std::size_t ci) {
    SweepCell& cell = cells[ci];
    cell.c_index = ci;
    cell.coupling = spec.coupling_grid[ci];
    try {
      const auto sim = simulate(spec.simulation, cell.coupling, spec.embedding.m);
      const auto sets = build_point_sets(sim.trajectory, spec.embedding, sim.linear_measurements);
      for (MapKind map : spec.maps) {
        const auto pts = map_points(sets, map);
        const auto seed = isometry_seed(spec.seed, ci, map);
        cell.records.push_back({ci, cell.coupling, map, empirical_isometry(pts.domain, pts.image, spec.n_pairs, seed)});
      }
    } catch (const Error& e) {
      cell.records.clear();
      cell.error = e.what();
    }
  });
  return cells;
}

}  // namespace closeness
