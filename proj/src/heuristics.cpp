#include "closeness/heuristics.hpp"

#include "closeness/error.hpp"
#include "closeness/parallel.hpp"
#include "closeness/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace closeness {

// ---- Wilcoxon ---------------------------------------------------------------

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(values[a]) < std::abs(values[b]); });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(values[order[j + 1]]) == std::abs(values[order[i]])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double wilcoxon_exact_upper_tail(const std::vector<double>& ranks, double observed) {
  // Average ranks are multiples of 1/2, so doubled ranks are integers.
  std::vector<long> doubled;
  long total = 0;
  for (double r : ranks) {
    doubled.push_back(std::lround(2.0 * r));
    total += doubled.back();
  }
  std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
  count[0] = 1.0;
  long reach = 0;
  for (long r : doubled) {
    for (long s = reach; s >= 0; --s) {
      if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
    }
    reach += r;
  }
  const long threshold = std::lround(std::ceil(2.0 * observed - 1e-9));
  double tail = 0.0;
  for (long s = std::max(0L, threshold); s <= total; ++s) tail += count[static_cast<std::size_t>(s)];
  return tail / std::ldexp(1.0, static_cast<int>(ranks.size()));
}

double wilcoxon_normal_upper_tail(const std::vector<double>& ranks, double observed) {
  const double n = static_cast<double>(ranks.size());
  const double mean = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  std::vector<double> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  if (!(var > 0.0)) return observed >= mean ? 1.0 : 0.0;
  const double z = (observed - mean - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences, WilcoxonMethod method) {
  std::vector<double> nz;
  for (double d : differences) {
    if (!std::isfinite(d)) throw ValidationError("non-finite difference");
    if (d != 0.0) nz.push_back(d);
  }
  if (nz.empty()) throw DegenerateInputError("all differences are zero");
  if (nz.size() < kWilcoxonMinSamples) {
    throw ValidationError(fmt::format("signed-rank test needs at least {} nonzero differences, got {}",
                                      kWilcoxonMinSamples, nz.size()));
  }
  const auto ranks = average_ranks(nz);
  WilcoxonResult out;
  out.n = nz.size();
  for (std::size_t i = 0; i < nz.size(); ++i) (nz[i] > 0.0 ? out.w_plus : out.w_minus) += ranks[i];
  out.exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && out.n <= kWilcoxonExactLimit);
  if (out.exact && out.n > 60) throw ValidationError("exact signed-rank null limited to n <= 60");
  out.p_one_sided =
      out.exact ? wilcoxon_exact_upper_tail(ranks, out.w_plus) : wilcoxon_normal_upper_tail(ranks, out.w_plus);
  return out;
}

// ---- Neighbour statistics -----------------------------------------------

namespace {

void require_aligned(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ValidationError(fmt::format("embeddings are not aligned ({} vs {} rows)", a.rows(), b.rows()));
  }
}

struct AlignedPair {
  Matrix x, y;
};

AlignedPair aligned(const DelayEmbedding& nx, const DelayEmbedding& ny) {
  const auto r = align(nx, ny);
  return {slice_rows(nx.points, r.offset_a, r.length), slice_rows(ny.points, r.offset_b, r.length)};
}

/// Mean squared distance from each point to all others, via the centred
/// closed form sum_j |a_i - a_j|^2 = T|a_i|^2 - 2 a_i.S + sum_j |a_j|^2.
Vector mean_square_distance(const Matrix& points) {
  const auto T = static_cast<double>(points.rows());
  const Eigen::RowVectorXd mean = points.colwise().mean();
  Matrix c = points.rowwise() - mean;
  const Vector sq = c.rowwise().squaredNorm();
  const double total = sq.sum();
  const Eigen::RowVectorXd S = c.colwise().sum();
  Vector out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out[i] = std::max(0.0, (T * sq[i] - 2.0 * c.row(i).dot(S) + total) / (T - 1.0));
  }
  return out;
}

NeighborStats distance_stats(const Matrix& P, const std::vector<std::vector<std::size_t>>& own,
                             const std::vector<std::vector<std::size_t>>& other, std::size_t k) {
  NeighborStats s;
  s.k = k;
  s.T_prime = static_cast<std::size_t>(P.rows());
  s.D_mean = mean_square_distance(P);
  s.D_knn.resize(P.rows());
  s.D_mutual.resize(P.rows());
  for (std::size_t i = 0; i < s.T_prime; ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      a += squared_distance(P, i, own[i][j]);
      b += squared_distance(P, i, other[i][j]);
    }
    s.D_knn[static_cast<Eigen::Index>(i)] = a / static_cast<double>(k);
    s.D_mutual[static_cast<Eigen::Index>(i)] = b / static_cast<double>(k);
  }
  return s;
}

double m_score(const NeighborStats& s) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.D_mean.size(); ++i) {
    const double den = s.D_mean[i] - s.D_knn[i];
    if (!(den > 0.0)) throw DegenerateInputError(fmt::format("zero spread around point {} (D_i = D_i^k)", i));
    acc += (s.D_mean[i] - s.D_mutual[i]) / den;
  }
  return std::max(acc / static_cast<double>(s.D_mean.size()), 0.0);
}

}  // namespace

std::vector<std::vector<std::size_t>> all_knn(const Matrix& points, const NeighborQuery& q, std::size_t jobs) {
  q.validate(static_cast<std::size_t>(points.rows()));
  NeighborIndex index(std::make_shared<const Matrix>(points));
  std::vector<std::vector<std::size_t>> out(index.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    const auto nb = index.knn(i, q.k, q.theiler_window);
    out[i].reserve(nb.size());
    for (const auto& n : nb) out[i].push_back(n.index);
  });
  return out;
}

MResult andrzejak_M(const Matrix& nx, const Matrix& ny, const NeighborQuery& q, std::size_t jobs) {
  require_aligned(nx, ny);
  const auto kx = all_knn(nx, q, jobs);
  const auto ky = all_knn(ny, q, jobs);
  MResult r;
  r.stats_x = distance_stats(nx, kx, ky, q.k);
  r.stats_y = distance_stats(ny, ky, kx, q.k);
  r.M_xy = m_score(r.stats_x);
  r.M_yx = m_score(r.stats_y);
  r.delta_M = r.M_xy - r.M_yx;
  r.M_s = 0.5 * (r.M_xy + r.M_yx);
  return r;
}

MResult andrzejak_M(const DelayEmbedding& nx, const DelayEmbedding& ny, const NeighborQuery& q, std::size_t jobs) {
  const auto p = aligned(nx, ny);
  return andrzejak_M(p.x, p.y, q, jobs);
}

namespace {

/// G_i^k for every point of P using the given neighbour lists.
Vector mutual_ranks(const Matrix& P, const std::vector<std::vector<std::size_t>>& nbrs, std::size_t k,
                    std::size_t window, std::size_t jobs) {
  const auto n = static_cast<std::size_t>(P.rows());
  Vector out(static_cast<Eigen::Index>(n));
  parallel_for(n, jobs, [&](std::size_t i) {
    std::vector<double> target(k);
    std::vector<std::size_t> less(k, 0), equal(k, 0);
    for (std::size_t t = 0; t < k; ++t) target[t] = squared_distance(P, i, nbrs[i][t]);
    for (std::size_t j = 0; j < n; ++j) {
      if (!admissible(i, j, window)) continue;
      const double d = squared_distance(P, i, j);
      for (std::size_t t = 0; t < k; ++t) {
        less[t] += d < target[t];
        equal[t] += d == target[t];
      }
    }
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      acc += static_cast<double>(less[t]) + 0.5 * static_cast<double>(equal[t] + 1);
    }
    out[static_cast<Eigen::Index>(i)] = acc / static_cast<double>(k);
  });
  return out;
}

}  // namespace

LResult chicharro_L(const Matrix& nx, const Matrix& ny, const NeighborQuery& q, std::size_t jobs) {
  require_aligned(nx, ny);
  const auto kx = all_knn(nx, q, jobs);
  const auto ky = all_knn(ny, q, jobs);
  const auto T = static_cast<double>(nx.rows());
  LResult r;
  r.G_mean = T / 2.0;
  r.G_knn = (static_cast<double>(q.k) + 1.0) / 2.0;
  const double den = r.G_mean - r.G_knn;
  if (!(den > 0.0)) throw DegenerateInputError("too few points for rank normalisation");
  r.G_mutual_x = mutual_ranks(nx, ky, q.k, q.theiler_window, jobs);
  r.G_mutual_y = mutual_ranks(ny, kx, q.k, q.theiler_window, jobs);
  const Vector lx = (r.G_mean - r.G_mutual_x.array()) / den;
  const Vector ly = (r.G_mean - r.G_mutual_y.array()) / den;
  r.L_xy = lx.mean();
  r.L_yx = ly.mean();
  r.delta_L = r.L_xy - r.L_yx;
  std::vector<double> diff(static_cast<std::size_t>(lx.size()));
  for (Eigen::Index i = 0; i < lx.size(); ++i) diff[static_cast<std::size_t>(i)] = lx[i] - ly[i];
  try {
    r.wilcoxon = wilcoxon_signed_rank(diff);
  } catch (const DegenerateInputError&) {
    // Identical per-point scores (e.g. exact synchronisation): no evidence of a shift.
    r.wilcoxon = WilcoxonResult{};
  }
  return r;
}

LResult chicharro_L(const DelayEmbedding& nx, const DelayEmbedding& ny, const NeighborQuery& q, std::size_t jobs) {
  const auto p = aligned(nx, ny);
  return chicharro_L(p.x, p.y, q, jobs);
}

// ---- CCM ------------------------------------------------------------------

std::vector<double> simplex_weights(const std::vector<double>& distances) {
  if (distances.empty()) throw ValidationError("no neighbours to weight");
  const double d1 = std::max(distances.front(), kCcmDistanceFloor);
  std::vector<double> w(distances.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = std::exp(-distances[j] / d1);
    sum += w[j];
  }
  for (double& v : w) v /= sum;
  return w;
}

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("pearson needs two equal-length series");
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double den = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (!(den > 0.0)) return 0.0;
  return ca.dot(cb) / den;
}

double rmse(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() == 0) throw ValidationError("rmse needs two equal-length series");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

CcmResult ccm(const Matrix& source, const Matrix& target, const CcmSpec& spec, std::size_t jobs) {
  require_aligned(source, target);
  if (spec.library_sizes.empty()) throw ValidationError("no library sizes");
  if (spec.replicates == 0) throw ValidationError("replicates must be positive");
  const auto n = static_cast<std::size_t>(source.rows());
  const std::size_t nn = static_cast<std::size_t>(source.cols()) + 1;
  for (std::size_t L : spec.library_sizes) {
    if (L > n) throw ValidationError(fmt::format("library size {} exceeds {} points", L, n));
    NeighborQuery{nn, spec.theiler_window}.validate(L);
  }

  CcmResult out;
  out.library_sizes = spec.library_sizes;
  out.n_neighbors = nn;
  const std::size_t R = spec.replicates;
  const std::size_t tasks = spec.library_sizes.size() * R;
  std::vector<double> skills(tasks), weight_err(tasks, 0.0);
  std::vector<char> w1_max(tasks, 1);

  parallel_for(tasks, jobs, [&](std::size_t task) {
    const std::size_t li = task / R, rep = task % R;
    const std::size_t L = spec.library_sizes[li];
    std::mt19937_64 rng(derive_seed(spec.seed, {li, rep}));
    std::uniform_int_distribution<std::size_t> pick(0, n - L);
    const std::size_t start = pick(rng);
    auto lib = std::make_shared<const Matrix>(slice_rows(source, start, L));
    NeighborIndex index(lib);
    Matrix predicted(static_cast<Eigen::Index>(L), target.cols());
    std::vector<double> dist(nn);
    for (std::size_t i = 0; i < L; ++i) {
      const auto nb = index.knn(i, nn, spec.theiler_window);
      for (std::size_t j = 0; j < nn; ++j) dist[j] = std::sqrt(nb[j].distance2);
      const auto w = simplex_weights(dist);
      double sum = 0.0;
      for (std::size_t j = 0; j < nn; ++j) {
        sum += w[j];
        if (w[j] > w[0]) w1_max[task] = 0;
      }
      weight_err[task] = std::max(weight_err[task], std::abs(sum - 1.0));
      Eigen::RowVectorXd est = Eigen::RowVectorXd::Zero(target.cols());
      for (std::size_t j = 0; j < nn; ++j) est += w[j] * target.row(static_cast<Eigen::Index>(start + nb[j].index));
      predicted.row(static_cast<Eigen::Index>(i)) = est;
    }
    const Matrix actual = slice_rows(target, start, L);
    double acc = 0.0;
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
      acc += spec.metric == SkillMetric::Pearson ? pearson(predicted.col(c), actual.col(c))
                                                 : rmse(predicted.col(c), actual.col(c));
    }
    skills[task] = acc / static_cast<double>(target.cols());
  });

  for (std::size_t li = 0; li < spec.library_sizes.size(); ++li) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < R; ++r) mean += skills[li * R + r];
    mean /= static_cast<double>(R);
    for (std::size_t r = 0; r < R; ++r) sq += (skills[li * R + r] - mean) * (skills[li * R + r] - mean);
    out.skill.push_back(mean);
    out.skill_sd.push_back(R > 1 ? std::sqrt(sq / static_cast<double>(R - 1)) : 0.0);
  }
  for (std::size_t t = 0; t < tasks; ++t) {
    out.max_weight_sum_error = std::max(out.max_weight_sum_error, weight_err[t]);
    out.nearest_weight_maximal = out.nearest_weight_maximal && w1_max[t];
  }
  return out;
}

// ---- Continuity -------------------------------------------------------------

double point_spread(const Matrix& points) {
  const Eigen::RowVectorXd mean = points.colwise().mean();
  return std::sqrt((points.rowwise() - mean).squaredNorm() / static_cast<double>(points.rows()));
}

ContinuityCurve continuity_curve(const Matrix& domain, const Matrix& image, const ContinuitySpec& spec) {
  require_aligned(domain, image);
  if (spec.epsilons.empty()) throw ValidationError("epsilon grid is empty");
  if (spec.n_max == 0 || spec.n_probes == 0) throw ValidationError("probe and neighbour counts must be positive");
  for (double e : spec.epsilons) {
    if (!(e > 0.0)) throw ValidationError("epsilons must be positive");
  }
  const auto n = static_cast<std::size_t>(domain.rows());
  const double spread = point_spread(image);
  if (!(spread > 0.0)) throw DegenerateInputError("image points are all coincident");

  NeighborIndex dom(std::make_shared<const Matrix>(domain));
  NeighborIndex img(std::make_shared<const Matrix>(image));

  std::vector<std::size_t> probes(n);
  std::iota(probes.begin(), probes.end(), std::size_t{0});
  if (spec.n_probes < n) {
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = 0; i < spec.n_probes; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(probes[i], probes[pick(rng)]);
    }
    probes.resize(spec.n_probes);
    std::sort(probes.begin(), probes.end());
  }

  ContinuityCurve out;
  std::vector<double> null_sum(spec.epsilons.size(), 0.0);
  const std::size_t W = spec.theiler_window;
  for (std::size_t i : probes) {
    const std::size_t excluded = std::min(i, W) + std::min(n - 1 - i, W) + 1;
    const std::size_t pool = n - std::min(n, excluded);
    if (pool == 0) {
      ++out.probes_skipped;
      continue;
    }
    const auto nb = dom.knn(i, std::min(spec.n_max, pool), W);
    ++out.probes_used;
    for (std::size_t e = 0; e < spec.epsilons.size(); ++e) {
      const double r = spec.epsilons[e] * spread;
      const double r2 = r * r;
      std::size_t run = 0;
      while (run < nb.size() && squared_distance(image, i, nb[run].index) <= r2) ++run;
      const double p = static_cast<double>(img.count_within(i, r2, W)) / static_cast<double>(pool);
      null_sum[e] += std::pow(p, static_cast<double>(run));
    }
  }
  for (double s : null_sum) {
    out.theta.push_back(out.probes_used ? std::clamp(1.0 - s / static_cast<double>(out.probes_used), 0.0, 1.0) : 0.0);
  }
  return out;
}

ContinuityStat pecora_continuity(const Matrix& domain, const Matrix& image, const ContinuitySpec& spec) {
  const auto fwd = continuity_curve(domain, image, spec);
  const auto inv = continuity_curve(image, domain, spec);
  ContinuityStat s;
  s.epsilons = spec.epsilons;
  s.theta = fwd.theta;
  s.theta_inverse = inv.theta;
  for (std::size_t e = 0; e < fwd.theta.size(); ++e) s.theta_product.push_back(fwd.theta[e] * inv.theta[e]);
  s.probes_used = fwd.probes_used + inv.probes_used;
  s.probes_skipped = fwd.probes_skipped + inv.probes_skipped;
  return s;
}

}  // namespace closeness
