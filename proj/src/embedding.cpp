#include "closeness/embedding.hpp"

#include "closeness/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <numeric>
#include <ostream>
#include <queue>

namespace closeness {

std::string to_string(Domain domain) {
  switch (domain) {
    case Domain::XOnly: return "x";
    case Domain::YOnly: return "y";
    case Domain::Joint: return "xy";
  }
  return "?";
}

Measurement Measurement::projection(Domain domain, std::size_t index) {
  Measurement m;
  m.domain = domain;
  m.coordinate = index;
  return m;
}

Measurement Measurement::linear(Domain domain, Vector h) {
  Measurement m;
  m.domain = domain;
  m.functional = std::move(h);
  return m;
}

std::string Measurement::describe() const {
  if (coordinate) return fmt::format("{}[{}]", to_string(domain), *coordinate);
  return fmt::format("<h,{}> (dim {})", to_string(domain), functional.size());
}

Vector measure(const Trajectory& traj, const Measurement& meas) {
  std::size_t begin = 0, width = traj.n_x + traj.n_y;
  if (meas.domain == Domain::XOnly) width = traj.n_x;
  if (meas.domain == Domain::YOnly) {
    begin = traj.n_x;
    width = traj.n_y;
  }
  if (static_cast<std::size_t>(traj.samples.cols()) != traj.n_x + traj.n_y) {
    throw ValidationError("trajectory split does not match its column count");
  }
  const auto b = static_cast<Eigen::Index>(begin);
  if (meas.coordinate) {
    if (*meas.coordinate >= width) {
      throw ValidationError(fmt::format("coordinate {} outside {} block of dimension {}", *meas.coordinate,
                                        to_string(meas.domain), width));
    }
    return traj.samples.col(b + static_cast<Eigen::Index>(*meas.coordinate));
  }
  if (static_cast<std::size_t>(meas.functional.size()) != width) {
    throw ValidationError(fmt::format("functional has dimension {} but the {} block has {}", meas.functional.size(),
                                      to_string(meas.domain), width));
  }
  return traj.samples.middleCols(b, static_cast<Eigen::Index>(width)) * meas.functional;
}

DelayEmbedding delay_embed(const Vector& series, std::size_t m, std::size_t tau, Measurement source) {
  if (m == 0 || tau == 0) throw ValidationError("embedding dimension and lag must be positive");
  const auto T = static_cast<std::size_t>(series.size());
  const std::size_t offset = (m - 1) * tau;
  if (T <= offset) {
    throw ValidationError(fmt::format("series of length {} too short for m={}, tau={}", T, m, tau));
  }
  DelayEmbedding emb;
  emb.m = m;
  emb.tau = tau;
  emb.base_offset = offset;
  emb.series_length = T;
  emb.source = std::move(source);
  const std::size_t rows = T - offset;
  emb.points.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r + offset;
    for (std::size_t c = 0; c < m; ++c) {
      emb.points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          series[static_cast<Eigen::Index>(t - c * tau)];
    }
  }
  return emb;
}

AlignedRange align(const DelayEmbedding& a, const DelayEmbedding& b) {
  const std::size_t start = std::max(a.base_offset, b.base_offset);
  const std::size_t end = std::min(a.base_offset + a.length(), b.base_offset + b.length());
  if (end <= start) throw ValidationError("embeddings share no time indices");
  return {start - a.base_offset, start - b.base_offset, end - start, start};
}

Matrix slice_rows(const Matrix& points, std::size_t offset, std::size_t length) {
  if (offset + length > static_cast<std::size_t>(points.rows())) throw ValidationError("row slice out of range");
  return points.middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(length));
}

void NeighborQuery::validate(std::size_t n) const {
  if (k < 1) throw ValidationError("neighbour count k must be at least 1");
  if (k + 2 * theiler_window >= n) {
    throw ValidationError(
        fmt::format("k={} with Theiler window {} needs more than {} points", k, theiler_window, n));
  }
}

namespace {

constexpr std::size_t kTreeMaxDim = 16;
constexpr std::size_t kTreeMinPoints = 64;

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance2 < b.distance2 || (a.distance2 == b.distance2 && a.index < b.index);
}

struct Worse {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};

using Heap = std::priority_queue<Neighbor, std::vector<Neighbor>, Worse>;  // top = worst

void offer(Heap& heap, std::size_t k, Neighbor cand) {
  if (heap.size() < k) {
    heap.push(cand);
  } else if (closer(cand, heap.top())) {
    heap.pop();
    heap.push(cand);
  }
}

std::vector<Neighbor> drain(Heap& heap, std::size_t k) {
  if (heap.size() < k) throw ValidationError(fmt::format("fewer than {} admissible neighbours", k));
  std::vector<Neighbor> out(heap.size());
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    *it = heap.top();
    heap.pop();
  }
  return out;
}

}  // namespace

NeighborIndex::NeighborIndex(std::shared_ptr<const Matrix> points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (!points_ || points_->rows() == 0) throw ValidationError("neighbour index needs a nonempty point set");
  const auto n = size();
  if (static_cast<std::size_t>(points_->cols()) <= kTreeMaxDim && n >= kTreeMinPoints) {
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * n / leaf_size_ + 1);
    build(0, n);
  }
}

std::size_t NeighborIndex::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end});
  if (end - begin <= leaf_size_) return id;

  const Matrix& P = *points_;
  Eigen::Index best_dim = 0;
  double best_spread = -1.0;
  for (Eigen::Index d = 0; d < P.cols(); ++d) {
    double lo = P(static_cast<Eigen::Index>(order_[begin]), d), hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      const double v = P(static_cast<Eigen::Index>(order_[i]), d);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = d;
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide: keep as a leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     return P(static_cast<Eigen::Index>(a), best_dim) < P(static_cast<Eigen::Index>(b), best_dim);
                   });
  const double split = P(static_cast<Eigen::Index>(order_[mid]), best_dim);
  nodes_[id].split_dim = static_cast<int>(best_dim);
  nodes_[id].split = split;
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<Neighbor> NeighborIndex::knn(std::size_t query, std::size_t k, std::size_t theiler_window) const {
  if (query >= size()) throw ValidationError("query index out of range");
  if (k == 0) throw ValidationError("k must be at least 1");
  if (!uses_tree()) return brute_force_knn(*points_, query, k, theiler_window);

  const Matrix& P = *points_;
  const double* q = P.data() + static_cast<Eigen::Index>(query) * P.cols();
  Heap heap;
  // Points on the left of a split are <= split and on the right are >= split,
  // so the squared plane gap is a valid lower bound for the far side.
  auto visit = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.split_dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t j = order_[i];
        if (!admissible(query, j, theiler_window)) continue;
        offer(heap, k, {j, squared_distance(P, query, j)});
      }
      return;
    }
    const double diff = q[node.split_dim] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().distance2) self(self, far);
  };
  visit(visit, 0);
  return drain(heap, k);
}

std::size_t NeighborIndex::count_within(std::size_t query, double r2, std::size_t theiler_window) const {
  if (query >= size()) throw ValidationError("query index out of range");
  const Matrix& P = *points_;
  std::size_t count = 0;
  if (!uses_tree()) {
    for (std::size_t j = 0; j < size(); ++j) {
      if (admissible(query, j, theiler_window) && squared_distance(P, query, j) <= r2) ++count;
    }
    return count;
  }
  const double* q = P.data() + static_cast<Eigen::Index>(query) * P.cols();
  auto visit = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.split_dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t j = order_[i];
        if (admissible(query, j, theiler_window) && squared_distance(P, query, j) <= r2) ++count;
      }
      return;
    }
    const double diff = q[node.split_dim] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (diff * diff <= r2) self(self, far);
  };
  visit(visit, 0);
  return count;
}

std::vector<Neighbor> brute_force_knn(const Matrix& points, std::size_t query, std::size_t k,
                                      std::size_t theiler_window) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (query >= n) throw ValidationError("query index out of range");
  std::vector<Neighbor> all;
  all.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (admissible(query, j, theiler_window)) all.push_back({j, squared_distance(points, query, j)});
  }
  if (all.size() < k) throw ValidationError(fmt::format("fewer than {} admissible neighbours", k));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
  all.resize(k);
  return all;
}

std::vector<std::size_t> knn(const DelayEmbedding& emb, std::size_t query_index, const NeighborQuery& q) {
  q.validate(emb.length());
  const auto found = brute_force_knn(emb.points, query_index, q.k, q.theiler_window);
  std::vector<std::size_t> out;
  out.reserve(found.size());
  for (const auto& nb : found) out.push_back(nb.index);
  return out;
}

void write_embedding_csv(std::ostream& out, const DelayEmbedding& emb) {
  fmt::print(out, "# m={},tau={},base_offset={}\n", emb.m, emb.tau, emb.base_offset);
  for (std::size_t c = 0; c < emb.m; ++c) fmt::print(out, "{}lag{}", c ? "," : "", c);
  out << '\n';
  for (Eigen::Index r = 0; r < emb.points.rows(); ++r) {
    for (Eigen::Index c = 0; c < emb.points.cols(); ++c) fmt::print(out, "{}{}", c ? "," : "", emb.points(r, c));
    out << '\n';
  }
}

}  // namespace closeness
