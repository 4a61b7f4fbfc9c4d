#pragma once

#include "closeness/dynamics.hpp"
#include "closeness/types.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace closeness {

enum class Domain { XOnly, YOnly, Joint };

std::string to_string(Domain domain);

/// Scalar observation of a trajectory: either one coordinate of the chosen
/// block or an inner product <h, block>.
struct Measurement {
  Domain domain = Domain::XOnly;
  std::optional<std::size_t> coordinate;  ///< set for projections
  Vector functional;                      ///< used when coordinate is empty

  static Measurement projection(Domain domain, std::size_t index);
  static Measurement linear(Domain domain, Vector h);

  bool is_projection() const { return coordinate.has_value(); }
  std::string describe() const;
};

/// s(t) for every row of the trajectory.
Vector measure(const Trajectory& traj, const Measurement& meas);

/// Delay vectors [s(t), s(t - tau), ..., s(t - (m-1) tau)] for
/// t = base_offset .. T-1, one per row (current value first).
struct DelayEmbedding {
  Matrix points;
  std::size_t m = 1;
  std::size_t tau = 1;
  std::size_t base_offset = 0;
  std::size_t series_length = 0;
  Measurement source;

  std::size_t length() const { return static_cast<std::size_t>(points.rows()); }
};

DelayEmbedding delay_embed(const Vector& series, std::size_t m, std::size_t tau, Measurement source = {});

/// Common time range of two embeddings of the same series time axis. Row
/// offset_a + i of a and offset_b + i of b both refer to time first_time + i.
struct AlignedRange {
  std::size_t offset_a = 0;
  std::size_t offset_b = 0;
  std::size_t length = 0;
  std::size_t first_time = 0;
};

AlignedRange align(const DelayEmbedding& a, const DelayEmbedding& b);

/// Rows [offset, offset + length) of a point set.
Matrix slice_rows(const Matrix& points, std::size_t offset, std::size_t length);

struct NeighborQuery {
  std::size_t k = 5;
  std::size_t theiler_window = 0;

  /// Requires k >= 1 and k + 2W < n.
  void validate(std::size_t n) const;
};

/// True when |i - j| lies outside the Theiler window (and i != j).
inline bool admissible(std::size_t i, std::size_t j, std::size_t window) {
  const std::size_t gap = i > j ? i - j : j - i;
  return gap > window;
}

struct Neighbor {
  std::size_t index;
  double distance2;
};

/// Exact k-nearest-neighbour index over the rows of a point set (squared
/// Euclidean metric). Ties in distance resolve to the lower row index. Uses
/// a kd-tree for low dimensions and a linear scan otherwise.
class NeighborIndex {
 public:
  explicit NeighborIndex(std::shared_ptr<const Matrix> points, std::size_t leaf_size = 12);
  explicit NeighborIndex(const Matrix& points) : NeighborIndex(std::make_shared<const Matrix>(points)) {}

  std::size_t size() const { return static_cast<std::size_t>(points_->rows()); }
  const Matrix& points() const { return *points_; }
  bool uses_tree() const { return !nodes_.empty(); }

  /// k nearest admissible neighbours of row `query`, nearest first.
  /// Throws ValidationError when fewer than k points are admissible.
  std::vector<Neighbor> knn(std::size_t query, std::size_t k, std::size_t theiler_window) const;

  /// Number of admissible rows within squared radius r2 of row `query`.
  std::size_t count_within(std::size_t query, double r2, std::size_t theiler_window) const;

 private:
  struct Node {
    std::size_t begin, end;  // range into order_
    int split_dim = -1;      // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);

  std::shared_ptr<const Matrix> points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Exhaustive-scan reference for knn with identical ordering rules.
std::vector<Neighbor> brute_force_knn(const Matrix& points, std::size_t query, std::size_t k,
                                      std::size_t theiler_window);

std::vector<std::size_t> knn(const DelayEmbedding& emb, std::size_t query_index, const NeighborQuery& q);

/// CSV export: a "# m=..,tau=..,base_offset=.." comment line, then one row per
/// delay vector.
void write_embedding_csv(std::ostream& out, const DelayEmbedding& emb);

}  // namespace closeness
