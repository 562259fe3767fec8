#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mrpriv/geometry.hpp"

namespace mrpriv {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact k-d tree over row-major points of any dimension.
///
/// Answers are identical to a linear scan that computes
/// sqrt(sum_d (q_d - p_d)^2) in dimension order and ranks by
/// (distance, index). Pruning only discards subtrees whose lower bound is
/// strictly worse than the current k-th candidate, so equal-distance ties are
/// always resolved toward the lower index. Immutable after construction and
/// safe for concurrent queries.
class KdTree {
 public:
  KdTree() = default;
  KdTree(std::vector<double> data, std::size_t dim, std::size_t leaf_size = 12);

  std::size_t size() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  /// k nearest neighbours sorted ascending by (distance, index). Throws
  /// PreconditionError if k exceeds the point count.
  std::vector<Neighbor> knn(std::span<const double> query, std::size_t k) const;

  /// Indices of all points with distance <= radius, ascending by index.
  std::vector<std::size_t> radius_search(std::span<const double> query, double radius) const;

 private:
  struct Node {
    // Leaves: [begin, end) into order_. Inner: split axis/value and children.
    std::size_t begin = 0, end = 0;
    int axis = -1;
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search_knn(std::size_t node, const double* q, std::size_t k,
                  std::vector<std::pair<double, std::size_t>>& heap) const;
  void search_radius(std::size_t node, const double* q, double r2,
                     std::vector<std::size_t>& out) const;

  std::vector<double> data_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::size_t leaf_size_ = 12;
};

/// Exact k-nearest neighbours for batches of high-dimensional queries.
///
/// Candidates are ranked through a single matrix product; every point within
/// a rounding margin of the k-th candidate is then re-scored with
/// squared_distance, so answers equal those of KdTree and of a linear scan.
class DenseKnn {
 public:
  DenseKnn() = default;
  DenseKnn(std::vector<double> data, std::size_t dim);

  std::size_t size() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  /// `queries` is row-major with dim() columns; one sorted result per row.
  std::vector<std::vector<Neighbor>> knn(std::span<const double> queries, std::size_t k) const;

 private:
  std::vector<double> data_;
  std::vector<float> coarse_;
  std::vector<double> norms_;
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  double max_norm_ = 0.0;
};

/// Exact 3-D nearest-neighbour index over a point cloud's positions.
class SpatialIndex {
 public:
  SpatialIndex() = default;
  explicit SpatialIndex(const PointCloud& cloud);

  std::size_t size() const { return tree_.size(); }
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;
  std::vector<std::size_t> radius_search(const Vec3& query, double radius) const;

 private:
  KdTree tree_;
};

/// Shared distance kernel so oracles and the tree round identically.
inline double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

}  // namespace mrpriv
