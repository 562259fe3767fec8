#include "mrpriv/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

namespace mrpriv {

KdTree::KdTree(std::vector<double> data, std::size_t dim, std::size_t leaf_size)
    : data_(std::move(data)), dim_(dim), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  if (dim_ == 0) throw PreconditionError("KdTree: dimension must be positive");
  if (data_.size() % dim_ != 0) throw PreconditionError("KdTree: data size not a multiple of dim");
  count_ = data_.size() / dim_;
  order_.resize(count_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * (count_ / leaf_size_ + 1));
  if (count_ > 0) build(0, count_);
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  // Split on the axis of largest spread at the median.
  int best_axis = 0;
  double best_spread = -1.0;
  for (std::size_t d = 0; d < dim_; ++d) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = data_[order_[i] * dim_ + d];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_axis = static_cast<int>(d);
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide: keep as leaf

  const std::size_t mid = begin + (end - begin) / 2;
  const auto axis = static_cast<std::size_t>(best_axis);
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return data_[a * dim_ + axis] < data_[b * dim_ + axis];
                   });
  const double split = data_[order_[mid] * dim_ + axis];

  nodes_[id].axis = best_axis;
  nodes_[id].split = split;
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {

using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)

// Max-heap on (distance, index): the top is the current worst candidate.
void push_candidate(std::vector<Candidate>& heap, std::size_t k, Candidate c) {
  if (heap.size() < k) {
    heap.push_back(c);
    std::push_heap(heap.begin(), heap.end());
  } else if (c < heap.front()) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = c;
    std::push_heap(heap.begin(), heap.end());
  }
}

}  // namespace

void KdTree::search_knn(std::size_t node_id, const double* q, std::size_t k,
                        std::vector<Candidate>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double* p = data_.data() + idx * dim_;
      if (heap.size() < k) {
        push_candidate(heap, k, {squared_distance(q, p, dim_), idx});
        continue;
      }
      // Early abandonment: partial sums only grow, so a partial sum strictly
      // above the worst kept distance can never enter the heap.
      const double worst = heap.front().first;
      double s = 0.0;
      bool abandoned = false;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double diff = q[d] - p[d];
        s += diff * diff;
        if (s > worst) {
          abandoned = true;
          break;
        }
      }
      if (!abandoned) push_candidate(heap, k, {s, idx});
    }
    return;
  }
  const auto axis = static_cast<std::size_t>(node.axis);
  const double diff = q[axis] - node.split;
  const std::size_t near = diff < 0.0 ? node.left : node.right;
  const std::size_t far = diff < 0.0 ? node.right : node.left;
  search_knn(near, q, k, heap);
  // Points on the far side differ from q by at least |diff| along `axis`.
  if (heap.size() < k || diff * diff <= heap.front().first) search_knn(far, q, k, heap);
}

std::vector<Neighbor> KdTree::knn(std::span<const double> query, std::size_t k) const {
  if (query.size() != dim_) throw PreconditionError("KdTree::knn: query dimension mismatch");
  if (k > count_) throw PreconditionError("KdTree::knn: k exceeds point count");
  std::vector<Neighbor> out;
  if (k == 0) return out;
  std::vector<Candidate> heap;
  heap.reserve(k);
  search_knn(0, query.data(), k, heap);
  std::sort_heap(heap.begin(), heap.end());
  out.reserve(k);
  for (const auto& [d2, idx] : heap) out.push_back({idx, std::sqrt(d2)});
  return out;
}

void KdTree::search_radius(std::size_t node_id, const double* q, double r2,
                           std::vector<std::size_t>& out) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      if (squared_distance(q, data_.data() + idx * dim_, dim_) <= r2) out.push_back(idx);
    }
    return;
  }
  const auto axis = static_cast<std::size_t>(node.axis);
  const double diff = q[axis] - node.split;
  const std::size_t near = diff < 0.0 ? node.left : node.right;
  const std::size_t far = diff < 0.0 ? node.right : node.left;
  search_radius(near, q, r2, out);
  if (diff * diff <= r2) search_radius(far, q, r2, out);
}

std::vector<std::size_t> KdTree::radius_search(std::span<const double> query,
                                               double radius) const {
  if (query.size() != dim_) throw PreconditionError("KdTree::radius_search: dimension mismatch");
  std::vector<std::size_t> out;
  if (count_ == 0 || radius < 0.0) return out;
  search_radius(0, query.data(), radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<double> flatten_positions(const PointCloud& cloud) {
  std::vector<double> data;
  data.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) {
    data.push_back(p.position.x());
    data.push_back(p.position.y());
    data.push_back(p.position.z());
  }
  return data;
}

}  // namespace

SpatialIndex::SpatialIndex(const PointCloud& cloud) : tree_(flatten_positions(cloud), 3) {}

std::vector<Neighbor> SpatialIndex::knn(const Vec3& query, std::size_t k) const {
  return tree_.knn({query.data(), 3}, k);
}

DenseKnn::DenseKnn(std::vector<double> data, std::size_t dim) : data_(std::move(data)), dim_(dim) {
  if (dim_ == 0) throw PreconditionError("DenseKnn: dimension must be positive");
  if (data_.size() % dim_ != 0) throw PreconditionError("DenseKnn: data size is not a multiple of dim");
  count_ = data_.size() / dim_;
  norms_.resize(count_);
  for (std::size_t i = 0; i < count_; ++i) {
    double n = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double v = data_[i * dim_ + d];
      if (!std::isfinite(v)) throw PreconditionError("DenseKnn: non-finite coordinate");
      n += v * v;
    }
    norms_[i] = n;
    max_norm_ = std::max(max_norm_, n);
  }
  coarse_.assign(data_.begin(), data_.end());
}

std::vector<std::vector<Neighbor>> DenseKnn::knn(std::span<const double> queries,
                                                 std::size_t k) const {
  if (dim_ == 0 || queries.size() % dim_ != 0)
    throw PreconditionError("DenseKnn: query size is not a multiple of dim");
  if (k > count_) throw PreconditionError("DenseKnn: k exceeds point count");
  const std::size_t m = queries.size() / dim_;
  std::vector<std::vector<Neighbor>> out(m);
  if (k == 0 || m == 0) return out;

  using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Map<const Mat> points(coarse_.data(), static_cast<Eigen::Index>(dim_),
                                     static_cast<Eigen::Index>(count_));
  std::vector<float> coarse_queries;
  constexpr std::size_t kBlock = 128;
  std::vector<double> smallest;
  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t b0 = 0; b0 < m; b0 += kBlock) {
    const std::size_t nb = std::min(kBlock, m - b0);
    coarse_queries.assign(queries.begin() + static_cast<std::ptrdiff_t>(b0 * dim_),
                          queries.begin() + static_cast<std::ptrdiff_t>((b0 + nb) * dim_));
    const Eigen::Map<const Mat> block(coarse_queries.data(), static_cast<Eigen::Index>(dim_),
                                      static_cast<Eigen::Index>(nb));
    const Mat gram = points.transpose() * block;
    for (std::size_t c = 0; c < nb; ++c) {
      const double* q = queries.data() + (b0 + c) * dim_;
      double qn = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        if (!std::isfinite(q[d])) throw PreconditionError("DenseKnn: non-finite query");
        qn += q[d] * q[d];
      }
      const float* g = gram.data() + c * count_;
      smallest.assign(k, std::numeric_limits<double>::infinity());
      for (std::size_t i = 0; i < count_; ++i) {
        const double approx = norms_[i] + qn - 2.0 * static_cast<double>(g[i]);
        if (approx < smallest.back()) {
          smallest.back() = approx;
          for (std::size_t s = k - 1; s > 0 && smallest[s] < smallest[s - 1]; --s)
            std::swap(smallest[s], smallest[s - 1]);
        }
      }
      // Single-precision products in the expanded form stay well inside this.
      const double margin = 1e-4 * (max_norm_ + qn) + 1e-300;
      const double bound = smallest.back() + 2.0 * margin;
      candidates.clear();
      for (std::size_t i = 0; i < count_; ++i)
        if (norms_[i] + qn - 2.0 * static_cast<double>(g[i]) <= bound)
          candidates.emplace_back(squared_distance(q, data_.data() + i * dim_, dim_), i);
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                        candidates.end());
      auto& result = out[b0 + c];
      result.reserve(k);
      for (std::size_t s = 0; s < k; ++s)
        result.push_back({candidates[s].second, std::sqrt(candidates[s].first)});
    }
  }
  return out;
}

std::vector<std::size_t> SpatialIndex::radius_search(const Vec3& query, double radius) const {
  return tree_.radius_search({query.data(), 3}, radius);
}

}  // namespace mrpriv
