#include "mrpriv/attacker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "mrpriv/binary_io.hpp"
#include "mrpriv/parallel.hpp"

namespace mrpriv {

ReferenceEnsemble::ReferenceEnsemble(std::map<int, std::vector<DescribedSpace>> variants)
    : variants_(std::move(variants)) {
  for (const auto& [label, list] : variants_) {
    if (list.empty()) throw PreconditionError("ReferenceEnsemble: label without variants");
    Pool pool;
    std::vector<double> data;
    for (std::size_t v = 0; v < list.size(); ++v) {
      const DescribedSpace& space = list[v];
      const std::size_t len = space.params.length();
      if (length_ == 0) length_ = len;
      if (len != length_) throw PreconditionError("ReferenceEnsemble: mixed descriptor lengths");
      for (std::size_t k = 0; k < space.size(); ++k) {
        pool.positions.push_back(space.keypoints[k].point.position);
        pool.variant_of.push_back(v);
        const auto& values = space.descriptors[k].values;
        data.insert(data.end(), values.begin(), values.end());
      }
    }
    if (length_ == 0) throw PreconditionError("ReferenceEnsemble: zero-length descriptors");
    pool.index = DenseKnn(std::move(data), length_);
    pools_.emplace(label, std::move(pool));
  }
}

std::vector<int> ReferenceEnsemble::labels() const {
  std::vector<int> out;
  for (const auto& [label, _] : variants_) out.push_back(label);
  return out;
}

namespace {
constexpr char kEnsembleMagic[9] = "MRPENS01";
constexpr std::uint32_t kEnsembleVersion = 1;
}  // namespace

void ReferenceEnsemble::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  binio::put_magic(out, kEnsembleMagic);
  binio::put<std::uint32_t>(out, kEnsembleVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(variants_.size()));
  for (const auto& [label, list] : variants_) {
    binio::put<std::int32_t>(out, label);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& space : list) write_described_space(out, space);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ReferenceEnsemble ReferenceEnsemble::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  binio::expect_magic(in, kEnsembleMagic);
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kEnsembleVersion)
    throw binio::FormatError("ensemble cache: unsupported version " + std::to_string(version));
  std::map<int, std::vector<DescribedSpace>> variants;
  const auto labels = binio::get<std::uint32_t>(in);
  for (std::uint32_t l = 0; l < labels; ++l) {
    const auto label = binio::get<std::int32_t>(in);
    const auto count = binio::get<std::uint32_t>(in);
    auto& list = variants[label];
    for (std::uint32_t v = 0; v < count; ++v) list.push_back(read_described_space(in));
  }
  return ReferenceEnsemble(std::move(variants));
}

ReferenceEnsemble build_reference(const std::vector<PointCloud>& raw_spaces,
                                  const std::vector<VariantSpec>& variants,
                                  const SpinParams& params, std::size_t keypoint_factor,
                                  std::size_t workers) {
  std::set<int> seen;
  for (const auto& space : raw_spaces) {
    if (!space.label) throw PreconditionError("build_reference: unlabelled space");
    if (!seen.insert(*space.label).second)
      throw PreconditionError("build_reference: duplicate label " + std::to_string(*space.label));
    if (!space.has_normals) throw PreconditionError("build_reference: space lacks normals");
  }
  const std::size_t per_space = variants.size() + 1;
  std::vector<DescribedSpace> described(raw_spaces.size() * per_space);
  parallel_for(described.size(), workers, [&](std::size_t job) {
    const PointCloud& raw = raw_spaces[job / per_space];
    const std::size_t v = job % per_space;
    if (v == 0) {
      described[job] = describe(raw, params, keypoint_factor);
      return;
    }
    const VariantSpec& spec = variants[v - 1];
    const auto label = static_cast<std::uint64_t>(static_cast<std::int64_t>(*raw.label));
    const auto planes = ransac_planes(raw, spec.params, derive_seed(spec.seed, {label}));
    PointCloud generalized = project_to_planes(raw, planes);
    generalized.label = raw.label;
    described[job] = describe(generalized, params, keypoint_factor);
  });

  std::map<int, std::vector<DescribedSpace>> by_label;
  for (std::size_t job = 0; job < described.size(); ++job)
    by_label[*raw_spaces[job / per_space].label].push_back(std::move(described[job]));
  return ReferenceEnsemble(std::move(by_label));
}

const LabelScore& InterSpaceResult::winning() const {
  for (const auto& s : scores)
    if (s.label == winner) return s;
  throw PreconditionError("InterSpaceResult: no winner");
}

InterSpaceResult match_inter(const ReferenceEnsemble& ensemble, const DescribedSpace& query,
                             const InterMatchOptions& options) {
  if (query.descriptors.empty()) throw PreconditionError("match_inter: query has no descriptors");
  if (query.descriptors.front().values.size() != ensemble.descriptor_length())
    throw PreconditionError("match_inter: descriptor length differs from the ensemble");
  const std::size_t nq = query.descriptors.size();
  std::vector<double> query_matrix;
  query_matrix.reserve(nq * ensemble.descriptor_length());
  for (const auto& d : query.descriptors)
    query_matrix.insert(query_matrix.end(), d.values.begin(), d.values.end());

  InterSpaceResult result;
  for (int label : ensemble.labels()) {
    LabelScore ls;
    ls.label = label;
    const auto& pool = ensemble.pool(label);
    if (pool.index.size() < 2) {
      result.scores.push_back(std::move(ls));
      continue;
    }

    std::vector<std::array<Neighbor, 2>> nn(nq);
    double max_dist = 0.0;
    const auto found = pool.index.knn(query_matrix, 2);
    for (std::size_t j = 0; j < nq; ++j) {
      nn[j] = {found[j][0], found[j][1]};
      max_dist = std::max({max_dist, found[j][0].distance, found[j][1].distance});
    }
    std::vector<double> nndr(nq, 0.0);
    for (std::size_t j = 0; j < nq; ++j) {
      double d0 = nn[j][0].distance, d1 = nn[j][1].distance;
      if (max_dist > 0.0) {
        d0 /= max_dist;
        d1 /= max_dist;
      }
      // Both neighbours at distance zero is an exact duplicate: best ratio.
      nndr[j] = d1 > 0.0 ? d0 / d1 : 0.0;
    }

    // Unique keypoint matches: one query per reference keypoint, lowest NNDR
    // wins (ties to the lower query index).
    std::map<std::size_t, std::size_t> owner;  // reference index -> query index
    for (std::size_t j = 0; j < nq; ++j) {
      if (options.strict && !(nndr[j] < options.nndr_threshold)) continue;
      const std::size_t ref = nn[j][0].index;
      auto [it, inserted] = owner.emplace(ref, j);
      if (!inserted && nndr[j] < nndr[it->second]) it->second = j;
    }
    std::vector<std::size_t> kept_queries;
    kept_queries.reserve(owner.size());
    for (const auto& [ref, j] : owner) kept_queries.push_back(j);
    std::sort(kept_queries.begin(), kept_queries.end());

    double sum = 0.0;
    for (std::size_t j : kept_queries) {
      MatchPair pair;
      pair.query_index = j;
      pair.reference_index = nn[j][0].index;
      pair.query_position = query.keypoints[j].point.position;
      pair.reference_position = pool.positions[pair.reference_index];
      pair.nndr = nndr[j];
      sum += nndr[j];
      ls.kept.push_back(pair);
    }
    if (!ls.kept.empty()) {
      const double kept = static_cast<double>(ls.kept.size());
      ls.score = (1.0 - sum / kept) * kept / static_cast<double>(nq);
    }
    result.scores.push_back(std::move(ls));
  }

  if (result.scores.empty()) throw PreconditionError("match_inter: empty ensemble");
  const LabelScore* best = &result.scores.front();
  for (const auto& s : result.scores)
    if (s.score > best->score) best = &s;
  result.winner = best->label;
  return result;
}

namespace {

/// Angle at the origin between unit vectors a and b; zero vectors give 0.
double angle_between(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

Vec3 unit_or_zero(const Vec3& v) {
  const double n = v.norm();
  return n > 0.0 ? Vec3(v / n) : Vec3(Vec3::Zero());
}

double cosine_similarity(double dot, double norm_a2, double norm_b2) {
  if (norm_a2 <= 0.0 && norm_b2 <= 0.0) return 1.0;
  if (norm_a2 <= 0.0 || norm_b2 <= 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(norm_a2 * norm_b2), 0.0, 1.0);
}

/// Incrementally maintained per-vertex similarity over an active vertex set.
class GraphSimilarity {
 public:
  GraphSimilarity(const std::vector<Vec3>& q, const std::vector<Vec3>& r, double rate)
      : n_(q.size()), active_(q.size(), 1), count_(q.size()) {
    uq_.resize(n_ * n_);
    ur_.resize(n_ * n_);
    edge_.assign(n_ * n_, 0.0);
    for (std::size_t v = 0; v < n_; ++v) {
      for (std::size_t w = 0; w < n_; ++w) {
        if (v == w) continue;
        uq_[v * n_ + w] = unit_or_zero(q[w] - q[v]);
        ur_[v * n_ + w] = unit_or_zero(r[w] - r[v]);
        edge_[v * n_ + w] = std::exp(-rate * std::abs((q[w] - q[v]).norm() - (r[w] - r[v]).norm()));
      }
    }
    edge_sum_.assign(n_, 0.0);
    dot_.assign(n_, 0.0);
    nq_.assign(n_, 0.0);
    nr_.assign(n_, 0.0);
    for (std::size_t v = 0; v < n_; ++v) {
      for (std::size_t w = 0; w < n_; ++w)
        if (w != v) edge_sum_[v] += edge_[v * n_ + w];
      for (std::size_t w = 0; w < n_; ++w) {
        if (w == v) continue;
        for (std::size_t u = w + 1; u < n_; ++u) {
          if (u == v) continue;
          accumulate_angle(v, w, u, +1.0);
        }
      }
    }
  }

  std::size_t active_count() const { return count_; }
  bool active(std::size_t v) const { return active_[v] != 0; }

  double distance_similarity(std::size_t v) const {
    return count_ > 1 ? edge_sum_[v] / static_cast<double>(count_ - 1) : 1.0;
  }
  double angular_similarity(std::size_t v) const { return cosine_similarity(dot_[v], nq_[v], nr_[v]); }
  double combined(std::size_t v) const { return distance_similarity(v) * angular_similarity(v); }

  void remove(std::size_t x) {
    active_[x] = 0;
    --count_;
    for (std::size_t v = 0; v < n_; ++v) {
      if (!active_[v]) continue;
      edge_sum_[v] -= edge_[v * n_ + x];
      for (std::size_t w = 0; w < n_; ++w) {
        if (w == v || w == x || !active_[w]) continue;
        accumulate_angle(v, w, x, -1.0);
      }
    }
  }

 private:
  void accumulate_angle(std::size_t v, std::size_t w, std::size_t u, double sign) {
    const double aq = angle_between(uq_[v * n_ + w], uq_[v * n_ + u]);
    const double ar = angle_between(ur_[v * n_ + w], ur_[v * n_ + u]);
    dot_[v] += sign * aq * ar;
    nq_[v] += sign * aq * aq;
    nr_[v] += sign * ar * ar;
  }

  std::size_t n_;
  std::vector<std::uint8_t> active_;
  std::size_t count_;
  std::vector<Vec3> uq_, ur_;
  std::vector<double> edge_;
  std::vector<double> edge_sum_, dot_, nq_, nr_;
};

}  // namespace

VertexSimilarity vertex_similarity(const std::vector<Vec3>& query,
                                   const std::vector<Vec3>& reference, double distance_rate) {
  if (query.size() != reference.size())
    throw PreconditionError("vertex_similarity: size mismatch");
  const GraphSimilarity graph(query, reference, distance_rate);
  VertexSimilarity out;
  for (std::size_t v = 0; v < query.size(); ++v) {
    out.distance.push_back(graph.distance_similarity(v));
    out.angular.push_back(graph.angular_similarity(v));
    out.combined.push_back(graph.combined(v));
  }
  return out;
}

IntraSpaceResult match_intra(const std::vector<MatchPair>& pairs, const IntraMatchOptions& options) {
  std::vector<MatchPair> candidates;
  for (const auto& p : pairs)
    if (p.nndr < options.nndr_threshold) candidates.push_back(p);
  if (candidates.size() < 3)
    throw IntraAbstainError("match_intra: fewer than 3 pairs pass the NNDR threshold");

  std::vector<Vec3> q, r;
  for (const auto& p : candidates) {
    q.push_back(p.query_position);
    r.push_back(p.reference_position);
  }
  GraphSimilarity graph(q, r, options.distance_rate);

  // Peel the least consistent vertex until every remaining vertex clears the
  // threshold within the remaining subgraph.
  while (graph.active_count() >= 3) {
    std::size_t worst = candidates.size();
    double worst_s = options.similarity_threshold;
    for (std::size_t v = 0; v < candidates.size(); ++v) {
      if (!graph.active(v)) continue;
      const double s = graph.combined(v);
      if (s < worst_s) {
        worst_s = s;
        worst = v;
      }
    }
    if (worst == candidates.size()) break;
    graph.remove(worst);
  }
  if (graph.active_count() < 3)
    throw IntraAbstainError("match_intra: no geometrically consistent subgraph");

  IntraSpaceResult result;
  for (std::size_t v = 0; v < candidates.size(); ++v) {
    if (!graph.active(v)) continue;
    result.surviving.push_back(candidates[v]);
    result.similarity.push_back(graph.combined(v));
    result.centroid += candidates[v].reference_position;
  }
  result.centroid /= static_cast<double>(result.surviving.size());
  return result;
}

Hypothesis infer(const ReferenceEnsemble& ensemble, const PointCloud& query,
                 const AttackerOptions& options) {
  if (query.empty()) throw PreconditionError("infer: empty query");
  const DescribedSpace described = describe(query, options.spin, options.keypoint_factor);
  const InterSpaceResult inter = match_inter(ensemble, described, options.inter);
  Hypothesis h;
  h.label = inter.winner;
  h.winning_score = inter.winning().score;
  h.query_descriptors = described.size();
  try {
    h.centroid = match_intra(inter.winning().kept, options.intra).centroid;
  } catch (const IntraAbstainError&) {
    h.intra_abstained = true;
  }
  return h;
}

}  // namespace mrpriv
