#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mrpriv/descriptors.hpp"
#include "mrpriv/mechanisms.hpp"
#include "mrpriv/spatial_index.hpp"

namespace mrpriv {

/// How one generalized reference variant is produced from a raw space.
struct VariantSpec {
  GeneralizationParams params;
  std::uint64_t seed = 0;
};

/// The adversary's database: per space label, the described raw space plus
/// every generalized variant. Each label's variants are pooled into a single
/// descriptor set with its own exact index.
class ReferenceEnsemble {
 public:
  struct Pool {
    std::vector<Vec3> positions;  ///< keypoint positions, reference frame
    std::vector<std::size_t> variant_of;
    DenseKnn index;               ///< over the pooled descriptors
  };

  ReferenceEnsemble() = default;
  explicit ReferenceEnsemble(std::map<int, std::vector<DescribedSpace>> variants);

  const std::map<int, std::vector<DescribedSpace>>& variants() const { return variants_; }
  const Pool& pool(int label) const { return pools_.at(label); }
  std::vector<int> labels() const;
  std::size_t descriptor_length() const { return length_; }

  void save(const std::filesystem::path& path) const;
  static ReferenceEnsemble load(const std::filesystem::path& path);

 private:
  std::map<int, std::vector<DescribedSpace>> variants_;
  std::map<int, Pool> pools_;
  std::size_t length_ = 0;
};

/// Describes each labelled raw space and one RANSAC-generalized version per
/// variant spec.
ReferenceEnsemble build_reference(const std::vector<PointCloud>& raw_spaces,
                                  const std::vector<VariantSpec>& variants,
                                  const SpinParams& params, std::size_t keypoint_factor = 5,
                                  std::size_t workers = 1);

struct MatchPair {
  std::size_t query_index = 0;      ///< into the query's keypoints
  std::size_t reference_index = 0;  ///< into the label's pool
  Vec3 query_position = Vec3::Zero();
  Vec3 reference_position = Vec3::Zero();
  double nndr = 0.0;
};

struct LabelScore {
  int label = -1;
  double score = 0.0;
  std::vector<MatchPair> kept;  ///< ascending by query index
};

struct InterSpaceResult {
  std::vector<LabelScore> scores;  ///< ascending by label
  int winner = -1;

  const LabelScore& winning() const;
};

struct InterMatchOptions {
  /// Drop matches with NNDR >= threshold before the uniqueness step.
  bool strict = false;
  double nndr_threshold = 0.9;
};

/// Two-nearest-neighbour descriptor matching and voting over every label.
InterSpaceResult match_inter(const ReferenceEnsemble& ensemble, const DescribedSpace& query,
                             const InterMatchOptions& options = {});

/// Raised when the geometric check cannot produce a location estimate.
class IntraAbstainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IntraSpaceResult {
  std::vector<MatchPair> surviving;
  std::vector<double> similarity;  ///< combined similarity of each surviving pair
  Vec3 centroid = Vec3::Zero();
};

struct IntraMatchOptions {
  double nndr_threshold = 0.9;
  double similarity_threshold = 0.95;
  double distance_rate = 0.5;
};

/// Per-pair similarity used by match_intra, exposed for tests.
struct VertexSimilarity {
  std::vector<double> distance;
  std::vector<double> angular;
  std::vector<double> combined;
};
VertexSimilarity vertex_similarity(const std::vector<Vec3>& query, const std::vector<Vec3>& reference,
                                   double distance_rate = 0.5);

/// Geometric consistency check over matched keypoints: keeps pairs whose
/// distance and internal-angle structure agrees between query and reference
/// and returns the centroid of the surviving reference keypoints.
IntraSpaceResult match_intra(const std::vector<MatchPair>& pairs,
                             const IntraMatchOptions& options = {});

struct AttackerOptions {
  SpinParams spin;
  std::size_t keypoint_factor = 5;
  InterMatchOptions inter;
  IntraMatchOptions intra;
};

struct Hypothesis {
  int label = -1;
  Vec3 centroid = Vec3::Zero();
  bool intra_abstained = false;
  double winning_score = 0.0;
  std::size_t query_descriptors = 0;
};

/// describe -> match_inter -> match_intra. Throws PreconditionError for an
/// empty query and UnusableSpaceError when no descriptor can be formed; an
/// intra abstention is reported through Hypothesis::intra_abstained.
Hypothesis infer(const ReferenceEnsemble& ensemble, const PointCloud& query,
                 const AttackerOptions& options = {});

}  // namespace mrpriv
