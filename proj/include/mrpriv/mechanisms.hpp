#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mrpriv/geometry.hpp"
#include "mrpriv/rng.hpp"

namespace mrpriv {

/// Plane n . x = offset with the indices of the points it generalizes.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::vector<std::size_t> inliers;
  std::size_t sequence = 0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
  Vec3 project(const Vec3& p) const { return p - signed_distance(p) * normal; }
};

struct GeneralizationParams {
  double dist_eps = 0.05;
  double normal_angle_max_deg = 30.0;
  std::size_t min_inliers = 30;
  std::size_t candidates_per_round = 100;
  bool refit = true;

  void validate() const;
  /// |n . p - offset| <= dist_eps and the point normal within
  /// normal_angle_max of +/- the plane normal.
  bool accepts(const Plane& plane, const OrientedPoint& p) const;
};

/// Greedy one-point-plus-normal RANSAC over the whole cloud. Plane sequence
/// numbers start at 0; inlier indices refer to `cloud`.
std::vector<Plane> ransac_planes(const PointCloud& cloud, const GeneralizationParams& params,
                                 std::uint64_t seed);

/// RANSAC restricted to `candidates` (indices into `cloud`). Sequence numbers
/// start at `first_sequence`.
std::vector<Plane> ransac_planes_subset(const PointCloud& cloud,
                                        const std::vector<std::size_t>& candidates,
                                        const GeneralizationParams& params, std::uint64_t seed,
                                        std::size_t first_sequence = 0);

/// Projects every inlier of every plane onto its plane; the released normal is
/// the plane normal signed to agree with the point normal. Points in no plane
/// are dropped. Output follows the cloud's point order.
PointCloud project_to_planes(const PointCloud& cloud, const std::vector<Plane>& planes);

/// Accumulated state of a successive release session.
struct ReleaseState {
  PointCloud accumulated;
  /// Source-cloud index of each accumulated point (for de-duplication).
  std::vector<std::size_t> source_indices;
  std::vector<Plane> planes;
  /// Per accumulated point: owning plane position in `planes`, or -1.
  std::vector<long> assignment;
  std::vector<std::size_t> residual;

  std::size_t plane_count() const { return planes.size(); }
};

/// Appends `new_points` to the state, lets existing planes claim them in
/// creation order, and runs RANSAC over the residual pool.
ReleaseState subsume(ReleaseState state, const PointCloud& new_points,
                     const GeneralizationParams& params, std::uint64_t seed);

inline constexpr std::size_t kUnboundedPlanes = std::numeric_limits<std::size_t>::max();

/// Indices into `state.planes` of the planes released under the cap: ranked by
/// inlier count descending, ties by creation order.
std::vector<std::size_t> released_plane_ids(const ReleaseState& state, std::size_t max_planes);

/// Projections of the points owned by the top `max_planes` planes, in
/// accumulated order. The state is not modified.
PointCloud conservative_release(const ReleaseState& state, std::size_t max_planes);

struct ReleasePolicy {
  double radius = 1.0;
  std::size_t num_releases = 1;
  std::size_t max_planes = kUnboundedPlanes;
  /// Defaults to `radius` when unset.
  std::optional<double> walk_step_max;

  double step() const { return walk_step_max.value_or(radius); }
  void validate() const;
};

struct ReleaseStep {
  std::size_t release_index = 0;  // 1-based
  Vec3 center = Vec3::Zero();
  bool walk_restarted = false;
  /// Points of the source space newly revealed by this step.
  std::size_t new_points = 0;
};

/// One user walking through a space: random-walk centres, accumulation and
/// subsumption. The released cloud for any cap can be read after each step.
class ReleaseSession {
 public:
  ReleaseSession(const PointCloud& space, ReleasePolicy policy, GeneralizationParams params,
                 std::uint64_t seed);

  ReleaseStep step();
  const ReleaseState& state() const { return state_; }
  const ReleasePolicy& policy() const { return policy_; }
  std::size_t releases_done() const { return done_; }

 private:
  const PointCloud* space_;
  ReleasePolicy policy_;
  GeneralizationParams params_;
  std::uint64_t seed_;
  Rng rng_;
  ReleaseState state_;
  std::vector<std::uint8_t> revealed_;
  std::optional<Vec3> center_;
  std::size_t done_ = 0;
};

struct ReleaseOutput {
  PointCloud released;           ///< in the query frame
  PointCloud released_reference; ///< the same points in the reference frame
  Vec3 true_center = Vec3::Zero();
  RigidTransform transform;      ///< reference frame -> query frame
  std::size_t plane_count = 0;
  std::size_t accumulated_count = 0;
  bool walk_restarted = false;
};

/// Full successive pipeline under one policy: every release is re-expressed by
/// a single random rigid transform drawn for the whole sequence.
std::vector<ReleaseOutput> release_sequence(const PointCloud& space, const ReleasePolicy& policy,
                                            const GeneralizationParams& params,
                                            std::uint64_t seed);

}  // namespace mrpriv
