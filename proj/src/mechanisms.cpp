#include "mrpriv/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "mrpriv/spatial_index.hpp"

namespace mrpriv {

void GeneralizationParams::validate() const {
  if (!(dist_eps > 0.0)) throw PreconditionError("GeneralizationParams: dist_eps must be positive");
  if (!(normal_angle_max_deg > 0.0))
    throw PreconditionError("GeneralizationParams: normal_angle_max must be positive");
  if (min_inliers == 0) throw PreconditionError("GeneralizationParams: min_inliers must be positive");
  if (candidates_per_round == 0)
    throw PreconditionError("GeneralizationParams: candidates_per_round must be positive");
}

bool GeneralizationParams::accepts(const Plane& plane, const OrientedPoint& p) const {
  if (std::abs(plane.signed_distance(p.position)) > dist_eps) return false;
  const double cos_max = std::cos(normal_angle_max_deg * std::numbers::pi / 180.0);
  return std::abs(plane.normal.dot(p.normal)) >= cos_max;
}

namespace {

std::vector<std::size_t> collect_inliers(const PointCloud& cloud,
                                         const std::vector<std::size_t>& pool, const Plane& plane,
                                         const GeneralizationParams& params) {
  std::vector<std::size_t> out;
  for (std::size_t i : pool)
    if (params.accepts(plane, cloud[i])) out.push_back(i);
  return out;
}

std::size_t count_inliers(const PointCloud& cloud, const std::vector<std::size_t>& pool,
                          const Plane& plane, const GeneralizationParams& params) {
  std::size_t n = 0;
  for (std::size_t i : pool)
    if (params.accepts(plane, cloud[i])) ++n;
  return n;
}

/// Total least-squares plane through the inliers, normal signed like `hint`.
Plane fit_plane(const PointCloud& cloud, const std::vector<std::size_t>& inliers, const Vec3& hint) {
  Vec3 mean = Vec3::Zero();
  for (std::size_t i : inliers) mean += cloud[i].position;
  mean /= static_cast<double>(inliers.size());
  Mat3 cov = Mat3::Zero();
  for (std::size_t i : inliers) {
    const Vec3 d = cloud[i].position - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Plane plane;
  plane.normal = eig.eigenvectors().col(0).normalized();
  if (plane.normal.dot(hint) < 0.0) plane.normal = -plane.normal;
  plane.offset = plane.normal.dot(mean);
  return plane;
}

void remove_sorted(std::vector<std::size_t>& pool, const std::vector<std::size_t>& taken) {
  std::vector<std::size_t> rest;
  rest.reserve(pool.size() - std::min(pool.size(), taken.size()));
  std::set_difference(pool.begin(), pool.end(), taken.begin(), taken.end(),
                      std::back_inserter(rest));
  pool = std::move(rest);
}

}  // namespace

std::vector<Plane> ransac_planes_subset(const PointCloud& cloud,
                                        const std::vector<std::size_t>& candidates,
                                        const GeneralizationParams& params, std::uint64_t seed,
                                        std::size_t first_sequence) {
  params.validate();
  std::vector<Plane> planes;
  if (!cloud.has_normals) throw PreconditionError("ransac_planes: cloud has no normals");

  // Unreliable normals can neither seed nor join a plane.
  std::vector<std::size_t> pool;
  pool.reserve(candidates.size());
  for (std::size_t i : candidates)
    if (cloud.is_reliable(i)) pool.push_back(i);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  Rng rng(seed);
  while (pool.size() >= params.min_inliers) {
    Plane best;
    std::size_t best_count = 0;
    for (std::size_t c = 0; c < params.candidates_per_round; ++c) {
      const OrientedPoint& seed_point = cloud[pool[uniform_index(rng, pool.size())]];
      Plane hyp;
      hyp.normal = seed_point.normal;
      hyp.offset = hyp.normal.dot(seed_point.position);
      const std::size_t count = count_inliers(cloud, pool, hyp, params);
      if (count > best_count) {
        best_count = count;
        best = hyp;
      }
    }
    if (best_count < params.min_inliers) break;

    best.inliers = collect_inliers(cloud, pool, best, params);
    if (params.refit) {
      Plane refit = fit_plane(cloud, best.inliers, best.normal);
      refit.inliers = collect_inliers(cloud, pool, refit, params);
      if (refit.inliers.size() >= params.min_inliers) best = std::move(refit);
    }
    best.sequence = first_sequence + planes.size();
    remove_sorted(pool, best.inliers);
    planes.push_back(std::move(best));
  }
  return planes;
}

std::vector<Plane> ransac_planes(const PointCloud& cloud, const GeneralizationParams& params,
                                 std::uint64_t seed) {
  std::vector<std::size_t> all(cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return ransac_planes_subset(cloud, all, params, seed, 0);
}

namespace {

OrientedPoint project_point(const OrientedPoint& p, const Plane& plane, bool has_normals) {
  OrientedPoint out;
  out.position = plane.project(p.position);
  out.normal = plane.normal;
  if (has_normals && plane.normal.dot(p.normal) < 0.0) out.normal = -plane.normal;
  return out;
}

PointCloud project_assigned(const PointCloud& cloud, const std::vector<long>& owner,
                            const std::vector<Plane>& planes) {
  PointCloud out;
  out.has_normals = true;
  out.label = cloud.label;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (owner[i] < 0) continue;
    out.points.push_back(
        project_point(cloud[i], planes[static_cast<std::size_t>(owner[i])], cloud.has_normals));
  }
  return out;
}

}  // namespace

PointCloud project_to_planes(const PointCloud& cloud, const std::vector<Plane>& planes) {
  std::vector<long> owner(cloud.size(), -1);
  for (std::size_t p = 0; p < planes.size(); ++p) {
    for (std::size_t i : planes[p].inliers) {
      if (i >= cloud.size()) throw PreconditionError("project_to_planes: inlier out of range");
      if (owner[i] < 0) owner[i] = static_cast<long>(p);
    }
  }
  return project_assigned(cloud, owner, planes);
}

namespace {

void subsume_in_place(ReleaseState& state, const PointCloud& new_points,
                      const GeneralizationParams& params, std::uint64_t seed) {
  params.validate();
  if (!new_points.has_normals) throw PreconditionError("subsume: new points lack normals");
  if (state.accumulated.empty()) {
    state.accumulated.has_normals = true;
    state.accumulated.label = new_points.label;
  }
  const std::size_t first_new = state.accumulated.size();
  for (std::size_t i = 0; i < new_points.size(); ++i) {
    state.accumulated.points.push_back(new_points[i]);
    if (!state.accumulated.unreliable.empty() || !new_points.is_reliable(i)) {
      state.accumulated.unreliable.resize(first_new + i, 0);
      state.accumulated.unreliable.push_back(new_points.is_reliable(i) ? 0 : 1);
    }
  }
  state.assignment.resize(state.accumulated.size(), -1);

  std::vector<std::size_t> pool = state.residual;
  for (std::size_t i = first_new; i < state.accumulated.size(); ++i) {
    bool claimed = false;
    if (state.accumulated.is_reliable(i)) {
      for (std::size_t p = 0; p < state.planes.size(); ++p) {
        if (params.accepts(state.planes[p], state.accumulated[i])) {
          state.planes[p].inliers.push_back(i);
          state.assignment[i] = static_cast<long>(p);
          claimed = true;
          break;
        }
      }
    }
    if (!claimed) pool.push_back(i);
  }
  std::sort(pool.begin(), pool.end());

  auto fresh = ransac_planes_subset(state.accumulated, pool, params, seed, state.planes.size());
  for (Plane& plane : fresh) {
    const std::size_t id = state.planes.size();
    for (std::size_t i : plane.inliers) state.assignment[i] = static_cast<long>(id);
    remove_sorted(pool, plane.inliers);
    state.planes.push_back(std::move(plane));
  }
  state.residual = std::move(pool);
}

}  // namespace

ReleaseState subsume(ReleaseState state, const PointCloud& new_points,
                     const GeneralizationParams& params, std::uint64_t seed) {
  subsume_in_place(state, new_points, params, seed);
  return state;
}

std::vector<std::size_t> released_plane_ids(const ReleaseState& state, std::size_t max_planes) {
  if (max_planes == 0) throw PreconditionError("conservative_release: max_planes must be >= 1");
  std::vector<std::size_t> ids(state.planes.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    const auto na = state.planes[a].inliers.size();
    const auto nb = state.planes[b].inliers.size();
    if (na != nb) return na > nb;
    return state.planes[a].sequence < state.planes[b].sequence;
  });
  if (ids.size() > max_planes) ids.resize(max_planes);
  return ids;
}

PointCloud conservative_release(const ReleaseState& state, std::size_t max_planes) {
  const auto ids = released_plane_ids(state, max_planes);
  std::vector<std::uint8_t> released(state.planes.size(), 0);
  for (std::size_t id : ids) released[id] = 1;
  std::vector<long> owner(state.assignment.size(), -1);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    const long a = state.assignment[i];
    if (a >= 0 && released[static_cast<std::size_t>(a)]) owner[i] = a;
  }
  return project_assigned(state.accumulated, owner, state.planes);
}

void ReleasePolicy::validate() const {
  if (!(radius > 0.0)) throw PreconditionError("ReleasePolicy: radius must be positive");
  if (num_releases == 0) throw PreconditionError("ReleasePolicy: num_releases must be >= 1");
  if (max_planes == 0) throw PreconditionError("ReleasePolicy: max_planes must be >= 1");
  if (walk_step_max && !(*walk_step_max > 0.0))
    throw PreconditionError("ReleasePolicy: walk_step_max must be positive");
}

ReleaseSession::ReleaseSession(const PointCloud& space, ReleasePolicy policy,
                               GeneralizationParams params, std::uint64_t seed)
    : space_(&space), policy_(policy), params_(params), seed_(seed),
      rng_(derive_seed(seed, {0x77616c6bULL})), revealed_(space.size(), 0) {
  policy_.validate();
  params_.validate();
  if (space.empty()) throw PreconditionError("ReleaseSession: empty space");
  if (!space.has_normals) throw PreconditionError("ReleaseSession: space lacks normals");
  state_.accumulated.has_normals = true;
  state_.accumulated.label = space.label;
}

ReleaseStep ReleaseSession::step() {
  const PointCloud& space = *space_;
  ReleaseStep out;
  out.release_index = done_ + 1;

  std::size_t center_idx = 0;
  if (!center_) {
    center_idx = uniform_index(rng_, space.size());
  } else {
    const auto reachable = partial_indices(space, *center_, policy_.step());
    if (reachable.empty()) {
      out.walk_restarted = true;
      center_idx = uniform_index(rng_, space.size());
    } else {
      center_idx = reachable[uniform_index(rng_, reachable.size())];
    }
  }
  center_ = space[center_idx].position;
  out.center = *center_;

  PointCloud fresh;
  fresh.has_normals = true;
  fresh.label = space.label;
  for (std::size_t i : partial_indices(space, *center_, policy_.radius)) {
    if (revealed_[i]) continue;
    revealed_[i] = 1;
    fresh.points.push_back(space[i]);
    if (!space.is_reliable(i)) {
      fresh.unreliable.resize(fresh.size() - 1, 0);
      fresh.unreliable.push_back(1);
    } else if (!fresh.unreliable.empty()) {
      fresh.unreliable.push_back(0);
    }
    state_.source_indices.push_back(i);
  }
  out.new_points = fresh.size();
  subsume_in_place(state_, fresh, params_, derive_seed(seed_, {0x7375627369ULL, done_}));
  ++done_;
  return out;
}

std::vector<ReleaseOutput> release_sequence(const PointCloud& space, const ReleasePolicy& policy,
                                            const GeneralizationParams& params,
                                            std::uint64_t seed) {
  ReleaseSession session(space, policy, params, seed);
  const RigidTransform transform = random_rigid_transform(derive_seed(seed, {0x7466ULL}));
  std::vector<ReleaseOutput> out;
  out.reserve(policy.num_releases);
  for (std::size_t r = 0; r < policy.num_releases; ++r) {
    const ReleaseStep step = session.step();
    ReleaseOutput o;
    o.released_reference = conservative_release(session.state(), policy.max_planes);
    o.released = apply_transform(o.released_reference, transform);
    o.true_center = step.center;
    o.transform = transform;
    o.plane_count = session.state().plane_count();
    o.accumulated_count = session.state().accumulated.size();
    o.walk_restarted = step.walk_restarted;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace mrpriv
