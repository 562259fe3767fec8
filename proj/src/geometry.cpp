#include "mrpriv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "mrpriv/rng.hpp"
#include "mrpriv/spatial_index.hpp"

namespace mrpriv {

void PointCloud::validate() const {
  if (!unreliable.empty() && unreliable.size() != points.size())
    throw PreconditionError("PointCloud: reliability mask size mismatch");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!p.position.allFinite()) throw PreconditionError("PointCloud: non-finite position");
    if (!has_normals) continue;
    if (!p.normal.allFinite()) throw PreconditionError("PointCloud: non-finite normal");
    if (is_reliable(i) && std::abs(p.normal.norm() - 1.0) > 1e-6)
      throw PreconditionError("PointCloud: normal is not unit length");
  }
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 gram = rotation * rotation.transpose();
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) {
    p.position = t.apply_point(p.position);
    if (cloud.has_normals) p.normal = t.apply_normal(p.normal);
  }
  return out;
}

RigidTransform random_rigid_transform(std::uint64_t seed, double translation_range) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = gauss(rng);
  } while (q.norm() < 1e-12);
  q.normalize();
  // A normalized isotropic Gaussian 4-vector is uniform on S^3, hence the
  // induced rotation is Haar-uniform on SO(3).
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  RigidTransform t;
  t.rotation = quat.toRotationMatrix();
  std::uniform_real_distribution<double> shift(-translation_range, translation_range);
  for (int i = 0; i < 3; ++i) t.translation[i] = shift(rng);
  return t;
}

double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Vec3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw PreconditionError("centroid: empty cloud");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : cloud.points) sum += p.position;
  return sum / static_cast<double>(cloud.size());
}

std::vector<std::size_t> partial_indices(const PointCloud& cloud, const Vec3& center,
                                         double radius) {
  if (!(radius >= 0.0)) throw PreconditionError("extract_partial: radius must be non-negative");
  const double r2 = radius * radius;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (squared_distance(cloud[i].position.data(), center.data(), 3) <= r2) idx.push_back(i);
  }
  return idx;
}

PointCloud extract_partial(const PointCloud& cloud, const Vec3& center, double radius) {
  return subset(cloud, partial_indices(cloud, center, radius));
}

PointCloud subset(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
  PointCloud out;
  out.has_normals = cloud.has_normals;
  out.label = cloud.label;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(cloud.points.at(i));
  if (!cloud.unreliable.empty()) {
    out.unreliable.reserve(indices.size());
    for (std::size_t i : indices) out.unreliable.push_back(cloud.unreliable[i]);
  }
  return out;
}

PointCloud estimate_normals(const PointCloud& cloud, std::size_t k) {
  if (k == 0) throw PreconditionError("estimate_normals: k must be positive");
  if (cloud.size() < k + 1) throw PreconditionError("estimate_normals: cloud smaller than k+1");

  Vec3 lo = cloud[0].position, hi = cloud[0].position;
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p.position);
    hi = hi.cwiseMax(p.position);
  }
  const Vec3 bbox_center = 0.5 * (lo + hi);

  const SpatialIndex index(cloud);
  PointCloud out = cloud;
  out.has_normals = true;
  out.unreliable.assign(cloud.size(), 0);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = index.knn(cloud[i].position, k + 1);
    Vec3 mean = Vec3::Zero();
    for (const auto& n : nbrs) mean += cloud[n.index].position;
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& n : nbrs) {
      const Vec3 d = cloud[n.index].position - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 evals = eig.eigenvalues();  // ascending
    // A plane needs two independent in-plane directions.
    if (evals[2] <= 0.0 || evals[1] <= 1e-12 * evals[2]) {
      out.unreliable[i] = 1;
      out[i].normal = Vec3::UnitZ();
      continue;
    }
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.dot(cloud[i].position - bbox_center) < 0.0) n = -n;
    out[i].normal = n;
  }
  return out;
}

}  // namespace mrpriv
