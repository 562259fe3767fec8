#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mrpriv {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Raised when an operation's input violates its documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OrientedPoint {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

/// An ordered set of oriented points, optionally labelled with the space it
/// was captured in. Normals may be absent (e.g. loaded from a PLY without
/// nx/ny/nz) or individually flagged unreliable by normal estimation.
struct PointCloud {
  std::vector<OrientedPoint> points;
  bool has_normals = true;
  /// Per-point flag; empty means every normal is reliable.
  std::vector<std::uint8_t> unreliable;
  std::optional<int> label;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const OrientedPoint& operator[](std::size_t i) const { return points[i]; }
  OrientedPoint& operator[](std::size_t i) { return points[i]; }

  bool is_reliable(std::size_t i) const {
    return has_normals && (unreliable.empty() || unreliable[i] == 0);
  }

  /// Throws PreconditionError if a coordinate is non-finite or a normal is not
  /// unit length (within 1e-6) while normals are present.
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply_point(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_normal(const Vec3& n) const { return rotation * n; }
  RigidTransform inverse() const;
  bool is_valid(double tol = 1e-9) const;
};

/// Half-width of the translation box used by random_rigid_transform.
inline constexpr double kDefaultTranslationRange = 10.0;

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t);

/// Rotation uniform over SO(3) (unit quaternion from four Gaussians) and
/// translation uniform in [-range, range]^3. Deterministic per seed.
RigidTransform random_rigid_transform(std::uint64_t seed,
                                      double translation_range = kDefaultTranslationRange);

/// Rotation angle in radians, in [0, pi].
double rotation_angle(const Mat3& r);

Vec3 centroid(const PointCloud& cloud);

/// Points with ||p - center|| <= radius, in original order. Empty results are legal.
PointCloud extract_partial(const PointCloud& cloud, const Vec3& center, double radius);

/// Same selection as extract_partial, returned as indices into `cloud`.
std::vector<std::size_t> partial_indices(const PointCloud& cloud, const Vec3& center,
                                         double radius);

/// Least-squares plane normals over the k nearest neighbours of every point
/// (the point itself plus k others). Normals are oriented so that
/// n . (p - bbox_center) >= 0. Collinear or coincident neighbourhoods are
/// flagged unreliable.
PointCloud estimate_normals(const PointCloud& cloud, std::size_t k);

PointCloud subset(const PointCloud& cloud, const std::vector<std::size_t>& indices);

}  // namespace mrpriv
