#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "mrpriv/geometry.hpp"
#include "mrpriv/spatial_index.hpp"

namespace mrpriv {

/// Spin-image binning. The radial coordinate alpha has `image_width` bins and
/// the signed height beta has 2*image_width bins centred on beta = 0; bin
/// centres sit at integer multiples of `bin_size` so the keypoint itself lands
/// entirely in cell (alpha = 0, beta = 0).
struct SpinParams {
  double bin_size = 0.10;
  std::size_t image_width = 8;
  /// Optional culling of points whose normal deviates from the keypoint
  /// normal by more than `support_angle_deg`. Off by default.
  bool cull_by_support_angle = false;
  double support_angle_deg = 60.0;

  double support_radius() const { return bin_size * static_cast<double>(image_width); }
  std::size_t alpha_bins() const { return image_width; }
  std::size_t beta_bins() const { return 2 * image_width; }
  std::size_t length() const { return alpha_bins() * beta_bins(); }
  void validate() const;
};

struct KeyPoint {
  std::size_t source_index = 0;
  OrientedPoint point;
};

/// Flat, non-negative, L2-normalized histogram laid out row-major by
/// (beta row, alpha column). The zero vector marks an empty support.
struct SpinDescriptor {
  std::vector<double> values;

  bool is_zero() const;
};

struct DescribedSpace {
  int label = -1;
  SpinParams params;
  std::vector<KeyPoint> keypoints;
  std::vector<SpinDescriptor> descriptors;

  std::size_t size() const { return keypoints.size(); }
};

/// Raised when every descriptor of a cloud is empty.
class UnusableSpaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every `factor`-th point of the cloud in stored order, skipping points whose
/// normal is unreliable. Stored order is preserved by apply_transform, so the
/// selection commutes with rigid motions.
std::vector<KeyPoint> select_keypoints(const PointCloud& cloud, std::size_t factor = 5);

/// Spin image of `kp` over the cloud's points within the support radius, with
/// each contribution spread bilinearly over the four surrounding (alpha, beta)
/// cells. `index` must be built over `cloud`.
SpinDescriptor spin_image(const KeyPoint& kp, const PointCloud& cloud, const SpatialIndex& index,
                          const SpinParams& params);

/// Convenience overload that builds a temporary index.
SpinDescriptor spin_image(const KeyPoint& kp, const PointCloud& cloud, const SpinParams& params);

/// Un-normalized histogram, exposed for support-monotonicity checks.
std::vector<double> spin_histogram(const KeyPoint& kp, const PointCloud& cloud,
                                   const SpatialIndex& index, const SpinParams& params);

/// select_keypoints followed by spin_image per keypoint; zero descriptors are
/// dropped with their keypoints. Throws UnusableSpaceError if none remain.
DescribedSpace describe(const PointCloud& cloud, const SpinParams& params = {},
                        std::size_t factor = 5);

double descriptor_distance(const SpinDescriptor& a, const SpinDescriptor& b);

// Binary cache: "MRPDSC01" magic, u32 version, little-endian payload.
void write_described_space(std::ostream& out, const DescribedSpace& space);
DescribedSpace read_described_space(std::istream& in);
void save_described_space(const DescribedSpace& space, const std::filesystem::path& path);
DescribedSpace load_described_space(const std::filesystem::path& path);

}  // namespace mrpriv
