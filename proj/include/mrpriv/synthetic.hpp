#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "mrpriv/geometry.hpp"
#include "mrpriv/mechanisms.hpp"

namespace mrpriv {

/// Closed interval used for randomized clutter dimensions.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct FurnitureCatalogue {
  std::vector<Vec3> boxes;                         ///< width, depth, height
  std::vector<std::pair<double, double>> cylinders;  ///< radius, height
};

/// A box-shaped room with optional ceiling plus box and cylinder clutter.
/// Clutter dimensions come from the catalogue when it is non-empty, else
/// from the ranges.
struct SyntheticSpaceSpec {
  Vec3 extents{5.0, 4.0, 2.7};
  bool ceiling = true;
  std::size_t boxes = 0;
  Range box_width{0.5, 1.6};   ///< horizontal edges
  Range box_height{0.4, 1.2};
  std::size_t cylinders = 0;
  Range cylinder_radius{0.15, 0.4};
  Range cylinder_height{0.4, 1.2};
  FurnitureCatalogue catalogue;
  double density = 40.0;       ///< points per square metre
  double noise_sigma = 0.0;    ///< metres, applied along the true normal
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedSpace {
  PointCloud cloud;
  /// Every planar surface; inliers are the points sampled from it.
  std::vector<Plane> truth_planes;
};

/// Samples every visible surface uniformly at the given density. Room shell
/// normals face into the room; clutter normals face outward. Floor samples
/// under clutter and samples buried inside another object are discarded.
GeneratedSpace generate_space(const SyntheticSpaceSpec& spec, int label);

/// Seven rooms of distinct extents and layouts furnished from one shared
/// catalogue, mirroring a small office / home capture campaign.
std::vector<SyntheticSpaceSpec> default_dataset_specs(std::uint64_t seed, double density,
                                                      double noise_sigma);

}  // namespace mrpriv
