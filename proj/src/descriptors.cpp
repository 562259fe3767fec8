#include "mrpriv/descriptors.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "mrpriv/binary_io.hpp"

namespace mrpriv {

void SpinParams::validate() const {
  if (!(bin_size > 0.0) || !std::isfinite(bin_size))
    throw PreconditionError("SpinParams: bin_size must be positive");
  if (image_width < 2) throw PreconditionError("SpinParams: image_width must be >= 2");
}

bool SpinDescriptor::is_zero() const {
  for (double v : values)
    if (v != 0.0) return false;
  return true;
}

std::vector<KeyPoint> select_keypoints(const PointCloud& cloud, std::size_t factor) {
  if (factor == 0) throw PreconditionError("select_keypoints: factor must be positive");
  std::vector<KeyPoint> out;
  if (!cloud.has_normals) return out;
  out.reserve(cloud.size() / factor + 1);
  for (std::size_t i = 0; i < cloud.size(); i += factor) {
    if (cloud.is_reliable(i)) out.push_back({i, cloud[i]});
  }
  return out;
}

std::vector<double> spin_histogram(const KeyPoint& kp, const PointCloud& cloud,
                                   const SpatialIndex& index, const SpinParams& params) {
  params.validate();
  const auto width = static_cast<long>(params.alpha_bins());
  const auto height = static_cast<long>(params.beta_bins());
  std::vector<double> hist(params.length(), 0.0);

  const Vec3& p = kp.point.position;
  const Vec3& n = kp.point.normal;
  const double cos_limit = std::cos(params.support_angle_deg * std::numbers::pi / 180.0);

  auto deposit = [&](long col, long row, double w) {
    if (w == 0.0 || col < 0 || col >= width || row < 0 || row >= height) return;
    hist[static_cast<std::size_t>(row * width + col)] += w;
  };

  for (std::size_t j : index.radius_search(p, params.support_radius())) {
    if (params.cull_by_support_angle && cloud.is_reliable(j) &&
        cloud[j].normal.dot(n) < cos_limit)
      continue;
    const Vec3 d = cloud[j].position - p;
    const double beta = n.dot(d);
    const double alpha = std::sqrt(std::max(0.0, d.squaredNorm() - beta * beta));

    const double a = alpha / params.bin_size;
    const double b = beta / params.bin_size + static_cast<double>(params.image_width);
    const double a0 = std::floor(a);
    const double b0 = std::floor(b);
    const double fa = a - a0;
    const double fb = b - b0;
    const auto col = static_cast<long>(a0);
    const auto row = static_cast<long>(b0);
    deposit(col, row, (1.0 - fa) * (1.0 - fb));
    deposit(col + 1, row, fa * (1.0 - fb));
    deposit(col, row + 1, (1.0 - fa) * fb);
    deposit(col + 1, row + 1, fa * fb);
  }
  return hist;
}

SpinDescriptor spin_image(const KeyPoint& kp, const PointCloud& cloud, const SpatialIndex& index,
                          const SpinParams& params) {
  SpinDescriptor desc{spin_histogram(kp, cloud, index, params)};
  double norm2 = 0.0;
  for (double v : desc.values) norm2 += v * v;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : desc.values) v *= inv;
  }
  return desc;
}

SpinDescriptor spin_image(const KeyPoint& kp, const PointCloud& cloud, const SpinParams& params) {
  const SpatialIndex index(cloud);
  return spin_image(kp, cloud, index, params);
}

DescribedSpace describe(const PointCloud& cloud, const SpinParams& params, std::size_t factor) {
  params.validate();
  if (!cloud.has_normals) throw PreconditionError("describe: cloud has no normals");
  DescribedSpace space;
  space.label = cloud.label.value_or(-1);
  space.params = params;
  if (cloud.empty()) throw UnusableSpaceError("describe: empty cloud");

  const SpatialIndex index(cloud);
  for (const KeyPoint& kp : select_keypoints(cloud, factor)) {
    SpinDescriptor desc = spin_image(kp, cloud, index, params);
    if (desc.is_zero()) continue;
    space.keypoints.push_back(kp);
    space.descriptors.push_back(std::move(desc));
  }
  if (space.keypoints.empty()) throw UnusableSpaceError("describe: no usable descriptors");
  return space;
}

double descriptor_distance(const SpinDescriptor& a, const SpinDescriptor& b) {
  if (a.values.size() != b.values.size())
    throw PreconditionError("descriptor_distance: length mismatch");
  return std::sqrt(squared_distance(a.values.data(), b.values.data(), a.values.size()));
}

namespace {
constexpr char kSpaceMagic[9] = "MRPDSC01";
constexpr std::uint32_t kSpaceVersion = 1;
}  // namespace

void write_described_space(std::ostream& out, const DescribedSpace& space) {
  using binio::put;
  binio::put_magic(out, kSpaceMagic);
  put<std::uint32_t>(out, kSpaceVersion);
  put<std::int32_t>(out, space.label);
  put<double>(out, space.params.bin_size);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(space.params.image_width));
  put<std::uint8_t>(out, space.params.cull_by_support_angle ? 1 : 0);
  put<double>(out, space.params.support_angle_deg);
  put<std::uint64_t>(out, space.keypoints.size());
  const std::size_t len = space.params.length();
  for (std::size_t i = 0; i < space.keypoints.size(); ++i) {
    const KeyPoint& kp = space.keypoints[i];
    put<std::uint64_t>(out, kp.source_index);
    for (int a = 0; a < 3; ++a) put<double>(out, kp.point.position[a]);
    for (int a = 0; a < 3; ++a) put<double>(out, kp.point.normal[a]);
    if (space.descriptors[i].values.size() != len)
      throw PreconditionError("write_described_space: descriptor length mismatch");
    for (double v : space.descriptors[i].values) put<double>(out, v);
  }
}

DescribedSpace read_described_space(std::istream& in) {
  using binio::get;
  binio::expect_magic(in, kSpaceMagic);
  const auto version = get<std::uint32_t>(in);
  if (version != kSpaceVersion)
    throw binio::FormatError("descriptor cache: unsupported version " + std::to_string(version));
  DescribedSpace space;
  space.label = get<std::int32_t>(in);
  space.params.bin_size = get<double>(in);
  space.params.image_width = get<std::uint32_t>(in);
  space.params.cull_by_support_angle = get<std::uint8_t>(in) != 0;
  space.params.support_angle_deg = get<double>(in);
  space.params.validate();
  const auto count = get<std::uint64_t>(in);
  const std::size_t len = space.params.length();
  space.keypoints.reserve(count);
  space.descriptors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    KeyPoint kp;
    kp.source_index = get<std::uint64_t>(in);
    for (int a = 0; a < 3; ++a) kp.point.position[a] = get<double>(in);
    for (int a = 0; a < 3; ++a) kp.point.normal[a] = get<double>(in);
    SpinDescriptor d;
    d.values.resize(len);
    for (double& v : d.values) v = get<double>(in);
    space.keypoints.push_back(kp);
    space.descriptors.push_back(std::move(d));
  }
  return space;
}

void save_described_space(const DescribedSpace& space, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_described_space(out, space);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DescribedSpace load_described_space(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_described_space(in);
}

}  // namespace mrpriv
