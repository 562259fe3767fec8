#include "mrpriv/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <tuple>

#include <Eigen/Geometry>

#include "mrpriv/rng.hpp"

namespace mrpriv {

void SyntheticSpaceSpec::validate() const {
  if (!(extents.minCoeff() > 0.0)) throw PreconditionError("SyntheticSpaceSpec: extents must be positive");
  if (!(density > 0.0)) throw PreconditionError("SyntheticSpaceSpec: density must be positive");
  if (!(noise_sigma >= 0.0)) throw PreconditionError("SyntheticSpaceSpec: noise must be non-negative");
  for (const Range* r : {&box_width, &box_height, &cylinder_radius, &cylinder_height})
    if (!(r->lo > 0.0 && r->hi >= r->lo)) throw PreconditionError("SyntheticSpaceSpec: bad range");
}

namespace {

struct Box {
  Vec3 center_base;  // centre of the bottom face
  double yaw = 0.0;
  Vec3 size;         // x, y, z
  Vec3 ax() const { return {std::cos(yaw), std::sin(yaw), 0.0}; }
  Vec3 ay() const { return {-std::sin(yaw), std::cos(yaw), 0.0}; }
  bool contains(const Vec3& p) const {
    const Vec3 d = p - center_base;
    const double lx = d.dot(ax()), ly = d.dot(ay());
    return std::abs(lx) < 0.5 * size.x() && std::abs(ly) < 0.5 * size.y() && d.z() >= -1e-9 &&
           d.z() < size.z();
  }
};

struct Cylinder {
  Vec3 center_base;
  double radius = 0.0;
  double height = 0.0;
  bool contains(const Vec3& p) const {
    const Vec3 d = p - center_base;
    return std::hypot(d.x(), d.y()) < radius && d.z() >= -1e-9 && d.z() < height;
  }
};

class Sampler {
 public:
  Sampler(const SyntheticSpaceSpec& spec, Rng& rng, const std::vector<Box>& boxes,
          const std::vector<Cylinder>& cylinders, GeneratedSpace& out)
      : spec_(spec), rng_(rng), boxes_(boxes), cylinders_(cylinders), out_(out) {}

  /// Parallelogram origin + s*u + t*v with outward normal n.
  void rectangle(const Vec3& origin, const Vec3& u, const Vec3& v, const Vec3& n, long skip_box) {
    Plane truth;
    truth.normal = n;
    truth.offset = n.dot(origin);
    truth.sequence = out_.truth_planes.size();
    const std::size_t count = sample_count(u.cross(v).norm());
    for (std::size_t i = 0; i < count; ++i) {
      const Vec3 p = origin + unit_(rng_) * u + unit_(rng_) * v;
      emit(p, n, skip_box, -1, &truth);
    }
    if (!truth.inliers.empty()) out_.truth_planes.push_back(std::move(truth));
  }

  void disk(const Vec3& center, double radius, const Vec3& n, long skip_cyl) {
    Plane truth;
    truth.normal = n;
    truth.offset = n.dot(center);
    truth.sequence = out_.truth_planes.size();
    const std::size_t count = sample_count(std::numbers::pi * radius * radius);
    for (std::size_t i = 0; i < count; ++i) {
      const double r = radius * std::sqrt(unit_(rng_));
      const double th = 2.0 * std::numbers::pi * unit_(rng_);
      emit(center + Vec3(r * std::cos(th), r * std::sin(th), 0.0), n, -1, skip_cyl, &truth);
    }
    if (!truth.inliers.empty()) out_.truth_planes.push_back(std::move(truth));
  }

  void cylinder_side(const Cylinder& c, long skip_cyl) {
    const std::size_t count = sample_count(2.0 * std::numbers::pi * c.radius * c.height);
    for (std::size_t i = 0; i < count; ++i) {
      const double th = 2.0 * std::numbers::pi * unit_(rng_);
      const Vec3 n(std::cos(th), std::sin(th), 0.0);
      emit(c.center_base + c.radius * n + Vec3(0, 0, c.height * unit_(rng_)), n, -1, skip_cyl,
           nullptr);
    }
  }

 private:
  std::size_t sample_count(double area) const {
    return static_cast<std::size_t>(std::llround(area * spec_.density));
  }

  void emit(const Vec3& p, const Vec3& n, long skip_box, long skip_cyl, Plane* truth) {
    for (std::size_t b = 0; b < boxes_.size(); ++b)
      if (static_cast<long>(b) != skip_box && boxes_[b].contains(p)) return;
    for (std::size_t c = 0; c < cylinders_.size(); ++c)
      if (static_cast<long>(c) != skip_cyl && cylinders_[c].contains(p)) return;
    OrientedPoint pt;
    pt.normal = n;
    pt.position = p;
    if (spec_.noise_sigma > 0.0) pt.position += noise_(rng_) * n;
    if (truth) truth->inliers.push_back(out_.cloud.size());
    out_.cloud.points.push_back(pt);
  }

  const SyntheticSpaceSpec& spec_;
  Rng& rng_;
  const std::vector<Box>& boxes_;
  const std::vector<Cylinder>& cylinders_;
  GeneratedSpace& out_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> noise_{0.0, 1.0};

 public:
  void set_noise(double sigma) { noise_ = std::normal_distribution<double>(0.0, sigma); }
};

double draw(Rng& rng, const Range& r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

GeneratedSpace generate_space(const SyntheticSpaceSpec& spec, int label) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(label) + 1}));
  const double X = spec.extents.x(), Y = spec.extents.y(), Z = spec.extents.z();

  std::vector<Box> boxes;
  for (std::size_t i = 0; i < spec.boxes; ++i) {
    Box b;
    if (spec.catalogue.boxes.empty())
      b.size = {draw(rng, spec.box_width), draw(rng, spec.box_width), draw(rng, spec.box_height)};
    else
      b.size = spec.catalogue.boxes[uniform_index(rng, spec.catalogue.boxes.size())];
    b.size.z() = std::min(b.size.z(), 0.9 * Z);
    b.yaw = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
    const double reach = 0.5 * std::hypot(b.size.x(), b.size.y()) + 0.05;
    const double mx = std::max(reach, 0.5 * X), my = std::max(reach, 0.5 * Y);
    b.center_base = {std::uniform_real_distribution<double>(std::min(reach, mx), std::max(X - reach, mx))(rng),
                     std::uniform_real_distribution<double>(std::min(reach, my), std::max(Y - reach, my))(rng),
                     0.0};
    boxes.push_back(b);
  }
  std::vector<Cylinder> cylinders;
  for (std::size_t i = 0; i < spec.cylinders; ++i) {
    Cylinder c;
    if (spec.catalogue.cylinders.empty()) {
      c.radius = draw(rng, spec.cylinder_radius);
      c.height = draw(rng, spec.cylinder_height);
    } else {
      std::tie(c.radius, c.height) = spec.catalogue.cylinders[uniform_index(rng, spec.catalogue.cylinders.size())];
    }
    c.height = std::min(c.height, 0.9 * Z);
    const double reach = c.radius + 0.05;
    c.center_base = {std::uniform_real_distribution<double>(reach, std::max(reach, X - reach))(rng),
                     std::uniform_real_distribution<double>(reach, std::max(reach, Y - reach))(rng),
                     0.0};
    cylinders.push_back(c);
  }

  GeneratedSpace out;
  out.cloud.label = label;
  out.cloud.has_normals = true;
  Sampler sampler(spec, rng, boxes, cylinders, out);
  sampler.set_noise(spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);

  const Vec3 ex(X, 0, 0), ey(0, Y, 0), ez(0, 0, Z);
  sampler.rectangle(Vec3::Zero(), ex, ey, Vec3::UnitZ(), -1);             // floor
  if (spec.ceiling) sampler.rectangle(ez, ex, ey, -Vec3::UnitZ(), -1);    // ceiling
  sampler.rectangle(Vec3::Zero(), ey, ez, Vec3::UnitX(), -1);             // x = 0
  sampler.rectangle(ex, ey, ez, -Vec3::UnitX(), -1);                      // x = X
  sampler.rectangle(Vec3::Zero(), ex, ez, Vec3::UnitY(), -1);             // y = 0
  sampler.rectangle(ey, ex, ez, -Vec3::UnitY(), -1);                      // y = Y

  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box& b = boxes[i];
    const Vec3 ax = b.ax(), ay = b.ay();
    const Vec3 hx = 0.5 * b.size.x() * ax, hy = 0.5 * b.size.y() * ay, up(0, 0, b.size.z());
    const long id = static_cast<long>(i);
    sampler.rectangle(b.center_base - hx - hy + up, b.size.x() * ax, b.size.y() * ay,
                      Vec3::UnitZ(), id);
    sampler.rectangle(b.center_base + hx - hy, b.size.y() * ay, up, ax, id);
    sampler.rectangle(b.center_base - hx - hy, b.size.y() * ay, up, -ax, id);
    sampler.rectangle(b.center_base - hx + hy, b.size.x() * ax, up, ay, id);
    sampler.rectangle(b.center_base - hx - hy, b.size.x() * ax, up, -ay, id);
  }
  for (std::size_t i = 0; i < cylinders.size(); ++i) {
    const Cylinder& c = cylinders[i];
    sampler.disk(c.center_base + Vec3(0, 0, c.height), c.radius, Vec3::UnitZ(),
                 static_cast<long>(i));
    sampler.cylinder_side(c, static_cast<long>(i));
  }
  return out;
}

std::vector<SyntheticSpaceSpec> default_dataset_specs(std::uint64_t seed, double density,
                                                      double noise_sigma) {
  struct Shape {
    double x, y;
    std::size_t boxes, cylinders;
  };
  // Open-plan office, meeting suite, kitchen, lab, studio, corridor, hall.
  const Shape shapes[] = {{11.5, 9.2, 54, 2},  {13.8, 10.4, 51, 3}, {9.2, 8.0, 51, 1},
                          {16.1, 11.5, 63, 3}, {10.4, 10.4, 45, 2}, {18.4, 5.8, 42, 1},
                          {12.7, 11.5, 54, 2}};
  FurnitureCatalogue catalogue;
  catalogue.boxes = {{1.4, 0.7, 0.75}, {1.2, 0.6, 0.75}, {0.5, 0.5, 1.2}, {0.9, 0.4, 1.8},
                     {1.0, 1.0, 0.75}, {0.6, 0.6, 0.45}, {2.0, 0.9, 0.45}};
  catalogue.cylinders = {{0.2, 0.5}, {0.3, 0.75}, {0.15, 1.1}};
  std::vector<SyntheticSpaceSpec> specs;
  for (std::size_t i = 0; i < std::size(shapes); ++i) {
    SyntheticSpaceSpec s;
    s.extents = {shapes[i].x, shapes[i].y, 2.7};
    s.boxes = shapes[i].boxes;
    s.cylinders = shapes[i].cylinders;
    s.catalogue = catalogue;
    s.density = density;
    s.noise_sigma = noise_sigma;
    s.seed = derive_seed(seed, {i});
    specs.push_back(s);
  }
  return specs;
}

}  // namespace mrpriv
