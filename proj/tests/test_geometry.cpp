#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

#include "doctest.h"
#include "mrpriv/geometry.hpp"
#include "mrpriv/spatial_index.hpp"
#include "test_util.hpp"

using namespace mrpriv;
using testutil::brute_knn;
using testutil::random_cloud;

TEST_CASE("apply_transform") {
  const PointCloud c = random_cloud(50, 1);
  SUBCASE("identity is exact") {
    const PointCloud out = apply_transform(c, RigidTransform::identity());
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(out[i].position == c[i].position);
      CHECK(out[i].normal == c[i].normal);
    }
  }
  SUBCASE("translation keeps normals") {
    PointCloud one;
    one.points.push_back({Vec3::Zero(), Vec3::UnitZ()});
    RigidTransform t;
    t.translation = Vec3(1, 0, 0);
    const PointCloud out = apply_transform(one, t);
    CHECK(out[0].position == Vec3(1, 0, 0));
    CHECK(out[0].normal == Vec3::UnitZ());
  }
  SUBCASE("pairwise distances and centroid covariance") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const RigidTransform t = random_rigid_transform(seed);
      const PointCloud out = apply_transform(c, t);
      for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j)
          CHECK(std::abs((out[i].position - out[j].position).norm() -
                         (c[i].position - c[j].position).norm()) <= 1e-9);
      CHECK((centroid(out) - t.apply_point(centroid(c))).norm() <= 1e-9);
    }
  }
  SUBCASE("inverse round trip") {
    const RigidTransform t = random_rigid_transform(7);
    const PointCloud back = apply_transform(apply_transform(c, t), t.inverse());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK((back[i].position - c[i].position).norm() < 1e-12);
  }
}

TEST_CASE("random_rigid_transform") {
  const RigidTransform a = random_rigid_transform(42), b = random_rigid_transform(42);
  CHECK(a.rotation == b.rotation);
  CHECK(a.translation == b.translation);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const RigidTransform t = random_rigid_transform(s);
    REQUIRE(t.is_valid());
    CHECK(std::abs(t.rotation.determinant() - 1.0) <= 1e-9);
    CHECK(t.translation.cwiseAbs().maxCoeff() <= kDefaultTranslationRange);
  }
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 10000; ++s) sum += rotation_angle(random_rigid_transform(s).rotation);
  const double mean_deg = sum / 10000.0 * 180.0 / std::numbers::pi;
  CHECK(std::abs(mean_deg - 126.5) <= 2.0);
}

TEST_CASE("centroid") {
  PointCloud c;
  c.points.push_back({Vec3(0, 0, 0), Vec3::UnitZ()});
  c.points.push_back({Vec3(2, 0, 0), Vec3::UnitZ()});
  CHECK(centroid(c) == Vec3(1, 0, 0));
  CHECK(centroid(subset(c, {1})) == Vec3(2, 0, 0));
  CHECK_THROWS_AS(centroid(PointCloud{}), PreconditionError);

  const PointCloud r = random_cloud(1000, 3, 5.0);
  long double sx = 0, sy = 0, sz = 0;
  for (const auto& p : r.points) {
    sx += p.position.x();
    sy += p.position.y();
    sz += p.position.z();
  }
  const Vec3 oracle(static_cast<double>(sx / 1000), static_cast<double>(sy / 1000),
                    static_cast<double>(sz / 1000));
  CHECK((centroid(r) - oracle).norm() <= 1e-9);
}

TEST_CASE("extract_partial") {
  const PointCloud c = random_cloud(2000, 5);
  SUBCASE("radius zero is inclusive") {
    const PointCloud out = extract_partial(c, c[17].position, 0.0);
    REQUIRE(out.size() == 1);
    CHECK(out[0].position == c[17].position);
  }
  SUBCASE("large radius keeps everything in order") {
    const PointCloud out = extract_partial(c, Vec3::Zero(), 10.0);
    REQUIRE(out.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(out[i].position == c[i].position);
  }
  SUBCASE("matches linear scan and nests") {
    std::size_t expect = 0;
    for (const auto& p : c.points) expect += p.position.norm() <= 0.5;
    CHECK(extract_partial(c, Vec3::Zero(), 0.5).size() == expect);
    const auto small = partial_indices(c, Vec3(0.2, 0.1, 0), 0.3);
    const auto big = partial_indices(c, Vec3(0.2, 0.1, 0), 0.6);
    CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
  }
  SUBCASE("empty result and negative radius") {
    CHECK(extract_partial(c, Vec3(100, 0, 0), 1.0).empty());
    CHECK_THROWS_AS(extract_partial(c, Vec3::Zero(), -1.0), PreconditionError);
  }
}

TEST_CASE("estimate_normals") {
  SUBCASE("plane") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    PointCloud c;
    for (int i = 0; i < 400; ++i) c.points.push_back({Vec3(u(rng), u(rng), 0.0), Vec3::UnitX()});
    const PointCloud out = estimate_normals(c, 10);
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out.is_reliable(i));
      CHECK(std::abs(std::abs(out[i].normal.z()) - 1.0) <= 1e-3);
    }
  }
  SUBCASE("sphere") {
    std::mt19937_64 rng(2);
    PointCloud c;
    for (int i = 0; i < 2000; ++i) {
      const Vec3 d = testutil::random_unit(rng);
      c.points.push_back({d, Vec3::UnitZ()});
    }
    const PointCloud out = estimate_normals(c, 10);
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(std::abs(out[i].normal.dot(c[i].position)) >= 0.95);
      CHECK(std::abs(out[i].normal.norm() - 1.0) < 1e-9);
    }
  }
  SUBCASE("collinear neighbourhood is unreliable") {
    PointCloud c;
    for (int i = 0; i < 3; ++i) c.points.push_back({Vec3(i, 0, 0), Vec3::UnitZ()});
    const PointCloud out = estimate_normals(c, 2);
    for (std::size_t i = 0; i < 3; ++i) CHECK_FALSE(out.is_reliable(i));
  }
  SUBCASE("too few points") {
    CHECK_THROWS_AS(estimate_normals(random_cloud(5, 1), 5), PreconditionError);
  }
}

TEST_CASE("knn tie and identity rules") {
  PointCloud c;
  c.points.push_back({Vec3(1, 0, 0), Vec3::UnitZ()});
  c.points.push_back({Vec3(-1, 0, 0), Vec3::UnitZ()});
  c.points.push_back({Vec3(0, 5, 0), Vec3::UnitZ()});
  const SpatialIndex index(c);
  const auto tie = index.knn(Vec3::Zero(), 2);
  CHECK(tie[0].index == 0);
  CHECK(tie[1].index == 1);
  const auto self = index.knn(Vec3(0, 5, 0), 1);
  CHECK(self[0].index == 2);
  CHECK(self[0].distance == 0.0);
  CHECK_THROWS_AS(index.knn(Vec3::Zero(), 4), PreconditionError);
}

TEST_CASE("knn equals linear scan in 3-D") {
  const PointCloud c = random_cloud(1000, 11);
  const auto data = testutil::positions(c);
  const SpatialIndex index(c);
  const PointCloud queries = random_cloud(100, 12, 1.2);
  for (std::size_t k : {1, 2, 7}) {
    for (const auto& q : queries.points)
      CHECK(index.knn(q.position, k) == brute_knn(data, 3, q.position.data(), k));
  }
  // Duplicated points exercise the tie rule at scale.
  PointCloud dup = c;
  dup.points.insert(dup.points.end(), c.points.begin(), c.points.end());
  const auto dup_data = testutil::positions(dup);
  const SpatialIndex dup_index(dup);
  for (const auto& q : queries.points)
    CHECK(dup_index.knn(q.position, 4) == brute_knn(dup_data, 3, q.position.data(), 4));
}

TEST_CASE("radius search equals linear scan") {
  const PointCloud c = random_cloud(3000, 21);
  const SpatialIndex index(c);
  for (double r : {0.0, 0.1, 0.4, 3.0}) {
    const Vec3 q = c[9].position;
    CHECK(index.radius_search(q, r) == partial_indices(c, q, r));
  }
}

TEST_CASE("high-dimensional knn equals linear scan") {
  const std::size_t dim = 128;
  const auto data = testutil::random_matrix(1000, dim, 31);
  const auto queries = testutil::random_matrix(100, dim, 32);
  const KdTree tree(data, dim);
  const DenseKnn dense(data, dim);
  const auto batch = dense.knn(queries, 2);
  REQUIRE(batch.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    const double* q = queries.data() + i * dim;
    const auto oracle = brute_knn(data, dim, q, 2);
    CHECK(tree.knn({q, dim}, 2) == oracle);
    CHECK(batch[i] == oracle);
  }
}

TEST_CASE("DenseKnn resolves exact and near ties like the scan") {
  const std::size_t dim = 128;
  auto data = testutil::random_matrix(300, dim, 41);
  // Rows 100..199 duplicate rows 0..99; rows 200..299 differ from them by 1e-9.
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      data[(100 + i) * dim + d] = data[i * dim + d];
      data[(200 + i) * dim + d] = data[i * dim + d] + (d == 0 ? 1e-9 : 0.0);
    }
  const DenseKnn dense(data, dim);
  std::vector<double> queries(data.begin(), data.begin() + 50 * dim);
  const auto batch = dense.knn(queries, 3);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto oracle = brute_knn(data, dim, queries.data() + i * dim, 3);
    CHECK(batch[i] == oracle);
    CHECK(batch[i][0].index == i);
    CHECK(batch[i][1].index == i + 100);
  }
}
