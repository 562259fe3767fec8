#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mrpriv/ply.hpp"
#include "test_util.hpp"

using namespace mrpriv;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mrpriv_ply_tests";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_text(const std::string& name, const std::string& text) {
  const fs::path p = temp_file(name);
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

/// Coordinates exactly representable as float32, so storage is lossless.
PointCloud float_cloud(std::size_t n, std::uint64_t seed) {
  PointCloud c = testutil::random_cloud(n, seed, 10.0);
  for (auto& p : c.points) {
    for (int a = 0; a < 3; ++a) p.position[a] = static_cast<float>(p.position[a]);
    for (int a = 0; a < 3; ++a) p.normal[a] = static_cast<float>(p.normal[a]);
  }
  return c;
}

}  // namespace

TEST_CASE("ascii single vertex") {
  const auto p = write_text("one.ply",
                            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                            "property float z\nproperty float nx\nproperty float ny\nproperty float nz\n"
                            "end_header\n0 0 0 0 0 1\n");
  const PointCloud c = load_ply(p);
  REQUIRE(c.size() == 1);
  CHECK(c.has_normals);
  CHECK(c[0].position == Vec3::Zero());
  CHECK(c[0].normal == Vec3::UnitZ());
  CHECK_FALSE(c.label.has_value());
}

TEST_CASE("missing normals are flagged absent") {
  const auto p = write_text("nonormal.ply",
                            "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
                            "property double z\nproperty uchar red\nend_header\n1 2 3 255\n4 5 6 0\n");
  const PointCloud c = load_ply(p);
  REQUIRE(c.size() == 2);
  CHECK_FALSE(c.has_normals);
  CHECK(c[1].position == Vec3(4, 5, 6));
}

TEST_CASE("faces and other elements are skipped") {
  const auto p = write_text("faces.ply",
                            "ply\nformat ascii 1.0\ncomment space_label 4\nelement vertex 3\n"
                            "property float x\nproperty float y\nproperty float z\n"
                            "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
                            "0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  const PointCloud c = load_ply(p);
  CHECK(c.size() == 3);
  CHECK(c.label == 4);
}

TEST_CASE("binary round trip is bit exact") {
  for (std::size_t n : {1u, 100u, 1000u}) {
    PointCloud c = float_cloud(n, n);
    c.label = 3;
    const auto p = temp_file("rt.ply");
    save_ply(c, p, PlyFormat::BinaryLittleEndian);
    const PointCloud back = load_ply(p);
    REQUIRE(back.size() == c.size());
    CHECK(back.label == 3);
    double max_delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      max_delta = std::max(max_delta, (back[i].position - c[i].position).cwiseAbs().maxCoeff());
      max_delta = std::max(max_delta, (back[i].normal - c[i].normal).cwiseAbs().maxCoeff());
    }
    CHECK(max_delta == 0.0);
  }
}

TEST_CASE("double input round trips to float precision, then exactly") {
  const PointCloud c = testutil::random_cloud(100, 9, 5.0);
  const auto p1 = temp_file("a.ply"), p2 = temp_file("b.ply");
  save_ply(c, p1);
  const PointCloud once = load_ply(p1);
  save_ply(once, p2);
  const PointCloud twice = load_ply(p2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK((once[i].position - c[i].position).norm() < 1e-5);
    CHECK(twice[i].position == once[i].position);
    CHECK(twice[i].normal == once[i].normal);
  }
}

TEST_CASE("ascii round trip within 1e-6") {
  const PointCloud c = float_cloud(200, 17);
  const auto p = temp_file("rt_ascii.ply");
  save_ply(c, p, PlyFormat::Ascii);
  std::ifstream in(p);
  std::string header((std::istreambuf_iterator<char>(in)), {});
  CHECK(header.find("element vertex 200") != std::string::npos);
  const PointCloud back = load_ply(p);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK((back[i].position - c[i].position).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((back[i].normal - c[i].normal).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("big endian input") {
  const fs::path p = temp_file("be.ply");
  {
    std::ofstream out(p, std::ios::binary);
    out << "ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\n"
           "property float y\nproperty float z\nend_header\n";
    for (float v : {1.5f, -2.0f, 0.25f}) {
      unsigned char b[4];
      std::memcpy(b, &v, 4);
      for (int i = 3; i >= 0; --i) out.put(static_cast<char>(b[i]));
    }
  }
  const PointCloud c = load_ply(p);
  REQUIRE(c.size() == 1);
  CHECK(c[0].position == Vec3(1.5, -2.0, 0.25));
}

TEST_CASE("errors") {
  PointCloud one;
  one.points.push_back({});
  CHECK_THROWS_AS(save_ply(PointCloud{}, temp_file("empty.ply")), PreconditionError);
  CHECK_THROWS_AS(save_ply(one, "/nonexistent_dir/x.ply"), PlyError);
  CHECK_THROWS_AS(load_ply(temp_file("does_not_exist.ply")), PlyError);
  CHECK_THROWS_AS(load_ply(write_text("nomagic.ply", "hello\n")), PlyError);
  CHECK_THROWS_AS(load_ply(write_text("noxyz.ply",
                                      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                                      "end_header\n1\n")),
                  PlyError);
  CHECK_THROWS_AS(load_ply(write_text("empty_vertex.ply",
                                      "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\n"
                                      "property float y\nproperty float z\nend_header\n")),
                  PlyError);
  CHECK_THROWS_AS(load_ply(write_text("nan.ply",
                                      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                                      "property float y\nproperty float z\nend_header\nnan 0 0\n")),
                  PlyError);
  CHECK_THROWS_AS(load_ply(write_text("truncated.ply",
                                      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"
                                      "property float y\nproperty float z\nend_header\n0 0 0\n")),
                  PlyError);
  CHECK_THROWS_AS(load_ply(write_text("badtype.ply",
                                      "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\n"
                                      "end_header\n0\n")),
                  PlyError);
  CHECK_THROWS_AS(load_ply(write_text("noend.ply", "ply\nformat ascii 1.0\nelement vertex 1\n")),
                  PlyError);
}
