#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mrpriv/attacker.hpp"
#include "test_util.hpp"

using namespace mrpriv;
namespace fs = std::filesystem;

namespace {

/// Hand-made described space: descriptors (x, 0, ..., 0) of length 8.
DescribedSpace line_space(int label, const std::vector<double>& xs) {
  DescribedSpace d;
  d.label = label;
  d.params.image_width = 2;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    KeyPoint kp;
    kp.source_index = i;
    kp.point.position = Vec3(static_cast<double>(i), 0, 0);
    d.keypoints.push_back(kp);
    SpinDescriptor desc;
    desc.values.assign(8, 0.0);
    desc.values[0] = xs[i];
    d.descriptors.push_back(desc);
  }
  return d;
}

const std::vector<PointCloud>& rooms() {
  static const std::vector<PointCloud> r = testutil::small_rooms(3, 21);
  return r;
}

const ReferenceEnsemble& ensemble() {
  static const ReferenceEnsemble e = build_reference(rooms(), {VariantSpec{{}, 5}}, SpinParams{}, 5, 0);
  return e;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<MatchPair> pairs_from(const std::vector<Vec3>& q, const std::vector<Vec3>& r) {
  std::vector<MatchPair> out;
  for (std::size_t i = 0; i < q.size(); ++i) {
    MatchPair p;
    p.query_index = p.reference_index = i;
    p.query_position = q[i];
    p.reference_position = r[i];
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("build_reference bookkeeping and determinism") {
  const std::vector<PointCloud> one{rooms()[0]};
  const ReferenceEnsemble single = build_reference(one, {}, SpinParams{});
  CHECK(single.labels() == std::vector<int>{0});
  CHECK(single.variants().at(0).size() == 1);

  CHECK(ensemble().labels() == std::vector<int>{0, 1, 2});
  for (int l : ensemble().labels()) CHECK(ensemble().variants().at(l).size() == 2);

  const fs::path dir = fs::temp_directory_path() / "mrpriv_attacker_tests";
  fs::create_directories(dir);
  ensemble().save(dir / "a.bin");
  build_reference(rooms(), {VariantSpec{{}, 5}}, SpinParams{}, 5, 1).save(dir / "b.bin");
  CHECK(file_bytes(dir / "a.bin") == file_bytes(dir / "b.bin"));

  const ReferenceEnsemble loaded = ReferenceEnsemble::load(dir / "a.bin");
  loaded.save(dir / "c.bin");
  CHECK(file_bytes(dir / "a.bin") == file_bytes(dir / "c.bin"));

  PointCloud unlabelled = rooms()[0];
  unlabelled.label.reset();
  CHECK_THROWS_AS(build_reference({unlabelled}, {}, SpinParams{}), PreconditionError);
  CHECK_THROWS_AS(build_reference({rooms()[0], rooms()[0]}, {}, SpinParams{}), PreconditionError);
}

TEST_CASE("match_inter hand-evaluated score") {
  // Ten reference pairs (100k, 100k + 5). Queries at 100k + 5/6 have NNDR 0.2;
  // decoys at 100k - 5 collide on the same keypoints with NNDR 0.5 and lose.
  std::vector<double> ref, query;
  for (int k = 0; k < 10; ++k) {
    ref.push_back(100.0 * k);
    ref.push_back(100.0 * k + 5.0);
  }
  for (int k = 0; k < 10; ++k) query.push_back(100.0 * k + 5.0 / 6.0);
  for (int k = 0; k < 10; ++k) query.push_back(100.0 * k - 5.0);
  std::map<int, std::vector<DescribedSpace>> variants;
  variants[0].push_back(line_space(0, ref));
  const ReferenceEnsemble e(std::move(variants));
  const InterSpaceResult r = match_inter(e, line_space(-1, query));
  const LabelScore& s = r.winning();
  REQUIRE(s.kept.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(s.kept[i].query_index == i);
    CHECK(s.kept[i].nndr == doctest::Approx(0.2).epsilon(1e-12));
  }
  CHECK(s.score == doctest::Approx(0.4).epsilon(1e-12));

  InterMatchOptions strict;
  strict.strict = true;
  strict.nndr_threshold = 0.1;
  CHECK(match_inter(e, line_space(-1, query), strict).winning().kept.empty());
}

TEST_CASE("match_inter ties and degenerate labels") {
  std::map<int, std::vector<DescribedSpace>> variants;
  variants[4].push_back(line_space(4, {1.0, 2.0, 3.0}));
  variants[2].push_back(line_space(2, {1.0, 2.0, 3.0}));
  variants[9].push_back(line_space(9, {1.0}));
  const ReferenceEnsemble e(std::move(variants));
  const InterSpaceResult r = match_inter(e, line_space(-1, {1.0, 2.0, 3.0}));
  CHECK(r.winner == 2);
  REQUIRE(r.scores.size() == 3);
  CHECK(r.scores[2].label == 9);
  CHECK(r.scores[2].score == 0.0);
  CHECK(r.scores[0].score == 1.0);
  CHECK_THROWS_AS(match_inter(e, DescribedSpace{}), PreconditionError);
}

TEST_CASE("match_inter on rooms: self-match, bounds, uniqueness, rigid invariance") {
  const DescribedSpace raw1 = ensemble().variants().at(1).front();
  const InterSpaceResult self = match_inter(ensemble(), raw1);
  CHECK(self.winner == 1);
  CHECK(self.winning().score == 1.0);
  CHECK(self.winning().kept.size() == raw1.size());
  for (const auto& s : self.scores) CHECK(s.score <= self.winning().score);

  PointCloud query = extract_partial(rooms()[2], rooms()[2][100].position, 1.5);
  query.label.reset();
  const DescribedSpace q = describe(query);
  const InterSpaceResult base = match_inter(ensemble(), q);
  for (const auto& s : base.scores) {
    CHECK(s.score >= 0.0);
    CHECK(s.score <= 1.0);
    std::set<std::size_t> qs, rs;
    for (const auto& p : s.kept) {
      CHECK(qs.insert(p.query_index).second);
      CHECK(rs.insert(p.reference_index).second);
    }
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const InterSpaceResult moved =
        match_inter(ensemble(), describe(apply_transform(query, random_rigid_transform(seed))));
    CHECK(moved.winner == base.winner);
    for (std::size_t i = 0; i < base.scores.size(); ++i)
      CHECK(std::abs(moved.scores[i].score - base.scores[i].score) <= 1e-6);
  }
}

TEST_CASE("vertex similarity and match_intra") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(Vec3(std::cos(i * 0.7) * (1 + 0.3 * i), std::sin(i * 1.3) * 2.0, 0.2 * i));

  SUBCASE("identity") {
    const VertexSimilarity s = vertex_similarity(pts, pts);
    for (std::size_t v = 0; v < pts.size(); ++v) {
      CHECK(s.distance[v] == 1.0);
      CHECK(s.angular[v] == doctest::Approx(1.0).epsilon(1e-12));
    }
    const IntraSpaceResult r = match_intra(pairs_from(pts, pts));
    CHECK(r.surviving.size() == pts.size());
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= 10.0;
    CHECK((r.centroid - mean).norm() < 1e-12);
  }
  SUBCASE("rigidly moved query keeps everything") {
    const RigidTransform t = random_rigid_transform(3);
    std::vector<Vec3> q;
    for (const auto& p : pts) q.push_back(t.apply_point(p));
    const IntraSpaceResult r = match_intra(pairs_from(q, pts));
    CHECK(r.surviving.size() == pts.size());
    for (double s : r.similarity) CHECK(s >= 0.95);
  }
  SUBCASE("displaced outlier is rejected") {
    std::vector<Vec3> q = pts, r = pts;
    q.push_back(Vec3(0.5, 0.5, 0.5));
    r.push_back(Vec3(0.5, 0.5, 0.5) + Vec3(5.0, 0, 0));
    const VertexSimilarity s = vertex_similarity(q, r);
    CHECK(s.combined.back() < 0.95);
    const IntraSpaceResult res = match_intra(pairs_from(q, r));
    REQUIRE(res.surviving.size() == 10);
    for (const auto& p : res.surviving) CHECK(p.query_index < 10);
  }
  SUBCASE("abstention") {
    CHECK_THROWS_AS(match_intra(pairs_from({pts[0], pts[1]}, {pts[0], pts[1]})), IntraAbstainError);
    auto pairs = pairs_from(pts, pts);
    for (auto& p : pairs) p.nndr = 0.95;
    CHECK_THROWS_AS(match_intra(pairs), IntraAbstainError);
    // Three pairs with no consistent geometry.
    const std::vector<Vec3> q{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const std::vector<Vec3> r{Vec3(0, 0, 0), Vec3(9, 0, 0), Vec3(0, 0.1, 0)};
    CHECK_THROWS_AS(match_intra(pairs_from(q, r)), IntraAbstainError);
  }
}

TEST_CASE("infer") {
  for (std::size_t i = 0; i < rooms().size(); ++i) {
    PointCloud query = apply_transform(rooms()[i], random_rigid_transform(100 + i));
    query.label.reset();
    const Hypothesis h = infer(ensemble(), query);
    CHECK(h.label == static_cast<int>(i));
    CHECK_FALSE(h.intra_abstained);
    const Vec3 truth = centroid(subset(rooms()[i], [&] {
      std::vector<std::size_t> idx;
      for (const auto& kp : select_keypoints(rooms()[i])) idx.push_back(kp.source_index);
      return idx;
    }()));
    CHECK((h.centroid - truth).norm() <= 0.5);
  }
  const PointCloud stranger = testutil::small_rooms(4, 99)[3];
  const Hypothesis h = infer(ensemble(), stranger);
  CHECK(h.label >= 0);
  CHECK(h.label <= 2);
  CHECK_THROWS_AS(infer(ensemble(), PointCloud{}), PreconditionError);
}
