#include <algorithm>
#include <random>

#include "doctest.h"
#include "mrpriv/metrics.hpp"
#include "test_util.hpp"

using namespace mrpriv;

namespace {

TrialRecord trial(int truth, int guess, Vec3 true_c = Vec3::Zero(), Vec3 hyp_c = Vec3::Zero()) {
  TrialRecord t;
  t.true_label = truth;
  t.hypothesis_label = guess;
  t.true_centroid = true_c;
  t.hypothesis_centroid = hyp_c;
  return t;
}

double brute_qos(const PointCloud& from, const PointCloud& to, double alpha, double beta) {
  double sum = 0.0;
  for (const auto& p : from.points) {
    std::size_t best = 0;
    double best_d2 = INFINITY;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d2 = squared_distance(p.position.data(), to[j].position.data(), 3);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = j;
      }
    }
    sum += alpha * std::sqrt(best_d2) + beta * (1.0 - to[best].normal.dot(p.normal));
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

TEST_CASE("inter_privacy") {
  std::vector<TrialRecord> t;
  for (int i = 0; i < 10; ++i) t.push_back(trial(1, 1));
  CHECK(inter_privacy(t) == 0.0);
  for (int i = 0; i < 3; ++i) t[static_cast<std::size_t>(i)].hypothesis_label = 2;
  CHECK(inter_privacy(t) == doctest::Approx(0.3).epsilon(1e-15));
  std::shuffle(t.begin(), t.end(), std::mt19937_64(1));
  CHECK(inter_privacy(t) == doctest::Approx(0.3).epsilon(1e-15));
  for (auto& x : t) x.hypothesis_label = 5;
  CHECK(inter_privacy(t) == 1.0);
  CHECK_THROWS_AS(inter_privacy({}), PreconditionError);

  TrialRecord abstained = trial(1, 1);
  abstained.inter_abstained = true;
  CHECK_FALSE(abstained.correct());
}

TEST_CASE("intra_privacy") {
  CHECK(intra_distance(Vec3(3, 4, 0), Vec3::Zero()) == 5.0);
  CHECK(intra_distance(Vec3(1, 2, 3), Vec3(1, 2, 3)) == 0.0);

  std::vector<TrialRecord> t{trial(0, 0, Vec3::Zero(), Vec3(2, 0, 0)),
                             trial(0, 0, Vec3::Zero(), Vec3(0, 4, 0)),
                             trial(0, 1, Vec3::Zero(), Vec3(100, 0, 0))};
  CHECK(*intra_privacy(t) == 3.0);
  t.push_back(trial(0, 0, Vec3::Zero(), Vec3(50, 0, 0)));
  t.back().intra_abstained = true;
  CHECK(*intra_privacy(t) == 3.0);
  CHECK(abstention_rate(t) == doctest::Approx(1.0 / 3.0));
  CHECK_FALSE(intra_privacy(std::vector<TrialRecord>{trial(0, 1)}).has_value());

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
    CHECK(std::abs(intra_distance(a, b) - intra_distance(b, a)) <= 1e-12);
    CHECK(intra_distance(a, c) <= intra_distance(a, b) + intra_distance(b, c) + 1e-12);
  }
}

TEST_CASE("qos worked examples") {
  const PointCloud c = testutil::random_cloud(300, 5);
  CHECK(qos(c, c) == 0.0);
  QosOptions sym;
  sym.symmetric = true;
  CHECK(qos(c, c, sym) == 0.0);

  PointCloud raw, moved;
  raw.points.push_back({Vec3::Zero(), Vec3::UnitZ()});
  moved.points.push_back({Vec3(0, 0, 0.1), Vec3::UnitZ()});
  CHECK(qos(moved, raw) == doctest::Approx(0.05).epsilon(1e-15));
  PointCloud turned;
  turned.points.push_back({Vec3::Zero(), Vec3::UnitX()});
  CHECK(qos(turned, raw) == 0.5);

  CHECK_THROWS_AS(qos(PointCloud{}, raw), PreconditionError);
  QosOptions bad;
  bad.alpha = 0.7;
  CHECK_THROWS_AS(qos(raw, raw, bad), PreconditionError);
}

TEST_CASE("qos matches brute-force pairing") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PointCloud a = testutil::random_cloud(500, 10 + seed);
    const PointCloud b = testutil::random_cloud(400, 20 + seed);
    for (double alpha : {0.0, 0.5, 1.0}) {
      QosOptions o;
      o.alpha = alpha;
      o.beta = 1.0 - alpha;
      CHECK(std::abs(qos(a, b, o) - brute_qos(a, b, o.alpha, o.beta)) <= 1e-9);
      o.symmetric = true;
      const double sym = 0.5 * (brute_qos(a, b, o.alpha, o.beta) + brute_qos(b, a, o.alpha, o.beta));
      CHECK(std::abs(qos(a, b, o) - sym) <= 1e-9);
    }
  }
}

TEST_CASE("qos is invariant under a common rigid motion") {
  const PointCloud a = testutil::random_cloud(300, 31), b = testutil::random_cloud(300, 32);
  const RigidTransform t = random_rigid_transform(9);
  CHECK(std::abs(qos(apply_transform(a, t), apply_transform(b, t)) - qos(a, b)) <= 1e-9);
}

TEST_CASE("check_gamma and bands") {
  CHECK(check_gamma(0.05, 0.2));
  CHECK(check_gamma(0.2, 0.2));
  CHECK_FALSE(check_gamma(0.21, 0.2));
  CHECK_THROWS_AS(check_gamma(0.1, -1.0), PreconditionError);

  CHECK(privacy_band(0.75) == PrivacyBand::High);
  CHECK(privacy_band(1.0) == PrivacyBand::High);
  CHECK(privacy_band(0.5) == PrivacyBand::Medium);
  CHECK(privacy_band(0.6) == PrivacyBand::Medium);
  CHECK(privacy_band(0.49) == PrivacyBand::Low);
  CHECK(to_string(PrivacyBand::Medium) == "medium");
  CHECK_THROWS_AS(privacy_band(1.5), PreconditionError);
}

TEST_CASE("aggregate_cell") {
  std::vector<TrialRecord> t{trial(0, 0, Vec3::Zero(), Vec3(1, 0, 0)), trial(1, 0)};
  t[0].q = 0.2;
  t[1].q = 0.4;
  const CellMetrics m = aggregate_cell({"x", 1.0, 1, kUnboundedPlanes}, t, 7);
  CHECK(m.pi1 == 0.5);
  CHECK(*m.pi2 == 1.0);
  CHECK(*m.q == doctest::Approx(0.3));
  CHECK(m.n_trials == 2);
  CHECK(m.space_count == 7);
}
