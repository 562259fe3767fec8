#include "mrpriv/metrics.hpp"

#include <cmath>

#include "mrpriv/spatial_index.hpp"

namespace mrpriv {

double inter_privacy(std::span<const TrialRecord> trials) {
  if (trials.empty()) throw PreconditionError("inter_privacy: no trials");
  std::size_t wrong = 0;
  for (const auto& t : trials)
    if (!t.correct()) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(trials.size());
}

double intra_distance(const Vec3& hypothesis, const Vec3& truth) {
  return (hypothesis - truth).norm();
}

std::optional<double> intra_privacy(std::span<const TrialRecord> trials) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : trials) {
    if (!t.correct() || t.intra_abstained) continue;
    sum += intra_distance(t.hypothesis_centroid, t.true_centroid);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double abstention_rate(std::span<const TrialRecord> trials) {
  std::size_t correct = 0, abstained = 0;
  for (const auto& t : trials) {
    if (!t.correct()) continue;
    ++correct;
    if (t.intra_abstained) ++abstained;
  }
  return correct == 0 ? 0.0 : static_cast<double>(abstained) / static_cast<double>(correct);
}

void QosOptions::validate() const {
  if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
    throw PreconditionError("qos: alpha and beta must lie in [0, 1]");
  if (std::abs(alpha + beta - 1.0) > 1e-12) throw PreconditionError("qos: alpha + beta must be 1");
}

namespace {

double directed_qos(const PointCloud& from, const PointCloud& to, const SpatialIndex& to_index,
                    double alpha, double beta) {
  double sum = 0.0;
  for (const auto& p : from.points) {
    const Neighbor nn = to_index.knn(p.position, 1).front();
    const OrientedPoint& match = to[nn.index];
    const double misalign = match.normal == p.normal ? 0.0 : 1.0 - match.normal.dot(p.normal);
    sum += alpha * nn.distance + beta * misalign;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double qos(const PointCloud& transformed, const PointCloud& raw, const QosOptions& options) {
  options.validate();
  if (transformed.empty() || raw.empty()) throw PreconditionError("qos: empty cloud");
  const SpatialIndex raw_index(raw);
  const double forward = directed_qos(transformed, raw, raw_index, options.alpha, options.beta);
  if (!options.symmetric) return forward;
  const SpatialIndex released_index(transformed);
  const double backward = directed_qos(raw, transformed, released_index, options.alpha, options.beta);
  return 0.5 * (forward + backward);
}

bool check_gamma(double q_value, double gamma) {
  if (gamma < 0.0) throw PreconditionError("check_gamma: gamma must be non-negative");
  return q_value <= gamma;
}

PrivacyBand privacy_band(double pi1) {
  if (pi1 < 0.0 || pi1 > 1.0) throw PreconditionError("privacy_band: pi1 outside [0, 1]");
  if (pi1 >= 0.75) return PrivacyBand::High;
  if (pi1 >= 0.5) return PrivacyBand::Medium;
  return PrivacyBand::Low;
}

std::string to_string(PrivacyBand band) {
  switch (band) {
    case PrivacyBand::High: return "high";
    case PrivacyBand::Medium: return "medium";
    case PrivacyBand::Low: return "low";
  }
  return "unknown";
}

CellMetrics aggregate_cell(const CellKey& key, std::span<const TrialRecord> trials,
                           std::size_t space_count) {
  CellMetrics m;
  m.key = key;
  m.space_count = space_count;
  m.n_trials = trials.size();
  m.pi1 = inter_privacy(trials);
  m.pi2 = intra_privacy(trials);
  m.abstain_rate = abstention_rate(trials);
  double qsum = 0.0;
  std::size_t qn = 0;
  for (const auto& t : trials) {
    if (!t.q) continue;
    qsum += *t.q;
    ++qn;
  }
  if (qn > 0) m.q = qsum / static_cast<double>(qn);
  return m;
}

}  // namespace mrpriv
