#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrpriv/geometry.hpp"
#include "mrpriv/mechanisms.hpp"

namespace mrpriv {

/// One attack attempt against one released query.
struct TrialRecord {
  int true_label = -1;
  Vec3 true_centroid = Vec3::Zero();
  int hypothesis_label = -1;  ///< -1 when no descriptor could be formed
  Vec3 hypothesis_centroid = Vec3::Zero();
  bool intra_abstained = false;
  /// The query was empty or unusable; counted as a misclassification.
  bool inter_abstained = false;
  double radius = 0.0;
  std::size_t release_index = 1;
  std::size_t max_planes = kUnboundedPlanes;
  std::optional<double> q;
  std::size_t trial = 0;

  bool correct() const { return !inter_abstained && hypothesis_label == true_label; }
};

/// Empirical misclassification rate. Throws PreconditionError when empty.
double inter_privacy(std::span<const TrialRecord> trials);

/// Euclidean distance between hypothesis and true centroid.
double intra_distance(const Vec3& hypothesis, const Vec3& truth);

/// Mean centroid error over correctly classified, non-abstaining trials;
/// nullopt when no trial qualifies.
std::optional<double> intra_privacy(std::span<const TrialRecord> trials);

/// Fraction of correctly classified trials whose intra inference abstained.
double abstention_rate(std::span<const TrialRecord> trials);

struct QosOptions {
  double alpha = 0.5;
  double beta = 0.5;
  bool symmetric = false;
  void validate() const;
};

/// Mean over released points of alpha*||p - p~|| + beta*(1 - n_p . n_p~)
/// where p is the 1-nn of p~ in the raw cloud. The symmetric variant averages
/// this with the same quantity computed from raw to released.
double qos(const PointCloud& transformed, const PointCloud& raw, const QosOptions& options = {});

/// Q <= gamma (inclusive).
bool check_gamma(double q_value, double gamma);

enum class PrivacyBand { High, Medium, Low };
PrivacyBand privacy_band(double pi1);
std::string to_string(PrivacyBand band);

/// Aggregates of one sweep cell.
struct CellKey {
  std::string mode;
  double radius = 0.0;
  std::size_t release_index = 1;
  std::size_t max_planes = kUnboundedPlanes;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellMetrics {
  CellKey key;
  std::size_t space_count = 0;
  double pi1 = 0.0;
  std::optional<double> pi2;
  double abstain_rate = 0.0;
  std::optional<double> q;
  std::size_t n_trials = 0;
};

CellMetrics aggregate_cell(const CellKey& key, std::span<const TrialRecord> trials,
                           std::size_t space_count);

struct MetricsReport {
  std::vector<CellMetrics> cells;  ///< sorted by key
};

}  // namespace mrpriv
