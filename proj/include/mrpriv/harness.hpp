#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrpriv/attacker.hpp"
#include "mrpriv/mechanisms.hpp"
#include "mrpriv/metrics.hpp"
#include "mrpriv/synthetic.hpp"

namespace mrpriv {

enum class ExperimentMode { OneTime, Successive, Conservative };
std::string to_string(ExperimentMode mode);
ExperimentMode parse_mode(const std::string& text);

struct SyntheticDatasetSpec {
  std::size_t count = 7;
  double density = 40.0;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;
};

struct DatasetSource {
  /// Directory of *.ply spaces; the synthetic generator is used when unset.
  std::optional<std::filesystem::path> ply_dir;
  SyntheticDatasetSpec synthetic;
  /// Neighbourhood size for estimating normals of PLY files without them.
  std::size_t normal_k = 12;
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::OneTime;
  std::vector<double> radii{0.5, 1.0, 2.0};
  std::size_t samples = 1000;
  std::size_t releases = 1;
  /// Only the first, every stride-th and the last release are attacked.
  std::size_t release_stride = 1;
  std::vector<std::size_t> max_planes;
  std::uint64_t seed = 1;
  /// One-time mode: also attack the raw partial spaces.
  bool include_raw = true;
  /// Adds the self-query cell (full raw spaces, random rigid transform).
  bool sanity_check = false;
  std::size_t reference_variants = 1;
  std::optional<double> walk_step_max;
  AttackerOptions attacker;
  GeneralizationParams generalization;
  QosOptions qos;
  std::size_t workers = 0;  ///< 0 = hardware concurrency
  DatasetSource dataset;

  static ExperimentConfig defaults(ExperimentMode mode);
  void validate() const;
};

/// JSON config. Keys absent from the document keep the defaults of its mode.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

/// Labelled spaces with normals. PLY spaces take their label from the file's
/// space_label comment, otherwise from their position in name order.
std::vector<PointCloud> load_dataset(const DatasetSource& source);
std::vector<PointCloud> generate_dataset(const SyntheticDatasetSpec& spec);

ReferenceEnsemble build_experiment_reference(const std::vector<PointCloud>& spaces,
                                             const ExperimentConfig& config);

struct LoggedTrial {
  CellKey key;
  std::size_t space_count = 0;
  TrialRecord record;
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<LoggedTrial> trials;  ///< sorted by cell, then trial
};

/// Attacks one released cloud given in the reference frame, after moving it
/// by `transform`. The true centroid is that of the released keypoints.
TrialRecord attack_release(const ReferenceEnsemble& ensemble, const PointCloud& released_reference,
                           const RigidTransform& transform, const AttackerOptions& options);

ExperimentResult run_trials(const ExperimentConfig& config, const std::vector<PointCloud>& spaces,
                            const ReferenceEnsemble& ensemble);
ExperimentResult run_experiment(const ExperimentConfig& config);

MetricsReport aggregate(const std::vector<LoggedTrial>& trials);

std::string metrics_csv(const MetricsReport& report);
std::string metrics_json(const MetricsReport& report);
std::string summary_text(const MetricsReport& report);
/// metrics.csv, metrics.json and summary.txt.
void write_report(const MetricsReport& report, const std::filesystem::path& out_dir);

void write_trial_log(const std::vector<LoggedTrial>& trials, const std::filesystem::path& path);
std::vector<LoggedTrial> read_trial_log(const std::filesystem::path& path);

/// release_001.ply ... plus manifest.json describing each release.
void export_releases(const std::vector<ReleaseOutput>& releases, const std::filesystem::path& out_dir);

}  // namespace mrpriv
