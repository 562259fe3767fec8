#include "mrpriv/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mrpriv/parallel.hpp"
#include "mrpriv/ply.hpp"
#include "mrpriv/rng.hpp"

namespace mrpriv {

using nlohmann::json;

std::string to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::OneTime: return "one-time";
    case ExperimentMode::Successive: return "successive";
    case ExperimentMode::Conservative: return "conservative";
  }
  return "unknown";
}

ExperimentMode parse_mode(const std::string& text) {
  if (text == "one-time") return ExperimentMode::OneTime;
  if (text == "successive") return ExperimentMode::Successive;
  if (text == "conservative") return ExperimentMode::Conservative;
  throw PreconditionError("unknown mode '" + text + "'");
}

ExperimentConfig ExperimentConfig::defaults(ExperimentMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  switch (mode) {
    case ExperimentMode::OneTime:
      c.samples = 1000;
      c.releases = 1;
      break;
    case ExperimentMode::Successive:
      c.samples = 100;
      c.releases = 100;
      break;
    case ExperimentMode::Conservative:
      c.samples = 100;
      c.releases = 100;
      for (std::size_t m = 1; m < 30; m += 2) c.max_planes.push_back(m);
      c.qos.symmetric = true;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (radii.empty()) throw PreconditionError("config: radii must not be empty");
  for (double r : radii)
    if (!(r > 0.0) || !std::isfinite(r)) throw PreconditionError("config: radii must be positive");
  if (samples == 0) throw PreconditionError("config: samples must be positive");
  if (releases == 0) throw PreconditionError("config: releases must be positive");
  if (release_stride == 0) throw PreconditionError("config: release_stride must be positive");
  if (mode == ExperimentMode::Conservative) {
    if (max_planes.empty()) throw PreconditionError("config: max_planes sweep must not be empty");
    for (std::size_t m : max_planes)
      if (m == 0) throw PreconditionError("config: max_planes entries must be positive");
  }
  if (walk_step_max && !(*walk_step_max > 0.0))
    throw PreconditionError("config: walk_step_max must be positive");
  attacker.spin.validate();
  if (attacker.keypoint_factor == 0) throw PreconditionError("config: keypoint_factor must be positive");
  generalization.validate();
  qos.validate();
  if (!dataset.ply_dir && dataset.synthetic.count < 2)
    throw PreconditionError("config: at least two spaces are required");
}

namespace {

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw PreconditionError("config: " + where_ + " must be an object");
  }
  ~Reader() = default;

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw PreconditionError("config: bad value for " + where_ + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.contains(k)) throw PreconditionError("config: unknown key " + where_ + k);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

void read_spin(const json& j, SpinParams& p) {
  Reader r(j, "spin.");
  r.get("bin_size", p.bin_size);
  r.get("image_width", p.image_width);
  r.get("cull_by_support_angle", p.cull_by_support_angle);
  r.get("support_angle_deg", p.support_angle_deg);
  r.finish();
}

void read_generalization(const json& j, GeneralizationParams& p) {
  Reader r(j, "generalization.");
  r.get("dist_eps", p.dist_eps);
  r.get("normal_angle_max_deg", p.normal_angle_max_deg);
  r.get("min_inliers", p.min_inliers);
  r.get("candidates_per_round", p.candidates_per_round);
  r.get("refit", p.refit);
  r.finish();
}

void read_dataset(const json& j, DatasetSource& d) {
  Reader r(j, "dataset.");
  if (const json* v = r.child("ply_dir"); v && !v->is_null()) d.ply_dir = v->get<std::string>();
  r.get("normal_k", d.normal_k);
  if (const json* s = r.child("synthetic")) {
    Reader sr(*s, "dataset.synthetic.");
    sr.get("count", d.synthetic.count);
    sr.get("density", d.synthetic.density);
    sr.get("noise_sigma", d.synthetic.noise_sigma);
    sr.get("seed", d.synthetic.seed);
    sr.finish();
  }
  r.finish();
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw PreconditionError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw PreconditionError("config: top level must be an object");
  std::string mode = "one-time";
  if (j.contains("mode")) mode = j.at("mode").get<std::string>();
  ExperimentConfig c = ExperimentConfig::defaults(parse_mode(mode));
  Reader r(j, "");
  r.child("mode");
  r.get("radii", c.radii);
  r.get("samples", c.samples);
  r.get("releases", c.releases);
  r.get("release_stride", c.release_stride);
  r.get("max_planes", c.max_planes);
  r.get("seed", c.seed);
  r.get("include_raw", c.include_raw);
  r.get("sanity_check", c.sanity_check);
  r.get("reference_variants", c.reference_variants);
  if (const json* v = r.child("walk_step_max"); v && !v->is_null()) c.walk_step_max = v->get<double>();
  r.get("workers", c.workers);
  r.get("keypoint_factor", c.attacker.keypoint_factor);
  if (const json* v = r.child("spin")) read_spin(*v, c.attacker.spin);
  if (const json* v = r.child("inter")) {
    Reader ir(*v, "inter.");
    ir.get("strict", c.attacker.inter.strict);
    ir.get("nndr_threshold", c.attacker.inter.nndr_threshold);
    ir.finish();
  }
  if (const json* v = r.child("intra")) {
    Reader ir(*v, "intra.");
    ir.get("nndr_threshold", c.attacker.intra.nndr_threshold);
    ir.get("similarity_threshold", c.attacker.intra.similarity_threshold);
    ir.get("distance_rate", c.attacker.intra.distance_rate);
    ir.finish();
  }
  if (const json* v = r.child("generalization")) read_generalization(*v, c.generalization);
  if (const json* v = r.child("qos")) {
    Reader qr(*v, "qos.");
    qr.get("alpha", c.qos.alpha);
    qr.get("beta", c.qos.beta);
    qr.get("symmetric", c.qos.symmetric);
    qr.finish();
  }
  if (const json* v = r.child("dataset")) read_dataset(*v, c.dataset);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["radii"] = c.radii;
  j["samples"] = c.samples;
  j["releases"] = c.releases;
  j["release_stride"] = c.release_stride;
  j["max_planes"] = c.max_planes;
  j["seed"] = c.seed;
  j["include_raw"] = c.include_raw;
  j["sanity_check"] = c.sanity_check;
  j["reference_variants"] = c.reference_variants;
  j["walk_step_max"] = c.walk_step_max ? json(*c.walk_step_max) : json(nullptr);
  j["workers"] = c.workers;
  j["keypoint_factor"] = c.attacker.keypoint_factor;
  const SpinParams& s = c.attacker.spin;
  j["spin"] = {{"bin_size", s.bin_size},
               {"image_width", s.image_width},
               {"cull_by_support_angle", s.cull_by_support_angle},
               {"support_angle_deg", s.support_angle_deg}};
  j["inter"] = {{"strict", c.attacker.inter.strict},
                {"nndr_threshold", c.attacker.inter.nndr_threshold}};
  j["intra"] = {{"nndr_threshold", c.attacker.intra.nndr_threshold},
                {"similarity_threshold", c.attacker.intra.similarity_threshold},
                {"distance_rate", c.attacker.intra.distance_rate}};
  const GeneralizationParams& g = c.generalization;
  j["generalization"] = {{"dist_eps", g.dist_eps},
                         {"normal_angle_max_deg", g.normal_angle_max_deg},
                         {"min_inliers", g.min_inliers},
                         {"candidates_per_round", g.candidates_per_round},
                         {"refit", g.refit}};
  j["qos"] = {{"alpha", c.qos.alpha}, {"beta", c.qos.beta}, {"symmetric", c.qos.symmetric}};
  const auto& d = c.dataset;
  j["dataset"] = {{"ply_dir", d.ply_dir ? json(d.ply_dir->string()) : json(nullptr)},
                  {"normal_k", d.normal_k},
                  {"synthetic",
                   {{"count", d.synthetic.count},
                    {"density", d.synthetic.density},
                    {"noise_sigma", d.synthetic.noise_sigma},
                    {"seed", d.synthetic.seed}}}};
  return j.dump(2);
}

std::vector<PointCloud> generate_dataset(const SyntheticDatasetSpec& spec) {
  auto specs = default_dataset_specs(spec.seed, spec.density, spec.noise_sigma);
  if (spec.count > specs.size()) {
    // Beyond the seven fixed rooms, vary the extents of recycled shapes.
    Rng rng(derive_seed(spec.seed, {0x6d6f7265ULL}));
    std::uniform_real_distribution<double> scale(0.8, 1.25);
    for (std::size_t i = specs.size(); i < spec.count; ++i) {
      SyntheticSpaceSpec s = specs[i % 7];
      s.extents = s.extents.cwiseProduct(Vec3(scale(rng), scale(rng), 1.0));
      s.seed = derive_seed(spec.seed, {i});
      specs.push_back(s);
    }
  }
  specs.resize(spec.count);
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < specs.size(); ++i)
    out.push_back(generate_space(specs[i], static_cast<int>(i)).cloud);
  return out;
}

std::vector<PointCloud> load_dataset(const DatasetSource& source) {
  if (!source.ply_dir) return generate_dataset(source.synthetic);
  const auto& dir = *source.ply_dir;
  if (!std::filesystem::is_directory(dir))
    throw PreconditionError("dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ply") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<PointCloud> spaces;
  std::set<int> labels;
  for (std::size_t i = 0; i < files.size(); ++i) {
    PointCloud c = load_ply(files[i]);
    if (!c.has_normals) {
      std::optional<int> label = c.label;
      c = estimate_normals(c, source.normal_k);
      c.label = label;
    }
    if (!c.label) c.label = static_cast<int>(i);
    if (!labels.insert(*c.label).second)
      throw PreconditionError("dataset: duplicate label " + std::to_string(*c.label));
    spaces.push_back(std::move(c));
  }
  return spaces;
}

ReferenceEnsemble build_experiment_reference(const std::vector<PointCloud>& spaces,
                                             const ExperimentConfig& config) {
  if (spaces.size() < 2) throw PreconditionError("at least two spaces are required");
  std::vector<VariantSpec> variants;
  for (std::size_t v = 0; v < config.reference_variants; ++v)
    variants.push_back({config.generalization, derive_seed(config.seed, {0x726566ULL, v})});
  return build_reference(spaces, variants, config.attacker.spin, config.attacker.keypoint_factor,
                         config.workers);
}

TrialRecord attack_release(const ReferenceEnsemble& ensemble, const PointCloud& released_reference,
                           const RigidTransform& transform, const AttackerOptions& options) {
  TrialRecord rec;
  rec.true_label = released_reference.label.value_or(-1);
  if (released_reference.empty()) {
    rec.inter_abstained = true;
    return rec;
  }
  const auto keypoints = select_keypoints(released_reference, options.keypoint_factor);
  if (keypoints.empty()) {
    rec.true_centroid = centroid(released_reference);
  } else {
    Vec3 sum = Vec3::Zero();
    for (const auto& kp : keypoints) sum += kp.point.position;
    rec.true_centroid = sum / static_cast<double>(keypoints.size());
  }
  PointCloud query = apply_transform(released_reference, transform);
  query.label.reset();
  try {
    const Hypothesis h = infer(ensemble, query, options);
    rec.hypothesis_label = h.label;
    rec.hypothesis_centroid = h.centroid;
    rec.intra_abstained = h.intra_abstained;
  } catch (const UnusableSpaceError&) {
    rec.inter_abstained = true;
  }
  return rec;
}

namespace {

constexpr const char* kOneTimeRaw = "one-time-raw";
constexpr const char* kOneTimeGen = "one-time-generalized";
constexpr const char* kSanity = "sanity";

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

struct Task {
  enum Kind { Sanity, OneTime, Walk } kind;
  double radius = 0.0;
  std::size_t sample = 0;
};

std::optional<double> safe_qos(const PointCloud& released, const PointCloud& raw,
                               const QosOptions& options) {
  if (released.empty() || raw.empty()) return std::nullopt;
  return qos(released, raw, options);
}

bool attacked_release(std::size_t r, const ExperimentConfig& c) {
  return r == 1 || r % c.release_stride == 0 || r == c.releases;
}

void run_task(const Task& task, const ExperimentConfig& c, const std::vector<PointCloud>& spaces,
              const ReferenceEnsemble& ensemble, std::vector<LoggedTrial>& out) {
  const std::size_t n_spaces = spaces.size();
  auto log = [&](const char* mode, double radius, std::size_t release, std::size_t cap,
                 TrialRecord rec) {
    rec.radius = radius;
    rec.release_index = release;
    rec.max_planes = cap;
    rec.trial = task.sample;
    out.push_back({{mode, radius, release, cap}, n_spaces, std::move(rec)});
  };

  if (task.kind == Task::Sanity) {
    const PointCloud& space = spaces[task.sample];
    const std::uint64_t s = derive_seed(c.seed, {0x73616eULL, task.sample});
    TrialRecord rec = attack_release(ensemble, space, random_rigid_transform(s), c.attacker);
    rec.q = 0.0;
    log(kSanity, 0.0, 1, kUnboundedPlanes, std::move(rec));
    return;
  }

  if (task.kind == Task::OneTime) {
    const std::uint64_t s = derive_seed(c.seed, {0x6f6e65ULL, bits(task.radius), task.sample});
    Rng rng(s);
    const PointCloud& space = spaces[uniform_index(rng, n_spaces)];
    const Vec3 center = space[uniform_index(rng, space.size())].position;
    const PointCloud partial = extract_partial(space, center, task.radius);
    const RigidTransform t = random_rigid_transform(derive_seed(s, {2}));
    if (c.include_raw) {
      TrialRecord rec = attack_release(ensemble, partial, t, c.attacker);
      rec.true_label = *space.label;
      rec.q = safe_qos(partial, partial, c.qos);
      log(kOneTimeRaw, task.radius, 1, kUnboundedPlanes, std::move(rec));
    }
    const auto planes = ransac_planes(partial, c.generalization, derive_seed(s, {3}));
    const PointCloud released = project_to_planes(partial, planes);
    TrialRecord rec = attack_release(ensemble, released, t, c.attacker);
    rec.true_label = *space.label;
    rec.q = safe_qos(released, partial, c.qos);
    log(kOneTimeGen, task.radius, 1, kUnboundedPlanes, std::move(rec));
    return;
  }

  const bool conservative = c.mode == ExperimentMode::Conservative;
  const std::uint64_t s = derive_seed(
      c.seed, {conservative ? 0x636f6e73ULL : 0x73756363ULL, bits(task.radius), task.sample});
  Rng rng(s);
  const PointCloud& space = spaces[uniform_index(rng, n_spaces)];
  ReleasePolicy policy;
  policy.radius = task.radius;
  policy.num_releases = c.releases;
  policy.walk_step_max = c.walk_step_max;
  ReleaseSession session(space, policy, c.generalization, derive_seed(s, {1}));
  const RigidTransform t = random_rigid_transform(derive_seed(s, {2}));
  for (std::size_t r = 1; r <= c.releases; ++r) {
    session.step();
    if (!attacked_release(r, c)) continue;
    const ReleaseState& state = session.state();
    auto attack = [&](std::size_t cap) {
      PointCloud released = conservative_release(state, cap);
      released.label = space.label;
      TrialRecord rec = attack_release(ensemble, released, t, c.attacker);
      rec.true_label = *space.label;
      rec.q = safe_qos(released, state.accumulated, c.qos);
      return rec;
    };
    if (!conservative) {
      log("successive", task.radius, r, kUnboundedPlanes, attack(kUnboundedPlanes));
      continue;
    }
    // Caps at or beyond the plane count release the same cloud.
    std::map<std::size_t, TrialRecord> by_effective_cap;
    for (std::size_t cap : c.max_planes) {
      const std::size_t effective = std::max<std::size_t>(1, std::min(cap, state.plane_count()));
      auto it = by_effective_cap.find(effective);
      if (it == by_effective_cap.end()) it = by_effective_cap.emplace(effective, attack(effective)).first;
      log("conservative", task.radius, r, cap, it->second);
    }
  }
}

bool trial_less(const LoggedTrial& a, const LoggedTrial& b) {
  if (a.key != b.key) return a.key < b.key;
  return a.record.trial < b.record.trial;
}

}  // namespace

ExperimentResult run_trials(const ExperimentConfig& config, const std::vector<PointCloud>& spaces,
                            const ReferenceEnsemble& ensemble) {
  config.validate();
  if (spaces.size() < 2) throw PreconditionError("at least two spaces are required");
  std::vector<Task> tasks;
  if (config.sanity_check)
    for (std::size_t i = 0; i < spaces.size(); ++i) tasks.push_back({Task::Sanity, 0.0, i});
  const Task::Kind kind = config.mode == ExperimentMode::OneTime ? Task::OneTime : Task::Walk;
  for (double r : config.radii)
    for (std::size_t i = 0; i < config.samples; ++i) tasks.push_back({kind, r, i});

  std::vector<std::vector<LoggedTrial>> slots(tasks.size());
  parallel_for(tasks.size(), config.workers,
               [&](std::size_t i) { run_task(tasks[i], config, spaces, ensemble, slots[i]); });

  ExperimentResult result;
  for (auto& slot : slots)
    for (auto& t : slot) result.trials.push_back(std::move(t));
  std::stable_sort(result.trials.begin(), result.trials.end(), trial_less);
  result.report = aggregate(result.trials);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto spaces = load_dataset(config.dataset);
  if (spaces.size() < 2) throw PreconditionError("at least two spaces are required");
  const ReferenceEnsemble ensemble = build_experiment_reference(spaces, config);
  return run_trials(config, spaces, ensemble);
}

MetricsReport aggregate(const std::vector<LoggedTrial>& trials) {
  std::map<CellKey, std::pair<std::size_t, std::vector<TrialRecord>>> cells;
  for (const auto& t : trials) {
    auto& cell = cells[t.key];
    cell.first = t.space_count;
    cell.second.push_back(t.record);
  }
  MetricsReport report;
  for (const auto& [key, cell] : cells)
    report.cells.push_back(aggregate_cell(key, cell.second, cell.first));
  return report;
}

namespace {

std::string fixed(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : "nan"; }

std::string cap_text(std::size_t cap) {
  return cap == kUnboundedPlanes ? "inf" : std::to_string(cap);
}

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "mode,space_count,radius_m,release_idx,max_planes,pi1,pi2_m,abstain_rate,q,n_trials\n";
  for (const auto& c : report.cells) {
    out += c.key.mode + "," + std::to_string(c.space_count) + "," + fixed(c.key.radius, 3) + "," +
           std::to_string(c.key.release_index) + "," + cap_text(c.key.max_planes) + "," +
           fixed(c.pi1) + "," + fixed(c.pi2) + "," + fixed(c.abstain_rate) + "," + fixed(c.q) +
           "," + std::to_string(c.n_trials) + "\n";
  }
  return out;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// Per radius of the conservative cells: the largest cap whose Pi1 averaged
/// over releases is at least one half.
std::map<double, std::optional<std::size_t>> conservative_headline(const MetricsReport& report) {
  std::map<double, std::map<std::size_t, std::pair<double, std::size_t>>> sums;
  for (const auto& c : report.cells) {
    if (c.key.mode != "conservative") continue;
    auto& s = sums[c.key.radius][c.key.max_planes];
    s.first += c.pi1;
    ++s.second;
  }
  std::map<double, std::optional<std::size_t>> out;
  for (const auto& [radius, caps] : sums) {
    std::optional<std::size_t> best;
    for (const auto& [cap, s] : caps)
      if (s.first / static_cast<double>(s.second) >= 0.5) best = cap;
    out[radius] = best;
  }
  return out;
}

}  // namespace

std::string metrics_json(const MetricsReport& report) {
  if (report.cells.empty()) throw PreconditionError("report: empty grid");
  json modes = json::object();
  for (const auto& c : report.cells) {
    json cell = {{"release_idx", c.key.release_index},
                 {"max_planes", c.key.max_planes == kUnboundedPlanes ? json(nullptr)
                                                                    : json(c.key.max_planes)},
                 {"space_count", c.space_count},
                 {"pi1", c.pi1},
                 {"band", to_string(privacy_band(c.pi1))},
                 {"pi2_m", optional_number(c.pi2)},
                 {"abstain_rate", c.abstain_rate},
                 {"q", optional_number(c.q)},
                 {"n_trials", c.n_trials}};
    modes[c.key.mode][fixed(c.key.radius, 3)].push_back(std::move(cell));
  }
  json headline = json::object();
  for (const auto& [radius, cap] : conservative_headline(report))
    headline[fixed(radius, 3)] = cap ? json(*cap) : json(nullptr);
  json out = {{"modes", modes}, {"largest_max_planes_pi1_at_least_half", headline}};
  return out.dump(2) + "\n";
}

std::string summary_text(const MetricsReport& report) {
  if (report.cells.empty()) throw PreconditionError("report: empty grid");
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %8s %7s %10s %8s %-6s %9s %8s %9s %7s\n", "mode",
                "radius_m", "release", "max_planes", "pi1", "band", "pi2_m", "abstain", "q",
                "trials");
  out += line;
  for (const auto& c : report.cells) {
    std::snprintf(line, sizeof line, "%-22s %8s %7zu %10s %8s %-6s %9s %8s %9s %7zu\n",
                  c.key.mode.c_str(), fixed(c.key.radius, 3).c_str(), c.key.release_index,
                  cap_text(c.key.max_planes).c_str(), fixed(c.pi1, 4).c_str(),
                  to_string(privacy_band(c.pi1)).c_str(),
                  c.pi2 ? fixed(*c.pi2, 3).c_str() : "nan", fixed(c.abstain_rate, 4).c_str(),
                  c.q ? fixed(*c.q, 4).c_str() : "nan", c.n_trials);
    out += line;
  }
  const auto headline = conservative_headline(report);
  if (!headline.empty()) {
    out += "\nlargest max_planes with mean-over-releases pi1 >= 0.5\n";
    for (const auto& [radius, cap] : headline)
      out += "  radius " + fixed(radius, 3) + " m: " + (cap ? std::to_string(*cap) : "none") + "\n";
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write " + path.string());
  out << text;
  if (!out) throw PreconditionError("cannot write " + path.string());
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void write_report(const MetricsReport& report, const std::filesystem::path& out_dir) {
  if (report.cells.empty()) throw PreconditionError("report: empty grid");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw PreconditionError("cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "metrics.csv", metrics_csv(report));
  write_text(out_dir / "metrics.json", metrics_json(report));
  write_text(out_dir / "summary.txt", summary_text(report));
}

void write_trial_log(const std::vector<LoggedTrial>& trials, const std::filesystem::path& path) {
  std::string text;
  for (const auto& t : trials) {
    const TrialRecord& r = t.record;
    json j = {{"mode", t.key.mode},
              {"radius_m", t.key.radius},
              {"release_idx", t.key.release_index},
              {"max_planes", t.key.max_planes == kUnboundedPlanes ? json(nullptr)
                                                                 : json(t.key.max_planes)},
              {"space_count", t.space_count},
              {"trial", r.trial},
              {"true_label", r.true_label},
              {"true_centroid", vec_json(r.true_centroid)},
              {"hypothesis_label", r.hypothesis_label},
              {"hypothesis_centroid", vec_json(r.hypothesis_centroid)},
              {"intra_abstained", r.intra_abstained},
              {"inter_abstained", r.inter_abstained},
              {"q", optional_number(r.q)}};
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

std::vector<LoggedTrial> read_trial_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open " + path.string());
  std::vector<LoggedTrial> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      LoggedTrial t;
      t.key.mode = j.at("mode").get<std::string>();
      t.key.radius = j.at("radius_m").get<double>();
      t.key.release_index = j.at("release_idx").get<std::size_t>();
      t.key.max_planes = j.at("max_planes").is_null() ? kUnboundedPlanes
                                                       : j.at("max_planes").get<std::size_t>();
      t.space_count = j.at("space_count").get<std::size_t>();
      TrialRecord& r = t.record;
      r.radius = t.key.radius;
      r.release_index = t.key.release_index;
      r.max_planes = t.key.max_planes;
      r.trial = j.at("trial").get<std::size_t>();
      r.true_label = j.at("true_label").get<int>();
      r.true_centroid = json_vec(j.at("true_centroid"));
      r.hypothesis_label = j.at("hypothesis_label").get<int>();
      r.hypothesis_centroid = json_vec(j.at("hypothesis_centroid"));
      r.intra_abstained = j.at("intra_abstained").get<bool>();
      r.inter_abstained = j.at("inter_abstained").get<bool>();
      if (!j.at("q").is_null()) r.q = j.at("q").get<double>();
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw PreconditionError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void export_releases(const std::vector<ReleaseOutput>& releases, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw PreconditionError("cannot create " + out_dir.string() + ": " + ec.message());
  json manifest = json::array();
  for (std::size_t i = 0; i < releases.size(); ++i) {
    const ReleaseOutput& r = releases[i];
    char name[32];
    std::snprintf(name, sizeof name, "release_%03zu.ply", i + 1);
    json entry = {{"release_idx", i + 1},
                  {"points", r.released.size()},
                  {"plane_count", r.plane_count},
                  {"accumulated_points", r.accumulated_count},
                  {"walk_restarted", r.walk_restarted},
                  {"true_center", vec_json(r.true_center)}};
    if (r.released.empty()) {
      entry["file"] = nullptr;
    } else {
      save_ply(r.released, out_dir / name);
      entry["file"] = name;
    }
    manifest.push_back(std::move(entry));
  }
  json transform = json::object();
  if (!releases.empty()) {
    const RigidTransform& t = releases.front().transform;
    json rot = json::array();
    for (int row = 0; row < 3; ++row)
      rot.push_back(json::array({t.rotation(row, 0), t.rotation(row, 1), t.rotation(row, 2)}));
    transform = {{"rotation", rot}, {"translation", vec_json(t.translation)}};
  }
  write_text(out_dir / "manifest.json",
             json({{"transform", transform}, {"releases", manifest}}).dump(2) + "\n");
}

}  // namespace mrpriv
