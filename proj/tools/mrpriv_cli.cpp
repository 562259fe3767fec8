#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "mrpriv/attacker.hpp"
#include "mrpriv/harness.hpp"
#include "mrpriv/ply.hpp"
#include "mrpriv/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mrpriv;

namespace {

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig::defaults(ExperimentMode::OneTime) : load_config(path);
}

PointCloud load_with_normals(const fs::path& path, std::size_t normal_k) {
  PointCloud c = load_ply(path);
  if (c.has_normals) return c;
  const auto label = c.label;
  c = estimate_normals(c, normal_k);
  c.label = label;
  return c;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial privacy toolkit for mixed-reality point clouds"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate synthetic labelled spaces as PLY files");
  std::string gen_out;
  SyntheticDatasetSpec gen_spec;
  bool gen_ascii = false;
  gen->add_option("-o,--out-dir", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_spec.count, "Number of spaces")->capture_default_str();
  gen->add_option("--density", gen_spec.density, "Points per square metre")->capture_default_str();
  gen->add_option("--noise", gen_spec.noise_sigma, "Noise sigma in metres")->capture_default_str();
  gen->add_option("--seed", gen_spec.seed)->capture_default_str();
  gen->add_flag("--ascii", gen_ascii, "Write ASCII PLY");

  // describe
  auto* desc = app.add_subcommand("describe", "Compute spin-image descriptors of a cloud");
  std::string desc_in, desc_out, desc_config;
  std::size_t normal_k = 12;
  desc->add_option("-i,--input", desc_in, "Input PLY")->required()->check(CLI::ExistingFile);
  desc->add_option("-o,--out", desc_out, "Descriptor cache file")->required();
  desc->add_option("-c,--config", desc_config, "JSON config for descriptor parameters");
  desc->add_option("--normal-k", normal_k, "Neighbours for normal estimation")->capture_default_str();

  // reference
  auto* ref = app.add_subcommand("reference", "Build the adversary's reference ensemble");
  std::string ref_config, ref_dataset, ref_out;
  ref->add_option("-c,--config", ref_config, "JSON config (dataset, descriptor, generalization)");
  ref->add_option("-d,--dataset", ref_dataset, "Directory of PLY spaces (overrides config)")
      ->check(CLI::ExistingDirectory);
  ref->add_option("-o,--out", ref_out, "Ensemble cache file")->required();

  // infer
  auto* inf = app.add_subcommand("infer", "Infer the space and location of a query cloud");
  std::string inf_ref, inf_query, inf_config, inf_out;
  inf->add_option("-r,--reference", inf_ref, "Ensemble cache file")->required()->check(CLI::ExistingFile);
  inf->add_option("-q,--query", inf_query, "Query PLY")->required()->check(CLI::ExistingFile);
  inf->add_option("-c,--config", inf_config, "JSON config for attacker parameters");
  inf->add_option("-o,--out", inf_out, "Hypothesis JSON (default stdout)");
  inf->add_option("--normal-k", normal_k, "Neighbours for normal estimation")->capture_default_str();

  // release
  auto* rel = app.add_subcommand("release", "Apply the generalization mechanism along a walk");
  std::string rel_in, rel_out, rel_config;
  ReleasePolicy policy;
  std::optional<std::size_t> rel_cap;
  std::optional<double> rel_step;
  std::uint64_t rel_seed = 1;
  rel->add_option("-i,--input", rel_in, "Input PLY space")->required()->check(CLI::ExistingFile);
  rel->add_option("-o,--out-dir", rel_out, "Output directory")->required();
  rel->add_option("-c,--config", rel_config, "JSON config for generalization parameters");
  rel->add_option("--radius", policy.radius, "Release radius in metres")->capture_default_str();
  rel->add_option("--releases", policy.num_releases, "Number of releases")->capture_default_str();
  rel->add_option("--max-planes", rel_cap, "Conservative plane cap (default unbounded)");
  rel->add_option("--walk-step", rel_step, "Maximum walk step (default radius)");
  rel->add_option("--seed", rel_seed)->capture_default_str();
  rel->add_option("--normal-k", normal_k, "Neighbours for normal estimation")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Run a full experiment from a JSON config");
  std::string run_config, run_out;
  std::optional<std::size_t> run_workers;
  run->add_option("-c,--config", run_config, "JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out-dir", run_out, "Output directory")->required();
  run->add_option("-j,--workers", run_workers, "Worker threads (0 = all cores)");

  // report
  auto* rep = app.add_subcommand("report", "Aggregate a trial log into metrics files");
  std::string rep_in, rep_out;
  rep->add_option("-i,--trials", rep_in, "trials.jsonl")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--out-dir", rep_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      fs::create_directories(gen_out);
      const auto spaces = generate_dataset(gen_spec);
      for (const auto& s : spaces) {
        char name[32];
        std::snprintf(name, sizeof name, "space_%02d.ply", *s.label);
        save_ply(s, fs::path(gen_out) / name, gen_ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
        std::cout << name << " " << s.size() << " points\n";
      }
    } else if (*desc) {
      const ExperimentConfig cfg = config_or_default(desc_config);
      const PointCloud cloud = load_with_normals(desc_in, normal_k);
      const DescribedSpace d = describe(cloud, cfg.attacker.spin, cfg.attacker.keypoint_factor);
      save_described_space(d, desc_out);
      std::cout << d.size() << " descriptors of length " << cfg.attacker.spin.length() << "\n";
    } else if (*ref) {
      ExperimentConfig cfg = config_or_default(ref_config);
      if (!ref_dataset.empty()) cfg.dataset.ply_dir = ref_dataset;
      const auto spaces = load_dataset(cfg.dataset);
      const ReferenceEnsemble ensemble = build_experiment_reference(spaces, cfg);
      ensemble.save(ref_out);
      std::cout << ensemble.labels().size() << " spaces, " << cfg.reference_variants + 1
                << " variants each\n";
    } else if (*inf) {
      const ExperimentConfig cfg = config_or_default(inf_config);
      const ReferenceEnsemble ensemble = ReferenceEnsemble::load(inf_ref);
      PointCloud query = load_with_normals(inf_query, normal_k);
      query.label.reset();
      const Hypothesis h = infer(ensemble, query, cfg.attacker);
      json out = {{"label", h.label},
                  {"centroid", {h.centroid.x(), h.centroid.y(), h.centroid.z()}},
                  {"intra_abstained", h.intra_abstained},
                  {"score", h.winning_score},
                  {"query_descriptors", h.query_descriptors}};
      write_output(inf_out, out.dump(2) + "\n");
    } else if (*rel) {
      const ExperimentConfig cfg = config_or_default(rel_config);
      const PointCloud space = load_with_normals(rel_in, normal_k);
      if (rel_cap) policy.max_planes = *rel_cap;
      policy.walk_step_max = rel_step;
      const auto outputs = release_sequence(space, policy, cfg.generalization, rel_seed);
      export_releases(outputs, rel_out);
      std::cout << outputs.size() << " releases written to " << rel_out << "\n";
    } else if (*run) {
      ExperimentConfig cfg = load_config(run_config);
      if (run_workers) cfg.workers = *run_workers;
      const ExperimentResult result = run_experiment(cfg);
      fs::create_directories(run_out);
      write_trial_log(result.trials, fs::path(run_out) / "trials.jsonl");
      write_report(result.report, run_out);
      std::cout << summary_text(result.report);
    } else if (*rep) {
      const auto trials = read_trial_log(rep_in);
      const MetricsReport report = aggregate(trials);
      write_report(report, rep_out);
      std::cout << summary_text(report);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
