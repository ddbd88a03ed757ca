#pragma once

// Config-driven experiment pipeline: generate -> attack -> detect ->
// calibrate -> report. Every stage is deterministic given the config and its
// master seed; per-sequence seeds come from child_seed(master, stage, index)
// and the worker count never changes outputs.
//
// Run directory layout:
//   config.json               canonical config (output_dir omitted)
//   model.bin                 toy model: text header line + binary payload
//   data/<scheme>.<kind>.jsonl
//   detect/<dataset>.csv      one row per sequence
//   calibrate/<scheme>.csv    thresholds on the null corpus
//   quality/<scheme>.csv      perplexity and log-diversity
//   report/*.csv, report/summary.txt
//   manifest.json             stage files and wall-clock timings

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seekmark/analysis.hpp"
#include "seekmark/attacks.hpp"
#include "seekmark/dataset.hpp"
#include "seekmark/schemes.hpp"
#include "seekmark/textgen.hpp"

namespace seekmark {

inline constexpr const char* kArtifactVersion = "seekmark-0.1.0";

struct AttackSpec {
  std::string name;
  /// "scrub", "copypaste" or "spoof".
  std::string kind;
  /// JSON object text with kind-specific parameters.
  std::string params = "{}";
};

struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  std::string output_dir = "run";
  ModelParams model;
  std::vector<SchemeSpec> schemes;
  std::uint32_t sequences = 500;
  std::uint32_t prompt_len = 16;
  std::uint32_t new_tokens = 200;
  std::vector<AttackSpec> attacks;
  std::uint32_t winmax_min_len = 20;
  bool dedup = false;
  std::vector<double> fprs{0.001, 0.01, 0.05};

  /// Throws ValidationError naming the offending path, e.g.
  /// "config.schemes[1].gamma: ...".
  void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
/// Canonical JSON (sorted keys). output_dir is omitted unless requested.
std::string config_to_json(const ExperimentConfig& cfg, bool include_output_dir = true);
/// FNV-1a of the canonical JSON without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct StageRecord {
  std::string name;
  std::vector<std::string> files;  // relative to the run directory
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string artifact_version = kArtifactVersion;
  std::vector<StageRecord> stages;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

/// Adds or replaces a stage in <run_dir>/manifest.json.
void record_stage(const std::filesystem::path& run_dir, const std::string& config_hash,
                  const StageRecord& stage);

void save_model(const std::filesystem::path& path, const ToyModel& model,
                const std::string& config_hash);
ToyModel load_model(const std::filesystem::path& path);

/// Trains the toy model, then writes <scheme>.wm and <scheme>.null datasets
/// for every scheme. Returns the written files.
std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& cfg, unsigned workers);

/// scheme: empty (use the dataset header), a scheme id (must match the
/// header) or a path to a scheme JSON file (its id must match).
std::filesystem::path cmd_detect(const std::filesystem::path& data, const std::string& scheme,
                                 const std::filesystem::path& out, unsigned workers,
                                 std::uint32_t min_len = 20, bool dedup = false);

/// Attacks a dataset outside the pipeline. params keys per kind:
///   scrub:     edit_rate, kinds
///   copypaste: m_slots, p_fraction, host (path of an unwatermarked dataset)
///   spoof:     model, base (null dataset path), attacker_h, ratio_threshold,
///              pseudo_count, spoof_delta, sequences, new_tokens, prompt_len
std::filesystem::path cmd_attack(const std::filesystem::path& data, const std::string& kind,
                                 const std::string& params, const std::filesystem::path& out,
                                 std::uint64_t seed, unsigned workers);

/// null: a detection CSV or a null JSONL dataset (detected with its header
/// scheme). Writes thresholds for the z and WinMax scores.
std::filesystem::path cmd_calibrate(const std::filesystem::path& null,
                                    const std::vector<double>& fprs,
                                    const std::filesystem::path& out, unsigned workers);

/// grid_json: optional object with hs, ds, gammas, v_size, trials, seed.
std::filesystem::path cmd_verify_props(const std::string& grid_json,
                                       const std::filesystem::path& out, unsigned workers);
VerifyGrid grid_from_json(const std::string& text);

/// Summary tables from the detection CSVs of a run directory. Throws
/// ValidationError("no stage outputs found") when there are none.
std::vector<std::filesystem::path> cmd_report(const std::filesystem::path& run_dir);

/// All stages into cfg.output_dir.
RunManifest run_pipeline(const ExperimentConfig& cfg, unsigned workers);

}  // namespace seekmark
