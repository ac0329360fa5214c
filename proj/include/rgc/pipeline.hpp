#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgc/grading.hpp"
#include "rgc/metrics.hpp"
#include "rgc/nn/network.hpp"
#include "rgc/preprocess.hpp"
#include "rgc/synth.hpp"
#include "rgc/train.hpp"

namespace rgc::pipeline {

namespace fs = std::filesystem;

inline constexpr int kClinicians = 4;

enum class SplitPart { Train, Test };

struct ManifestRecord {
  fs::path scan;  // absolute after loading
  std::optional<fs::path> mask;
  std::optional<GradeLabel> grade;
  std::optional<SplitPart> split;
  std::array<std::optional<GradeLabel>, kClinicians> clinicians;

  /// Scan file stem; unique within a manifest.
  std::string id() const;
};

struct Manifest {
  std::vector<ManifestRecord> records;
};

// CSV with header naming any of scan,mask,grade,split,clinician1..clinician4
// (scan required). Relative paths resolve against the manifest's directory.
Manifest parse_manifest(std::string_view text, const fs::path& base_dir);
Manifest load_manifest(const fs::path& path);
/// Writes paths relative to the manifest's directory where possible.
void save_manifest(const Manifest& m, const fs::path& path);

struct RunConfig {
  std::uint64_t seed = 1;
  /// Used for scans without a sidecar.
  double axial_scale_um = kDefaultAxialScaleUm;
  double train_fraction = 0.7;
  bool stratified = false;
  double screen_threshold = 0.5;

  bool preprocess_enabled = true;
  preprocess::PreprocessConfig preprocess;
  nn::ToyNetOptions network;  // height/width come from the data
  train::TrainConfig train;   // seed, train_fraction, stratified mirrored from above
  grading::SvmConfig svm;
  grading::ThresholdGrader threshold;

  void validate() const;
};

/// Full default config as JSON text.
std::string default_config_json();
/// Parses a config; keys missing from the text keep their defaults, unknown
/// keys are rejected.
RunConfig parse_config(std::string_view json_text);
std::string config_json(const RunConfig& cfg);
/// Applies `dotted.key=value` to a config JSON text. The value is read as JSON
/// when it parses, otherwise as a string. The key must already exist.
std::string apply_override(std::string_view json_text, std::string_view assignment);
/// Defaults, then the optional file, then each override in order.
RunConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides);

/// Reads a manifest scan with the config's axial scale unless a sidecar
/// provides one.
Scan read_record_scan(const ManifestRecord& r, const RunConfig& cfg);

/// Train/test assignment: the manifest's split column when every record has
/// one, otherwise a seeded split (stratified by grade when configured).
train::Split assign_split(const Manifest& m, const RunConfig& cfg);

struct SynthDatasetOptions {
  CohortOptions cohort;
  int healthy = 20;
  int early = 20;
  int advanced = 20;
  /// Each synthetic clinician disagrees with the true grade with this
  /// probability (a neighbouring grade is chosen).
  double clinician_disagreement = 0.1;
};

/// Writes scans, masks, sidecars, and `manifest.csv` into `dir`.
Manifest write_synthetic_dataset(const fs::path& dir, const SynthDatasetOptions& opts);

/// Run directory layout:
///   run.json, split.json
///   preprocess/<id>.png + <id>.json
///   train/model.bin, train/history.csv
///   segment/<id>.png, segment/predictions.csv
///   profiles/<id>.csv, profiles/<id>.json (absent when no column is valid)
///   grade/svm.json, grade/grades.csv
///   evaluate/report.json
/// A stage directory holds a STALE marker until the stage completes.
struct RunOptions {
  fs::path manifest;
  fs::path out_dir;
  std::optional<fs::path> model;  // skip training when given
};

/// Validates the manifest and config, then writes run.json and split.json.
void init_run(const RunOptions& opts, const RunConfig& cfg);

// Each stage reads its inputs from the run directory and fails with a
// StageError naming the missing stage when they are absent or stale.
void preprocess_stage(const fs::path& run_dir);
/// Trains a network, or copies in `model` when given.
void train_stage(const fs::path& run_dir, const std::optional<fs::path>& model = std::nullopt);
void segment_stage(const fs::path& run_dir);
void profile_stage(const fs::path& run_dir);
/// Fits the SVM on ground-truth profiles of glaucomatous training scans and
/// grades the test scans screened as glaucomatous.
void grade_stage(const fs::path& run_dir);
/// evaluate_run plus evaluate/report.json.
metrics::MetricReport evaluate_stage(const fs::path& run_dir);

/// init_run followed by every stage in order.
metrics::MetricReport run(const RunOptions& opts, const RunConfig& cfg);

/// Recomputes the report from a run directory's artifacts.
metrics::MetricReport evaluate_run(const fs::path& run_dir);

struct ClinicianAgreement {
  int clinician = 0;  // 1-based
  std::optional<metrics::CorrelationResult> result;
  std::string reason;  // why the result is undefined
};

/// Ordinal-coded Pearson per clinician column over records with both a
/// prediction (keyed by record id) and that clinician's grade.
std::vector<ClinicianAgreement> clinician_agreement(
    const Manifest& m, const std::vector<std::pair<std::string, GradeLabel>>& predictions);
std::string agreement_json(const std::vector<ClinicianAgreement>& rows);
std::string agreement_csv(const std::vector<ClinicianAgreement>& rows);

/// Reads `id,...,final_grade,...` rows from a run's grades.csv.
std::vector<std::pair<std::string, GradeLabel>> read_final_grades(const fs::path& grades_csv);

}  // namespace rgc::pipeline
