#pragma once

#include "eegmatch/dataset.hpp"
#include "eegmatch/error.hpp"
#include "eegmatch/preproc.hpp"
#include "eegmatch/synth.hpp"
#include "eegmatch/train.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace eegmatch::cli {

namespace fs = std::filesystem;

// Nonzero exit status per error category; 1 is reserved for unexpected
// failures and 2 for usage errors.
int exit_code(ErrorKind kind);

struct BuildSpec {
  WindowingSpec window;
  SplitSpec split;
};

// {"windowing": {window_s, overlap_frac, gap_s}, "split": {train_frac,
//  val_frac, test_frac}}; both objects optional.
BuildSpec parse_build_spec(const std::string& text, const std::string& origin = "");

// Single-purpose stages. Each writes into `out` and is deterministic in its
// inputs and seed.

// EEG of every recording -> out/eeg/<subject>/<recording>.ndmm plus a manifest.
DatasetManifest preprocess_stage(const fs::path& manifest, const PreprocessConfig& cfg,
                                 const fs::path& out);

// Base features of every story -> out/features/<name>/<story>.ndmm plus a
// manifest listing them. Expressions are split into their base components.
DatasetManifest featurize_stage(const fs::path& manifest, const std::vector<std::string>& features,
                                const BandpassSpec& bandpass, const fs::path& out);

// Windowed, partitioned dataset plus build.json (feature, seed, windowing).
void build_stage(const fs::path& manifest, const std::string& feature, const BuildSpec& spec,
                 std::uint64_t seed, const fs::path& out);

// out/model (checkpoint), out/training_log.csv, out/train.json.
TrainResult train_stage(const fs::path& dataset, TrainConfig cfg, std::uint64_t seed,
                        const fs::path& out, std::ostream* log = nullptr);

// out/results.csv, out/predictions.csv and out/warnings.txt when subjects drop out.
std::vector<SubjectResult> evaluate_stage(const fs::path& dataset, const fs::path& model,
                                          Partition partition, const fs::path& out,
                                          std::vector<std::string>* warnings = nullptr);

// Synthetic cohort keys: subjects, stories, duration_s, snr_db (number or
// "inf" / "-inf"), coupling, noise, kernel, latency_ms, source_noise_frac.
CohortConfig parse_cohort(const std::string& text, std::uint64_t seed, const std::string& origin = "");

struct ExperimentSpec {
  std::optional<CohortConfig> synth;  // either a synthetic cohort ...
  fs::path manifest;                  // ... or an existing dataset manifest
  std::vector<std::string> features;
  PreprocessConfig preprocess;
  BuildSpec build;
  TrainConfig train;
  std::vector<std::pair<std::string, std::string>> compare;
  std::uint64_t seed = 0;

  void validate() const;
};

ExperimentSpec load_experiment(const fs::path& config, std::optional<std::uint64_t> seed);

// preprocess -> featurize -> build -> train -> evaluate -> stats. Stage
// outputs are cached under out/cache keyed by the SHA-256 of their inputs;
// out/artifacts.json lists every file with its hash.
void run_pipeline(const ExperimentSpec& spec, const fs::path& out, std::ostream& log);

// Sorted {path, sha256, bytes} for every file under root except the listing.
void write_artifact_manifest(const fs::path& root);

}  // namespace eegmatch::cli
