#pragma once

#include "eegmatch/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace eegmatch {

struct WindowingSpec {
  double window_s = 5.0;
  double overlap_frac = 0.9;
  double gap_s = 1.0;
  double fs = 64.0;

  long window_frames() const;   // 320
  long hop_frames() const;      // 32
  long gap_frames() const;      // 64
  long mismatch_offset() const { return window_frames() + gap_frames(); }  // 384
  long span_frames() const { return 2 * window_frames() + gap_frames(); }  // 704
  void validate() const;
};

struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  void validate() const;
};

enum class Partition { Train, Val, Test };
const char* to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct FrameRange {
  long begin = 0;
  long end = 0;  // exclusive
  long size() const { return end - begin; }
};

struct SplitRanges {
  std::vector<FrameRange> train;
  FrameRange val;
  FrameRange test;
};

// Window start frames s = begin, begin + hop, ... with s + span <= end.
std::vector<long> window_starts(const FrameRange& range, const WindowingSpec& spec);

// Validation and test sit back to back in the middle; training is the rest.
// Throws InvalidInput when L < 10 * span.
SplitRanges split_recording(long frames, const SplitSpec& split = {},
                            const WindowingSpec& spec = {});

// One recording's aligned EEG and feature streams, shared by its triples.
struct WindowSource {
  std::string subject_id;
  std::string recording_id;
  Matrix eeg;   // C x L
  Matrix feat;  // F x L
};

struct Triple {
  std::uint32_t source = 0;  // index into DecisionWindowSet::sources
  long start = 0;            // EEG and matched-feature start frame
  long mismatch_start = 0;
  bool a_is_match = true;    // false when the pair is emitted order-swapped
};

// Triples reference windows inside shared per-recording streams instead of
// holding copies.
struct DecisionWindowSet {
  std::vector<std::shared_ptr<const WindowSource>> sources;
  std::vector<Triple> triples;
  long window = 320;

  size_t size() const { return triples.size(); }
  const WindowSource& source_of(size_t i) const { return *sources[triples[i].source]; }

  auto eeg(size_t i) const {
    const auto& t = triples[i];
    return sources[t.source]->eeg.middleCols(t.start, window);
  }
  auto match(size_t i) const {
    const auto& t = triples[i];
    return sources[t.source]->feat.middleCols(t.start, window);
  }
  auto mismatch(size_t i) const {
    const auto& t = triples[i];
    return sources[t.source]->feat.middleCols(t.mismatch_start, window);
  }
  auto speech_a(size_t i) const { return triples[i].a_is_match ? match(i) : mismatch(i); }
  auto speech_b(size_t i) const { return triples[i].a_is_match ? mismatch(i) : match(i); }
  double label(size_t i) const { return triples[i].a_is_match ? 1.0 : 0.0; }

  Eigen::Index eeg_channels() const;
  Eigen::Index feature_dim() const;
  // Per-subject triple counts.
  std::map<std::string, size_t> subject_counts() const;
};

// Triples of a single recording over [0, L) with L the common length; no
// order-swapped copies. L < 704 gives an empty set.
DecisionWindowSet make_windows(const TimeSeriesTensor& eeg, const TimeSeriesTensor& feat,
                               const WindowingSpec& spec = {},
                               const std::string& subject_id = {},
                               const std::string& recording_id = {});

struct RecordingInput {
  std::string subject_id;
  std::string recording_id;
  TimeSeriesTensor eeg;
  std::map<std::string, TimeSeriesTensor> features;  // base feature name -> stream
};

struct AssembleOptions {
  std::uint64_t seed = 0;
  bool order_swap = true;      // also emit each triple with a and b exchanged
  bool shuffle_train = true;
};

struct PartitionedDataset {
  DecisionWindowSet train;
  DecisionWindowSet val;
  DecisionWindowSet test;
  const DecisionWindowSet& get(Partition p) const;
  DecisionWindowSet& get(Partition p);
};

// `feature` may be a '+' expression; components are concatenated in order.
// Throws NotFound naming the recording when a component is missing.
PartitionedDataset assemble_dataset(const std::vector<RecordingInput>& recordings,
                                    const std::string& feature,
                                    const WindowingSpec& spec = {},
                                    const SplitSpec& split = {},
                                    const AssembleOptions& opts = {});

// Directory layout: source_<k>_eeg.ndmm, source_<k>_feat.ndmm and index.csv
// (triple_id, subject, recording, source, start_frame, mismatch_start,
// a_is_match, partition).
void save_dataset(const std::filesystem::path& dir, const PartitionedDataset& data);
PartitionedDataset load_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON)

struct ManifestRecording {
  std::string id;
  std::filesystem::path eeg;
  std::filesystem::path audio;
  std::filesystem::path phonemes;
  std::filesystem::path words;
  std::map<std::string, std::filesystem::path> features;
};

struct ManifestSubject {
  std::string id;
  std::vector<ManifestRecording> recordings;
};

struct DatasetManifest {
  std::vector<ManifestSubject> subjects;
  std::filesystem::path inventory;   // optional phoneme inventory JSON
  std::filesystem::path embeddings;  // optional word embedding table
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// {"inventory"?, "embeddings"?, "subjects": [{"id": ..., "recordings": [{"id",
//   "eeg", "audio", "phonemes", "words", "features": {name: path}}]}]}
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);

// Loads every recording's EEG and the feature components of `feature` as
// tensors listed in the manifest.
std::vector<RecordingInput> load_recordings(const DatasetManifest& m, const std::string& feature);

}  // namespace eegmatch
