#pragma once

#include "eegmatch/preproc.hpp"
#include "eegmatch/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace eegmatch {

inline constexpr double kFeatureRate = 64.0;

// Number of 64 Hz frames covering a story of the given duration.
long frames_for_duration(double duration_s);

// ---------------------------------------------------------------------------
// Alignments

enum class TrackKind { Phoneme, Word };

struct Interval {
  double start_s;
  double end_s;
  std::string label;
};

struct AlignmentTrack {
  std::vector<Interval> intervals;
  TrackKind kind = TrackKind::Phoneme;
  std::string story_id;

  // Sorted, non-overlapping, start < end.
  void validate() const;
};

// UTF-8 TSV with a "#kind=phoneme|word" header and start/end/label columns.
AlignmentTrack read_alignment(const std::filesystem::path& path,
                              const std::string& story_id = {});
void write_alignment(const std::filesystem::path& path, const AlignmentTrack& track);

// ---------------------------------------------------------------------------
// Phoneme inventory

enum class PhonemeClass { ShortVowel, LongVowel, Plosive, Fricative, Nasal, Approximant };

const char* to_string(PhonemeClass c);
PhonemeClass phoneme_class_from_string(const std::string& s);

class PhonemeInventory {
 public:
  static constexpr size_t kSize = 40;

  PhonemeInventory(std::vector<std::string> symbols, std::vector<PhonemeClass> classes);

  // 40-symbol Dutch inventory used by the synthetic stories.
  static PhonemeInventory default_dutch();
  static PhonemeInventory load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::vector<std::string>& symbols() const { return symbols_; }
  PhonemeClass class_of(size_t index) const { return classes_.at(index); }
  // Throws NotFound naming the symbol when absent.
  size_t index_of(const std::string& symbol) const;
  bool contains(const std::string& symbol) const { return index_.count(symbol) != 0; }

 private:
  std::vector<std::string> symbols_;
  std::vector<PhonemeClass> classes_;
  std::unordered_map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// Word embeddings

class EmbeddingTable {
 public:
  explicit EmbeddingTable(size_t dimension = 300) : dim_(dimension) {}

  // "word v1 ... vD" per line; an optional "count dim" header is skipped.
  static EmbeddingTable load(const std::filesystem::path& path, size_t dimension = 300);
  void save(const std::filesystem::path& path) const;

  size_t dimension() const { return dim_; }
  size_t size() const { return table_.size(); }
  void insert(const std::string& word, Vector v);
  // Lookup is case-folded; nullptr when absent.
  const Vector* find(const std::string& word) const;

 private:
  size_t dim_;
  std::map<std::string, Vector> table_;
};

std::string case_fold(const std::string& s);

// ---------------------------------------------------------------------------
// Audio

// Mono WAV, 16-bit PCM or 32-bit float. Multichannel files are rejected.
TimeSeriesTensor read_wav(const std::filesystem::path& path);
void write_wav_float(const std::filesystem::path& path, const TimeSeriesTensor& audio);

// ---------------------------------------------------------------------------
// Acoustic features

struct EnvelopeOptions {
  int bands = 28;
  double low_hz = 50.0;
  double high_hz = 5000.0;
  double exponent = 0.6;
};

// Average of power-law compressed gammatone subband magnitudes at the audio
// rate, before any rate conversion or filtering.
TimeSeriesTensor envelope_subbands_raw(const TimeSeriesTensor& audio,
                                       const EnvelopeOptions& opts = {});

// Raw envelope resampled to 64 Hz and band-limited per `bandpass`.
TimeSeriesTensor envelope_powerlaw(const TimeSeriesTensor& audio,
                                   const BandpassSpec& bandpass = {},
                                   const EnvelopeOptions& opts = {});

struct MelOptions {
  int bands = 28;
  double low_hz = 50.0;
  double high_hz = 5000.0;
  double window_s = 0.04;
  int oversample = 8;  // frames per 64 Hz output frame before decimation
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// bands + 2 mel-spaced edge frequencies; band m spans [edge m, edge m+2].
std::vector<double> mel_band_edges(const MelOptions& opts = {});

// Mel-weighted STFT magnitudes (no log) at exactly 64 frames/s, no
// band-limiting. Hann frames are taken at oversample x 64 Hz and decimated.
TimeSeriesTensor mel_spectrogram_raw(const TimeSeriesTensor& audio,
                                     const MelOptions& opts = {});
TimeSeriesTensor mel_spectrogram(const TimeSeriesTensor& audio,
                                 const BandpassSpec& bandpass = {},
                                 const MelOptions& opts = {});

struct VadOptions {
  double frame_s = 0.015;
  double preemphasis = 0.97;
  double percentile = 75.0;
};

struct VadFrames {
  std::vector<double> energy;  // pre-emphasized energy per frame
  std::vector<int> active;     // energy > threshold
  double threshold = 0.0;
  size_t frame_len = 0;        // samples
};

// Non-overlapping frames; the threshold is the story-global percentile
// (linear interpolation between order statistics).
VadFrames vad_frames(const TimeSeriesTensor& audio, const VadOptions& opts = {});
// Frame decisions sampled at 64 Hz (the frame containing each instant k / 64).
TimeSeriesTensor vad(const TimeSeriesTensor& audio, const VadOptions& opts = {});

// ---------------------------------------------------------------------------
// Categorical features (never band-limited)

// 40 x T' one-hot; silence frames are all-zero. Intervals are half-open.
TimeSeriesTensor phoneme_onehot(const AlignmentTrack& track, const PhonemeInventory& inv,
                                double duration_s);

// Rows: short vowel, long vowel, plosive, fricative, nasal/approximant, silence.
TimeSeriesTensor map_bpc(const TimeSeriesTensor& phonemes, const PhonemeInventory& inv);
// Rows: vowel, consonant, silence.
TimeSeriesTensor map_vowel_consonant(const TimeSeriesTensor& phonemes,
                                     const PhonemeInventory& inv);
// Rows: any phoneme, silence.
TimeSeriesTensor map_anyphoneme(const TimeSeriesTensor& phonemes);

enum class CategoricalKind { Phoneme, Bpc, VowelConsonant, AnyPhoneme };

size_t categorical_dim(CategoricalKind kind);
// Row of `kind` that a phoneme of the given inventory index maps to.
size_t categorical_row(CategoricalKind kind, size_t phoneme_index, const PhonemeInventory& inv);

// Single-frame pulses at each interval's first frame in the row the
// non-onset feature assigns; the silence row (if any) is copied from
// `feature`.
TimeSeriesTensor onset_variant(const TimeSeriesTensor& feature, CategoricalKind kind,
                               const AlignmentTrack& track, const PhonemeInventory& inv);

enum class OovPolicy { Zero, Error };

TimeSeriesTensor word_embedding_sequence(const AlignmentTrack& track,
                                         const EmbeddingTable& table, double duration_s,
                                         OovPolicy oov = OovPolicy::Zero);

TimeSeriesTensor concat_features(const std::vector<TimeSeriesTensor>& parts);
std::vector<TimeSeriesTensor> split_features(const TimeSeriesTensor& x,
                                             const std::vector<Eigen::Index>& dims);

// ---------------------------------------------------------------------------
// Feature registry

struct StoryInputs {
  const TimeSeriesTensor* audio = nullptr;
  const AlignmentTrack* phonemes = nullptr;
  const AlignmentTrack* words = nullptr;
};

struct FeatureContext {
  const PhonemeInventory* inventory = nullptr;
  const EmbeddingTable* embeddings = nullptr;
  BandpassSpec bandpass{};
  OovPolicy oov = OovPolicy::Zero;
};

// Base feature names: envelope, mel, vad, phoneme, bpc, vowel_consonant,
// anyphoneme, bpc_onset, vowel_consonant_onset, anyphoneme_onset, wordemb.
bool is_base_feature(const std::string& name);
std::vector<std::string> base_feature_names();
// "env+bpc" -> {"envelope", "bpc"}; aliases are canonicalized.
std::vector<std::string> parse_feature_expression(const std::string& expr);
size_t feature_dim(const std::string& base_name, const FeatureContext& ctx = {});

TimeSeriesTensor compute_base_feature(const std::string& name, const StoryInputs& story,
                                      const FeatureContext& ctx);
// Computes every component of the expression and concatenates them.
TimeSeriesTensor compute_feature(const std::string& expr, const StoryInputs& story,
                                 const FeatureContext& ctx);

}  // namespace eegmatch
