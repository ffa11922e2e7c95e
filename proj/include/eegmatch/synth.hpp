#pragma once

#include "eegmatch/dataset.hpp"
#include "eegmatch/features.hpp"
#include "eegmatch/preproc.hpp"
#include "eegmatch/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace eegmatch {

// Deterministic seed derivation (splitmix64 over the inputs).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// ---------------------------------------------------------------------------
// Stories

struct LexiconEntry {
  std::string word;
  std::vector<std::string> phonemes;
};

// Pseudo-words of 1-3 syllables over the inventory; identical for a given seed.
std::vector<LexiconEntry> synthetic_lexicon(size_t size, std::uint64_t seed,
                                            const PhonemeInventory& inv);
// Unit-norm Gaussian vectors, one per lexicon word.
EmbeddingTable synthetic_embeddings(const std::vector<LexiconEntry>& lexicon, size_t dim,
                                    std::uint64_t seed);

struct StoryOptions {
  double fs = 16000.0;
  double silence_frac = 0.25;  // share of the story outside words
  size_t lexicon_size = 400;
  std::uint64_t lexicon_seed = 1;  // shared vocabulary across stories
};

struct SyntheticStory {
  std::string id;
  TimeSeriesTensor audio;  // 1 x T
  AlignmentTrack phonemes;
  AlignmentTrack words;
};

// Words are runs of phoneme segments (harmonic tones for vowels, nasals and
// approximants, band-passed noise for fricatives, closure plus burst for
// plosives) separated by exact silence. Throws InvalidInput for durations
// under 1 s.
SyntheticStory generate_story(double duration_s, std::uint64_t seed, const StoryOptions& opts = {},
                              const PhonemeInventory& inv = PhonemeInventory::default_dutch());

// ---------------------------------------------------------------------------
// Forward model

enum class NoiseColor { White, Pink };
enum class KernelShape { DifferenceOfGammas, Impulse };

const char* to_string(NoiseColor c);
NoiseColor noise_color_from_string(const std::string& s);
const char* to_string(KernelShape k);
KernelShape kernel_shape_from_string(const std::string& s);

struct ForwardModelConfig {
  double latency_ms = 0.0;
  KernelShape kernel = KernelShape::DifferenceOfGammas;
  double kernel_ms = 400.0;
  int channels = 64;
  Matrix mixing;  // channels x F; empty draws a Gaussian matrix from the seed
  double snr_db = 0.0;  // +inf: noise off, -inf: signal off
  NoiseColor noise = NoiseColor::Pink;
  // Share of the noise energy that is ongoing activity of the responding
  // sources (mixed like the signal); the rest is independent per channel.
  double source_noise_frac = 1.0;
  // Scale every feature row to unit variance before the kernel. Off: rows
  // are only centred, so louder bands drive the EEG harder.
  bool standardize = false;
  std::optional<std::uint64_t> rng_seed;  // mandatory

  void validate() const;
};

// Kernel taps at fs over [0, kernel_ms]. The difference of gammas has a
// positive lobe near 100 ms and a negative one near 200 ms; unit L2 norm.
Vector response_kernel(const ForwardModelConfig& cfg, double fs);

// Unit-RMS noise per channel; pink has a 1/f power spectrum.
Matrix colored_noise(Eigen::Index channels, Eigen::Index frames, NoiseColor color, double fs,
                     std::uint64_t seed);

struct EegParts {
  Matrix signal;  // after SNR scaling
  Matrix noise;
};

// EEG = mixing x (kernel * delayed features) + noise. Feature rows are
// centred (or standardized); the signal part has unit overall RMS and the noise is
// scaled to the requested SNR (energy ratio over all channels and frames).
// Without signal the noise has unit overall RMS.
TimeSeriesTensor generate_eeg(const TimeSeriesTensor& features, const ForwardModelConfig& cfg,
                              EegParts* parts = nullptr);

// ---------------------------------------------------------------------------
// Linear backward model (sanity decoder)

struct RidgeDecoder {
  std::vector<int> lags;  // EEG frames after the stimulus
  Vector weights;         // channel-major within each lag
  Vector eeg_mean;
  double target_mean = 0.0;
};

// Reconstructs target(t) from eeg(:, t + lag) for every lag. lambda is
// relative to the mean eigenvalue of the design covariance.
RidgeDecoder fit_backward_model(const Matrix& eeg, const Vector& target,
                                const std::vector<int>& lags, double lambda = 1e-2);
Vector reconstruct(const RidgeDecoder& dec, const Matrix& eeg);

// ---------------------------------------------------------------------------
// Cohorts

struct CohortConfig {
  int subjects = 2;
  int stories = 2;
  double duration_s = 120.0;
  std::string coupling = "envelope";  // feature expression driving the EEG
  ForwardModelConfig forward;         // mixing and seed are set per subject
  std::uint64_t seed = 0;
  StoryOptions story;
  PreprocessConfig preprocess;
  bool apply_preprocess = true;
  size_t embedding_dim = 300;
};

struct SyntheticCohort {
  std::vector<SyntheticStory> stories;
  std::vector<RecordingInput> recordings;  // subject-major
  EmbeddingTable embeddings;
};

// Every subject hears every story. Each subject has its own mixing matrix;
// each recording its own noise. `features` lists expressions whose base
// components are attached to every recording.
SyntheticCohort make_cohort(const CohortConfig& cfg, const std::vector<std::string>& features);

// Writes stories (WAV plus alignments), raw 64 Hz EEG tensors, the phoneme
// inventory, the embedding table and manifest.json; returns the manifest.
DatasetManifest write_cohort(const CohortConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace eegmatch
