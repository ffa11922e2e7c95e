#include "eegmatch/synth.hpp"

#include "eegmatch/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>

namespace eegmatch {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

namespace {

constexpr std::uint64_t kTagStory = 1, kTagMixing = 2, kTagNoise = 3, kTagEmbed = 4;

bool is_vowel(PhonemeClass c) {
  return c == PhonemeClass::ShortVowel || c == PhonemeClass::LongVowel;
}

// Per-phoneme acoustic targets, fixed by the symbol's inventory index.
struct PhoneAcoustics {
  double f1, f2;    // formants for voiced segments
  double center;    // noise band for fricatives and bursts
};

PhoneAcoustics acoustics_for(size_t index, PhonemeClass cls) {
  std::mt19937_64 rng(derive_seed(0xAC, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhoneAcoustics a{};
  a.f1 = 300.0 + 550.0 * u(rng);
  a.f2 = 900.0 + 1700.0 * u(rng);
  a.center = cls == PhonemeClass::Fricative ? 2500.0 + 4000.0 * u(rng) : 800.0 + 3200.0 * u(rng);
  if (cls == PhonemeClass::Nasal) a.f1 = 250.0 + 150.0 * u(rng);
  return a;
}

std::pair<double, double> duration_range(PhonemeClass c) {
  switch (c) {
    case PhonemeClass::ShortVowel: return {0.06, 0.11};
    case PhonemeClass::LongVowel: return {0.11, 0.19};
    case PhonemeClass::Plosive: return {0.05, 0.08};
    case PhonemeClass::Fricative: return {0.07, 0.12};
    case PhonemeClass::Nasal: return {0.05, 0.09};
    case PhonemeClass::Approximant: return {0.05, 0.08};
  }
  return {0.05, 0.1};
}

// RBJ constant-peak band-pass, run in place.
void bandpass_noise(std::vector<double>& x, double fc, double q, double fs) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (auto& v : x) {
    const double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void synth_phone(double* out, long n, PhonemeClass cls, const PhoneAcoustics& ac, double f0,
                 double gain, double fs, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> seg(static_cast<size_t>(n), 0.0);
  const bool voiced = is_vowel(cls) || cls == PhonemeClass::Nasal || cls == PhonemeClass::Approximant;
  if (voiced) {
    const double top = std::min(cls == PhonemeClass::Nasal ? 800.0 : 4000.0, 0.45 * fs);
    auto res = [](double f, double formant) {
      const double d = (f - formant) / 150.0;
      return 1.0 / (1.0 + d * d);
    };
    for (int h = 1; h * f0 < top; ++h) {
      const double f = h * f0;
      double amp = res(f, ac.f1);
      if (cls != PhonemeClass::Nasal) amp += 0.6 * res(f, ac.f2);
      amp /= std::sqrt(static_cast<double>(h));
      const double phase = 2.0 * std::numbers::pi * std::uniform_real_distribution<double>(0, 1)(rng);
      for (long t = 0; t < n; ++t)
        seg[t] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / fs + phase);
    }
    const double cls_gain = is_vowel(cls) ? 1.0 : cls == PhonemeClass::Nasal ? 0.5 : 0.6;
    for (auto& v : seg) v *= cls_gain;
  } else {
    const double fc = std::min(ac.center, 0.4 * fs);
    for (auto& v : seg) v = gauss(rng);
    bandpass_noise(seg, fc, cls == PhonemeClass::Fricative ? 1.5 : 1.0, fs);
    if (cls == PhonemeClass::Plosive) {
      // Closure, then a decaying burst.
      const long closure = static_cast<long>(0.4 * static_cast<double>(n));
      for (long t = 0; t < n; ++t)
        seg[t] = t < closure ? 0.0 : 2.0 * seg[t] * std::exp(-static_cast<double>(t - closure) / (0.015 * fs));
    } else {
      for (auto& v : seg) v *= 0.8;
    }
  }
  // 5 ms raised-cosine edges keep segment joins click-free.
  const long ramp = std::min<long>(static_cast<long>(0.005 * fs), n / 2);
  for (long t = 0; t < ramp; ++t) {
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(t) / ramp);
    seg[t] *= w;
    seg[n - 1 - t] *= w;
  }
  for (long t = 0; t < n; ++t) out[t] = gain * seg[t];
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<LexiconEntry> synthetic_lexicon(size_t size, std::uint64_t seed,
                                            const PhonemeInventory& inv) {
  std::vector<size_t> vowels, consonants;
  for (size_t i = 0; i < inv.symbols().size(); ++i)
    (is_vowel(inv.class_of(i)) ? vowels : consonants).push_back(i);
  require(!vowels.empty() && !consonants.empty(), ErrorKind::InvalidInput,
          "inventory needs vowels and consonants");
  std::mt19937_64 rng(derive_seed(seed, 0x1e));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](const std::vector<size_t>& v) {
    return inv.symbols()[v[static_cast<size_t>(u(rng) * v.size()) % v.size()]];
  };
  std::vector<LexiconEntry> lex;
  std::set<std::vector<std::string>> seen;
  while (lex.size() < size) {
    LexiconEntry e;
    const int syllables = 1 + static_cast<int>(u(rng) * 3.0) % 3;
    for (int s = 0; s < syllables; ++s) {
      if (u(rng) < 0.8) e.phonemes.push_back(pick(consonants));
      e.phonemes.push_back(pick(vowels));
      if (u(rng) < 0.4) e.phonemes.push_back(pick(consonants));
    }
    if (!seen.insert(e.phonemes).second) continue;
    e.word = "w" + std::to_string(lex.size());
    lex.push_back(std::move(e));
  }
  return lex;
}

EmbeddingTable synthetic_embeddings(const std::vector<LexiconEntry>& lexicon, size_t dim,
                                    std::uint64_t seed) {
  EmbeddingTable table(dim);
  std::mt19937_64 rng(derive_seed(seed, kTagEmbed));
  std::normal_distribution<double> g(0.0, 1.0);
  for (const auto& e : lexicon) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = g(rng);
    table.insert(e.word, v / v.norm());
  }
  return table;
}

SyntheticStory generate_story(double duration_s, std::uint64_t seed, const StoryOptions& opts,
                              const PhonemeInventory& inv) {
  require(duration_s >= 1.0, ErrorKind::InvalidInput, "synthetic stories need at least 1 s");
  require(opts.fs >= 8000.0, ErrorKind::InvalidInput, "synthetic audio needs fs >= 8 kHz");
  require(opts.silence_frac > 0.0 && opts.silence_frac < 1.0, ErrorKind::InvalidInput,
          "silence fraction must lie in (0, 1)");
  const auto lexicon = synthetic_lexicon(opts.lexicon_size, opts.lexicon_seed, inv);
  std::mt19937_64 rng(derive_seed(seed, kTagStory));
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Zipf-like word frequencies.
  std::vector<double> weights(lexicon.size());
  for (size_t r = 0; r < weights.size(); ++r) weights[r] = 1.0 / static_cast<double>(r + 2);
  std::discrete_distribution<size_t> word_dist(weights.begin(), weights.end());

  struct Phone {
    size_t index;
    long samples;
  };
  struct Word {
    size_t lex;
    std::vector<Phone> phones;
    long samples = 0;
    double f0 = 0, gain = 0;
  };
  const long total = std::lround(duration_s * opts.fs);
  const long speech_target = std::lround(static_cast<double>(total) * (1.0 - opts.silence_frac));
  std::vector<Word> words;
  long speech = 0;
  while (true) {
    Word w;
    w.lex = word_dist(rng);
    for (const auto& sym : lexicon[w.lex].phonemes) {
      const size_t idx = inv.index_of(sym);
      const auto [lo, hi] = duration_range(inv.class_of(idx));
      const long n = std::lround((lo + (hi - lo) * u(rng)) * opts.fs);
      w.phones.push_back({idx, n});
      w.samples += n;
    }
    w.f0 = 100.0 + 120.0 * u(rng);
    w.gain = 0.3 + 0.7 * u(rng);
    if (speech + w.samples > speech_target) break;
    speech += w.samples;
    words.push_back(std::move(w));
  }
  require(!words.empty(), ErrorKind::InvalidInput, "story too short to hold a word");

  // Silence split over the lead-in, the gaps and the tail.
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> gw(words.size() + 1);
  double gsum = 0.0;
  for (auto& g : gw) gsum += (g = expo(rng));
  const long silence = total - speech;
  std::vector<long> gaps(gw.size());
  long assigned = 0;
  for (size_t k = 0; k + 1 < gw.size(); ++k) {
    gaps[k] = static_cast<long>(std::floor(static_cast<double>(silence) * gw[k] / gsum));
    assigned += gaps[k];
  }
  gaps.back() = silence - assigned;

  SyntheticStory story;
  story.id = "story_" + std::to_string(seed);
  Matrix audio = Matrix::Zero(1, total);
  story.phonemes.kind = TrackKind::Phoneme;
  story.words.kind = TrackKind::Word;
  story.phonemes.story_id = story.words.story_id = story.id;
  long pos = 0;
  for (size_t k = 0; k < words.size(); ++k) {
    pos += gaps[k];
    const auto& w = words[k];
    const long word_start = pos;
    for (const auto& ph : w.phones) {
      const auto cls = inv.class_of(ph.index);
      synth_phone(audio.data() + pos, ph.samples, cls, acoustics_for(ph.index, cls), w.f0, w.gain,
                  opts.fs, rng);
      story.phonemes.intervals.push_back({static_cast<double>(pos) / opts.fs,
                                          static_cast<double>(pos + ph.samples) / opts.fs,
                                          inv.symbols()[ph.index]});
      pos += ph.samples;
    }
    story.words.intervals.push_back({static_cast<double>(word_start) / opts.fs,
                                     static_cast<double>(pos) / opts.fs, lexicon[w.lex].word});
  }
  const double peak = audio.cwiseAbs().maxCoeff();
  if (peak > 0.0) audio *= 0.9 / peak;
  story.audio = TimeSeriesTensor(std::move(audio), opts.fs, {"audio"});
  return story;
}

// ---------------------------------------------------------------------------

const char* to_string(NoiseColor c) { return c == NoiseColor::White ? "white" : "pink"; }

NoiseColor noise_color_from_string(const std::string& s) {
  if (s == "white") return NoiseColor::White;
  if (s == "pink") return NoiseColor::Pink;
  fail(ErrorKind::InvalidSpec, "unknown noise color '" + s + "' (white | pink)");
}

const char* to_string(KernelShape k) { return k == KernelShape::Impulse ? "impulse" : "dog"; }

KernelShape kernel_shape_from_string(const std::string& s) {
  if (s == "dog") return KernelShape::DifferenceOfGammas;
  if (s == "impulse") return KernelShape::Impulse;
  fail(ErrorKind::InvalidSpec, "unknown kernel '" + s + "' (dog | impulse)");
}

void ForwardModelConfig::validate() const {
  require(rng_seed.has_value(), ErrorKind::InvalidSpec, "the forward model needs an explicit seed");
  require(latency_ms >= 0.0 && std::isfinite(latency_ms), ErrorKind::InvalidSpec,
          "latency must be finite and non-negative");
  require(!std::isnan(snr_db), ErrorKind::InvalidSpec, "snr_db must not be NaN");
  require(kernel_ms > 0.0, ErrorKind::InvalidSpec, "kernel length must be positive");
  require(channels >= 1, ErrorKind::InvalidSpec, "need at least one EEG channel");
  require(source_noise_frac >= 0.0 && source_noise_frac <= 1.0, ErrorKind::InvalidSpec,
          "source noise fraction must lie in [0, 1]");
  require(mixing.size() == 0 || mixing.rows() == channels, ErrorKind::ShapeMismatch,
          "mixing matrix rows must equal the channel count");
}

Vector response_kernel(const ForwardModelConfig& cfg, double fs) {
  if (cfg.kernel == KernelShape::Impulse) return Vector::Ones(1);
  const auto taps = static_cast<Eigen::Index>(std::floor(cfg.kernel_ms * 1e-3 * fs)) + 1;
  // Gamma shape k = 8, scaled to 1 at its mode; narrow enough that the
  // extrema of the difference stay near the component modes.
  auto gamma = [](double t, double mode) {
    return std::pow(t / mode, 7.0) * std::exp(-7.0 * (t / mode - 1.0));
  };
  Vector k(taps);
  for (Eigen::Index i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) / fs;
    k(i) = gamma(t, 0.1) - 0.6 * gamma(t, 0.2);
  }
  return k / k.norm();
}

Matrix colored_noise(Eigen::Index channels, Eigen::Index frames, NoiseColor color, double fs,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix out(channels, frames);
  for (Eigen::Index c = 0; c < channels; ++c)
    for (Eigen::Index t = 0; t < frames; ++t) out(c, t) = g(rng);
  if (color == NoiseColor::Pink && frames > 1) {
    Eigen::FFT<double> fft;
    std::vector<double> row(static_cast<size_t>(frames));
    std::vector<std::complex<double>> spec;
    const double floor_hz = 0.1;  // caps the drift below 0.1 Hz
    for (Eigen::Index c = 0; c < channels; ++c) {
      for (Eigen::Index t = 0; t < frames; ++t) row[t] = out(c, t);
      fft.fwd(spec, row);
      for (size_t k = 0; k < spec.size(); ++k) {
        const size_t kk = std::min(k, spec.size() - k);
        const double f = fs * static_cast<double>(kk) / static_cast<double>(frames);
        spec[k] *= k == 0 ? 0.0 : 1.0 / std::sqrt(std::max(f, floor_hz));
      }
      fft.inv(row, spec);
      for (Eigen::Index t = 0; t < frames; ++t) out(c, t) = row[t];
    }
  }
  for (Eigen::Index c = 0; c < channels; ++c) {
    out.row(c).array() -= out.row(c).mean();
    const double rms = std::sqrt(out.row(c).squaredNorm() / static_cast<double>(frames));
    if (rms > 0.0) out.row(c) /= rms;
  }
  return out;
}

TimeSeriesTensor generate_eeg(const TimeSeriesTensor& features, const ForwardModelConfig& cfg,
                              EegParts* parts) {
  cfg.validate();
  features.validate();
  const Eigen::Index F = features.channels(), T = features.frames();
  const double fs = features.fs;
  require(cfg.mixing.size() == 0 || cfg.mixing.cols() == F, ErrorKind::ShapeMismatch,
          "mixing matrix columns must equal the feature dimension");
  const std::uint64_t seed = *cfg.rng_seed;

  Matrix mixing = cfg.mixing;
  if (mixing.size() == 0) {
    std::mt19937_64 rng(derive_seed(seed, kTagMixing));
    std::normal_distribution<double> g(0.0, 1.0);
    mixing.resize(cfg.channels, F);
    for (Eigen::Index j = 0; j < F; ++j)
      for (Eigen::Index c = 0; c < cfg.channels; ++c) mixing(c, j) = g(rng);
  }

  Matrix signal = Matrix::Zero(cfg.channels, T);
  const bool signal_on = cfg.snr_db > -std::numeric_limits<double>::infinity();
  if (signal_on) {
    const auto delay = static_cast<Eigen::Index>(std::lround(cfg.latency_ms * 1e-3 * fs));
    const Vector kernel = response_kernel(cfg, fs);
    Matrix drive = Matrix::Zero(F, T);
    for (Eigen::Index f = 0; f < F; ++f) {
      const double mean = features.data.row(f).mean();
      const double sd =
          cfg.standardize ? std::sqrt((features.data.row(f).array() - mean).square().sum() /
                                      static_cast<double>(T))
                          : 1.0;
      if (sd <= 0.0) continue;
      for (Eigen::Index t = 0; t < T; ++t) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < kernel.size(); ++j) {
          const Eigen::Index src = t - delay - j;
          if (src >= 0) acc += kernel(j) * (features.data(f, src) - mean) / sd;
        }
        drive(f, t) = acc;
      }
    }
    signal = mixing * drive;
    const double rms = std::sqrt(signal.squaredNorm() / static_cast<double>(signal.size()));
    if (rms > 0.0) signal /= rms;
  }

  Matrix noise = Matrix::Zero(cfg.channels, T);
  if (cfg.snr_db < std::numeric_limits<double>::infinity()) {
    const auto unit = [](Matrix m) {
      const double e = m.squaredNorm();
      return e > 0.0 ? Matrix(m / std::sqrt(e)) : m;
    };
    const double frac = cfg.source_noise_frac;
    noise = std::sqrt(1.0 - frac) *
            unit(colored_noise(cfg.channels, T, cfg.noise, fs, derive_seed(seed, kTagNoise)));
    if (frac > 0.0)
      noise += std::sqrt(frac) *
               unit(mixing * colored_noise(F, T, cfg.noise, fs, derive_seed(seed, kTagNoise, 1)));
    noise *= std::sqrt(static_cast<double>(noise.size()) / noise.squaredNorm());
    if (signal_on && signal.squaredNorm() > 0.0) {
      // Exact energy ratio over the whole record.
      const double target = signal.squaredNorm() * std::pow(10.0, -cfg.snr_db / 10.0);
      noise *= std::sqrt(target / noise.squaredNorm());
    }
  }

  TimeSeriesTensor eeg(signal + noise, fs);
  for (int c = 0; c < cfg.channels; ++c) eeg.labels.push_back("E" + std::to_string(c + 1));
  if (parts) {
    parts->signal = std::move(signal);
    parts->noise = std::move(noise);
  }
  return eeg;
}

// ---------------------------------------------------------------------------

namespace {

Matrix lagged_design(const Matrix& eeg, const Vector& mean, const std::vector<int>& lags) {
  const Eigen::Index C = eeg.rows(), T = eeg.cols();
  Matrix X = Matrix::Zero(T, C * static_cast<Eigen::Index>(lags.size()));
  for (size_t k = 0; k < lags.size(); ++k)
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::Index src = t + lags[k];
      if (src >= 0 && src < T)
        X.block(t, static_cast<Eigen::Index>(k) * C, 1, C) = (eeg.col(src) - mean).transpose();
    }
  return X;
}

}  // namespace

RidgeDecoder fit_backward_model(const Matrix& eeg, const Vector& target,
                                const std::vector<int>& lags, double lambda) {
  require(eeg.cols() == target.size(), ErrorKind::ShapeMismatch,
          "EEG and target lengths differ");
  require(!lags.empty() && lambda >= 0.0, ErrorKind::InvalidInput,
          "ridge decoder needs lags and a non-negative lambda");
  RidgeDecoder d;
  d.lags = lags;
  d.eeg_mean = eeg.rowwise().mean();
  d.target_mean = target.mean();
  const Matrix X = lagged_design(eeg, d.eeg_mean, lags);
  Matrix G = X.transpose() * X;
  const double ridge = lambda * G.trace() / static_cast<double>(G.rows());
  G.diagonal().array() += ridge;
  const Vector y = target.array() - d.target_mean;
  d.weights = G.ldlt().solve(X.transpose() * y);
  return d;
}

Vector reconstruct(const RidgeDecoder& dec, const Matrix& eeg) {
  require(eeg.rows() == dec.eeg_mean.size(), ErrorKind::ShapeMismatch,
          "EEG channel count differs from the fitted decoder");
  return (lagged_design(eeg, dec.eeg_mean, dec.lags) * dec.weights).array() + dec.target_mean;
}

// ---------------------------------------------------------------------------

namespace {

std::string two_digit(int k) {
  return (k < 10 ? "0" : "") + std::to_string(k);
}

struct CohortStories {
  std::vector<SyntheticStory> stories;
  EmbeddingTable embeddings;
};

CohortStories build_stories(const CohortConfig& cfg, const PhonemeInventory& inv) {
  require(cfg.subjects >= 1 && cfg.stories >= 1, ErrorKind::InvalidSpec,
          "cohort needs at least one subject and one story");
  CohortStories cs;
  for (int k = 0; k < cfg.stories; ++k) {
    auto s = generate_story(cfg.duration_s, derive_seed(cfg.seed, kTagStory, k), cfg.story, inv);
    s.id = "story_" + two_digit(k + 1);
    s.phonemes.story_id = s.words.story_id = s.id;
    cs.stories.push_back(std::move(s));
  }
  cs.embeddings = synthetic_embeddings(
      synthetic_lexicon(cfg.story.lexicon_size, cfg.story.lexicon_seed, inv), cfg.embedding_dim,
      cfg.story.lexicon_seed);
  return cs;
}

ForwardModelConfig subject_forward(const CohortConfig& cfg, int subject, int story, Eigen::Index F) {
  ForwardModelConfig fwd = cfg.forward;
  if (fwd.mixing.size() == 0) {
    std::mt19937_64 rng(derive_seed(cfg.seed, kTagMixing, subject));
    std::normal_distribution<double> g(0.0, 1.0);
    fwd.mixing.resize(fwd.channels, F);
    for (Eigen::Index j = 0; j < F; ++j)
      for (Eigen::Index c = 0; c < fwd.channels; ++c) fwd.mixing(c, j) = g(rng);
  }
  fwd.rng_seed = derive_seed(cfg.seed, kTagNoise, static_cast<std::uint64_t>(subject) * 1000 + story);
  return fwd;
}

}  // namespace

SyntheticCohort make_cohort(const CohortConfig& cfg, const std::vector<std::string>& features) {
  const auto inv = PhonemeInventory::default_dutch();
  auto cs = build_stories(cfg, inv);
  SyntheticCohort out;
  out.embeddings = cs.embeddings;
  FeatureContext ctx;
  ctx.inventory = &inv;
  ctx.embeddings = &out.embeddings;
  ctx.bandpass = cfg.preprocess.bandpass;

  std::set<std::string> bases;
  for (const auto& e : features)
    for (const auto& b : parse_feature_expression(e)) bases.insert(b);

  std::vector<TimeSeriesTensor> coupling;
  std::vector<std::map<std::string, TimeSeriesTensor>> per_story(cs.stories.size());
  for (size_t k = 0; k < cs.stories.size(); ++k) {
    const auto& s = cs.stories[k];
    StoryInputs in{&s.audio, &s.phonemes, &s.words};
    for (const auto& b : bases) per_story[k][b] = compute_base_feature(b, in, ctx);
    coupling.push_back(compute_feature(cfg.coupling, in, ctx));
  }

  for (int subj = 0; subj < cfg.subjects; ++subj) {
    for (size_t k = 0; k < cs.stories.size(); ++k) {
      const auto fwd = subject_forward(cfg, subj, static_cast<int>(k), coupling[k].channels());
      auto eeg = generate_eeg(coupling[k], fwd);
      if (cfg.apply_preprocess) eeg = preprocess_eeg(eeg, cfg.preprocess);
      RecordingInput rec;
      rec.subject_id = "S" + two_digit(subj + 1);
      rec.recording_id = rec.subject_id + "_" + cs.stories[k].id;
      rec.eeg = std::move(eeg);
      rec.features = per_story[k];
      out.recordings.push_back(std::move(rec));
    }
  }
  out.stories = std::move(cs.stories);
  return out;
}

DatasetManifest write_cohort(const CohortConfig& cfg, const fs::path& out_dir) {
  const auto inv = PhonemeInventory::default_dutch();
  auto cs = build_stories(cfg, inv);
  fs::create_directories(out_dir / "stories");
  fs::create_directories(out_dir / "eeg");
  inv.save(out_dir / "inventory.json");
  cs.embeddings.save(out_dir / "embeddings.txt");

  FeatureContext ctx;
  ctx.inventory = &inv;
  ctx.embeddings = &cs.embeddings;
  ctx.bandpass = cfg.preprocess.bandpass;

  DatasetManifest m;
  m.base_dir = out_dir;
  m.inventory = "inventory.json";
  m.embeddings = "embeddings.txt";
  std::vector<TimeSeriesTensor> coupling;
  for (const auto& s : cs.stories) {
    write_wav_float(out_dir / "stories" / (s.id + ".wav"), s.audio);
    write_alignment(out_dir / "stories" / (s.id + ".phonemes.tsv"), s.phonemes);
    write_alignment(out_dir / "stories" / (s.id + ".words.tsv"), s.words);
    StoryInputs in{&s.audio, &s.phonemes, &s.words};
    coupling.push_back(compute_feature(cfg.coupling, in, ctx));
  }
  for (int subj = 0; subj < cfg.subjects; ++subj) {
    ManifestSubject ms;
    ms.id = "S" + two_digit(subj + 1);
    for (size_t k = 0; k < cs.stories.size(); ++k) {
      const auto& s = cs.stories[k];
      const auto fwd = subject_forward(cfg, subj, static_cast<int>(k), coupling[k].channels());
      ManifestRecording r;
      r.id = ms.id + "_" + s.id;
      r.eeg = fs::path("eeg") / (r.id + ".ndmm");
      r.audio = fs::path("stories") / (s.id + ".wav");
      r.phonemes = fs::path("stories") / (s.id + ".phonemes.tsv");
      r.words = fs::path("stories") / (s.id + ".words.tsv");
      write_tensor(out_dir / r.eeg, generate_eeg(coupling[k], fwd));
      ms.recordings.push_back(std::move(r));
    }
    m.subjects.push_back(std::move(ms));
  }
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace eegmatch
