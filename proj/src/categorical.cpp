// Alignment-derived features and the feature registry.

#include "eegmatch/error.hpp"
#include "eegmatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eegmatch {

namespace {

// First 64 Hz frame whose instant k / 64 lies at or after t.
long first_frame_at_or_after(double t_s) {
  return static_cast<long>(std::ceil(t_s * kFeatureRate - 1e-9));
}

// Calls fn(frame, interval_index) for every frame inside a half-open interval.
template <typename Fn>
void for_each_interval_frame(const AlignmentTrack& track, long n_frames, Fn&& fn) {
  for (size_t i = 0; i < track.intervals.size(); ++i) {
    const auto& iv = track.intervals[i];
    const long k0 = std::max(0L, first_frame_at_or_after(iv.start_s));
    const long k1 = std::min(n_frames, first_frame_at_or_after(iv.end_s));
    for (long k = k0; k < k1; ++k) fn(k, i);
  }
}

// Inventory index of the active phoneme in a 40-dim frame, or -1 for silence.
long active_phoneme(const Matrix& ph, long k) {
  Eigen::Index idx = 0;
  const double m = ph.col(k).maxCoeff(&idx);
  return m > 0.5 ? static_cast<long>(idx) : -1;
}

bool is_vowel(PhonemeClass c) {
  return c == PhonemeClass::ShortVowel || c == PhonemeClass::LongVowel;
}

TimeSeriesTensor map_categorical(const TimeSeriesTensor& ph, CategoricalKind kind,
                                 const PhonemeInventory* inv, std::vector<std::string> labels) {
  require(ph.channels() == static_cast<Eigen::Index>(PhonemeInventory::kSize),
          ErrorKind::ShapeMismatch, "expected 40-dimensional phoneme frames");
  const auto dim = static_cast<Eigen::Index>(categorical_dim(kind));
  Matrix out = Matrix::Zero(dim, ph.frames());
  for (long k = 0; k < ph.frames(); ++k) {
    const long p = active_phoneme(ph.data, k);
    if (p < 0) out(dim - 1, k) = 1.0;
    else if (kind == CategoricalKind::AnyPhoneme) out(0, k) = 1.0;
    else out(static_cast<Eigen::Index>(categorical_row(kind, static_cast<size_t>(p), *inv)), k) = 1.0;
  }
  return TimeSeriesTensor(std::move(out), ph.fs, std::move(labels));
}

}  // namespace

TimeSeriesTensor phoneme_onehot(const AlignmentTrack& track, const PhonemeInventory& inv,
                                double duration_s) {
  require(track.kind == TrackKind::Phoneme, ErrorKind::InvalidInput,
          "phoneme one-hot needs a phoneme alignment");
  track.validate();
  std::vector<size_t> rows;
  rows.reserve(track.intervals.size());
  for (const auto& iv : track.intervals) rows.push_back(inv.index_of(iv.label));

  const long n = frames_for_duration(duration_s);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(PhonemeInventory::kSize), n);
  for_each_interval_frame(track, n, [&](long k, size_t i) {
    out(static_cast<Eigen::Index>(rows[i]), k) = 1.0;
  });
  return TimeSeriesTensor(std::move(out), kFeatureRate, inv.symbols());
}

size_t categorical_dim(CategoricalKind kind) {
  switch (kind) {
    case CategoricalKind::Phoneme: return PhonemeInventory::kSize;
    case CategoricalKind::Bpc: return 6;
    case CategoricalKind::VowelConsonant: return 3;
    case CategoricalKind::AnyPhoneme: return 2;
  }
  return 0;
}

size_t categorical_row(CategoricalKind kind, size_t phoneme_index, const PhonemeInventory& inv) {
  if (kind == CategoricalKind::Phoneme) return phoneme_index;
  if (kind == CategoricalKind::AnyPhoneme) return 0;
  const auto cls = inv.class_of(phoneme_index);
  switch (kind) {
    case CategoricalKind::Phoneme: return phoneme_index;
    case CategoricalKind::Bpc:
      switch (cls) {
        case PhonemeClass::ShortVowel: return 0;
        case PhonemeClass::LongVowel: return 1;
        case PhonemeClass::Plosive: return 2;
        case PhonemeClass::Fricative: return 3;
        case PhonemeClass::Nasal:
        case PhonemeClass::Approximant: return 4;
      }
      return 4;
    case CategoricalKind::VowelConsonant: return is_vowel(cls) ? 0 : 1;
    case CategoricalKind::AnyPhoneme: return 0;
  }
  return 0;
}

TimeSeriesTensor map_bpc(const TimeSeriesTensor& phonemes, const PhonemeInventory& inv) {
  return map_categorical(phonemes, CategoricalKind::Bpc, &inv,
                         {"short_vowel", "long_vowel", "plosive", "fricative",
                          "nasal_approximant", "silence"});
}

TimeSeriesTensor map_vowel_consonant(const TimeSeriesTensor& phonemes, const PhonemeInventory& inv) {
  return map_categorical(phonemes, CategoricalKind::VowelConsonant, &inv,
                         {"vowel", "consonant", "silence"});
}

TimeSeriesTensor map_anyphoneme(const TimeSeriesTensor& phonemes) {
  return map_categorical(phonemes, CategoricalKind::AnyPhoneme, nullptr, {"phoneme", "silence"});
}

TimeSeriesTensor onset_variant(const TimeSeriesTensor& feature, CategoricalKind kind,
                               const AlignmentTrack& track, const PhonemeInventory& inv) {
  require(track.kind == TrackKind::Phoneme, ErrorKind::InvalidInput,
          "onset features need a phoneme alignment");
  require(feature.channels() == static_cast<Eigen::Index>(categorical_dim(kind)),
          ErrorKind::ShapeMismatch, "feature dimension does not match its categorical kind");
  const bool has_silence_row = kind != CategoricalKind::Phoneme;
  const auto n = feature.frames();
  TimeSeriesTensor out(Matrix::Zero(feature.channels(), n), feature.fs, feature.labels);
  const auto last = feature.channels() - 1;
  if (has_silence_row) out.data.row(last) = feature.data.row(last);
  for (const auto& iv : track.intervals) {
    const long k = first_frame_at_or_after(iv.start_s);
    if (k < 0 || k >= n || k >= first_frame_at_or_after(iv.end_s)) continue;
    const auto row = categorical_row(kind, inv.index_of(iv.label), inv);
    out.data(static_cast<Eigen::Index>(row), k) = 1.0;
  }
  return out;
}

TimeSeriesTensor word_embedding_sequence(const AlignmentTrack& track, const EmbeddingTable& table,
                                         double duration_s, OovPolicy oov) {
  require(track.kind == TrackKind::Word, ErrorKind::InvalidInput,
          "word embeddings need a word alignment");
  track.validate();
  std::vector<const Vector*> vecs;
  for (const auto& iv : track.intervals) {
    const Vector* v = table.find(iv.label);
    if (!v && oov == OovPolicy::Error)
      fail(ErrorKind::NotFound, "word '" + iv.label + "' has no embedding");
    vecs.push_back(v);
  }
  const long n = frames_for_duration(duration_s);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(table.dimension()), n);
  for_each_interval_frame(track, n, [&](long k, size_t i) {
    if (vecs[i]) out.col(k) = *vecs[i];
  });
  return TimeSeriesTensor(std::move(out), kFeatureRate);
}

TimeSeriesTensor concat_features(const std::vector<TimeSeriesTensor>& parts) {
  require(!parts.empty(), ErrorKind::InvalidInput, "nothing to concatenate");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require(p.frames() == parts.front().frames(), ErrorKind::ShapeMismatch,
            "feature lengths differ: " + std::to_string(p.frames()) + " vs " +
                std::to_string(parts.front().frames()));
    require(p.fs == parts.front().fs, ErrorKind::ShapeMismatch, "feature rates differ");
    rows += p.channels();
  }
  TimeSeriesTensor out(Matrix(rows, parts.front().frames()), parts.front().fs);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.data.middleRows(r, p.channels()) = p.data;
    r += p.channels();
    if (p.labels.size() == static_cast<size_t>(p.channels()))
      out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  if (out.labels.size() != static_cast<size_t>(rows)) out.labels.clear();
  return out;
}

std::vector<TimeSeriesTensor> split_features(const TimeSeriesTensor& x,
                                             const std::vector<Eigen::Index>& dims) {
  Eigen::Index total = 0;
  for (auto d : dims) total += d;
  require(total == x.channels(), ErrorKind::ShapeMismatch, "split dimensions do not sum to C");
  std::vector<TimeSeriesTensor> out;
  Eigen::Index r = 0;
  for (auto d : dims) {
    out.emplace_back(x.data.middleRows(r, d), x.fs);
    r += d;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& registry() {
  static const std::vector<std::string> names = {
      "envelope", "mel", "vad", "phoneme", "bpc", "vowel_consonant", "anyphoneme",
      "bpc_onset", "vowel_consonant_onset", "anyphoneme_onset", "wordemb"};
  return names;
}

std::string canonical(std::string name) {
  name = case_fold(name);
  if (name == "env") return "envelope";
  if (name == "vowelconsonant" || name == "vc") return "vowel_consonant";
  if (name == "vowelconsonant_onset" || name == "vc_onset") return "vowel_consonant_onset";
  if (name == "word_embedding" || name == "wordembedding") return "wordemb";
  return name;
}

CategoricalKind kind_of(const std::string& base) {
  if (base.rfind("bpc", 0) == 0) return CategoricalKind::Bpc;
  if (base.rfind("vowel_consonant", 0) == 0) return CategoricalKind::VowelConsonant;
  if (base.rfind("anyphoneme", 0) == 0) return CategoricalKind::AnyPhoneme;
  return CategoricalKind::Phoneme;
}

}  // namespace

bool is_base_feature(const std::string& name) {
  const auto& r = registry();
  return std::find(r.begin(), r.end(), name) != r.end();
}

std::vector<std::string> base_feature_names() { return registry(); }

std::vector<std::string> parse_feature_expression(const std::string& expr) {
  std::vector<std::string> out;
  std::stringstream ss(expr);
  std::string part;
  while (std::getline(ss, part, '+')) {
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    const auto name = canonical(part);
    require(is_base_feature(name), ErrorKind::InvalidInput,
            "unknown feature '" + part + "' in expression '" + expr + "'");
    out.push_back(name);
  }
  require(!out.empty(), ErrorKind::InvalidInput, "empty feature expression");
  return out;
}

size_t feature_dim(const std::string& base_name, const FeatureContext& ctx) {
  if (base_name == "envelope" || base_name == "vad") return 1;
  if (base_name == "mel") return 28;
  if (base_name == "wordemb") return ctx.embeddings ? ctx.embeddings->dimension() : 300;
  require(is_base_feature(base_name), ErrorKind::InvalidInput, "unknown feature '" + base_name + "'");
  return categorical_dim(kind_of(base_name));
}

TimeSeriesTensor compute_base_feature(const std::string& name, const StoryInputs& story,
                                      const FeatureContext& ctx) {
  require(story.audio != nullptr, ErrorKind::InvalidInput, "story audio is required");
  const double duration = story.audio->duration_s();
  if (name == "envelope") return envelope_powerlaw(*story.audio, ctx.bandpass);
  if (name == "mel") return mel_spectrogram(*story.audio, ctx.bandpass);
  if (name == "vad") return vad(*story.audio);
  if (name == "wordemb") {
    require(story.words != nullptr, ErrorKind::NotFound, "feature 'wordemb' needs a word alignment");
    require(ctx.embeddings != nullptr, ErrorKind::NotFound, "feature 'wordemb' needs an embedding table");
    return word_embedding_sequence(*story.words, *ctx.embeddings, duration, ctx.oov);
  }
  require(is_base_feature(name), ErrorKind::InvalidInput, "unknown feature '" + name + "'");
  require(story.phonemes != nullptr, ErrorKind::NotFound,
          "feature '" + name + "' needs a phoneme alignment");
  require(ctx.inventory != nullptr, ErrorKind::NotFound,
          "feature '" + name + "' needs a phoneme inventory");
  const auto& inv = *ctx.inventory;
  const auto ph = phoneme_onehot(*story.phonemes, inv, duration);
  if (name == "phoneme") return ph;
  const auto kind = kind_of(name);
  TimeSeriesTensor base = kind == CategoricalKind::Bpc              ? map_bpc(ph, inv)
                          : kind == CategoricalKind::VowelConsonant ? map_vowel_consonant(ph, inv)
                                                                    : map_anyphoneme(ph);
  if (name.size() > 6 && name.substr(name.size() - 6) == "_onset")
    return onset_variant(base, kind, *story.phonemes, inv);
  return base;
}

TimeSeriesTensor compute_feature(const std::string& expr, const StoryInputs& story,
                                 const FeatureContext& ctx) {
  std::vector<TimeSeriesTensor> parts;
  for (const auto& name : parse_feature_expression(expr))
    parts.push_back(compute_base_feature(name, story, ctx));
  return parts.size() == 1 ? parts.front() : concat_features(parts);
}

}  // namespace eegmatch
