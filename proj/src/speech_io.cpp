// Alignment, inventory, embedding and WAV file handling.

#include "eegmatch/error.hpp"
#include "eegmatch/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace eegmatch {

long frames_for_duration(double duration_s) {
  return std::lround(duration_s * kFeatureRate);
}

void AlignmentTrack::validate() const {
  for (size_t i = 0; i < intervals.size(); ++i) {
    const auto& iv = intervals[i];
    require(iv.start_s < iv.end_s, ErrorKind::InvalidInput,
            "alignment interval " + std::to_string(i) + " has start >= end");
    require(iv.start_s >= 0.0, ErrorKind::InvalidInput,
            "alignment interval " + std::to_string(i) + " starts before 0");
    if (i > 0) {
      require(iv.start_s >= intervals[i - 1].end_s, ErrorKind::InvalidInput,
              "alignment intervals overlap or are unsorted at index " + std::to_string(i));
    }
  }
}

AlignmentTrack read_alignment(const std::filesystem::path& path, const std::string& story_id) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::NotFound, "cannot open alignment file: " + path.string());
  AlignmentTrack track;
  track.story_id = story_id.empty() ? path.stem().string() : story_id;
  std::string line;
  bool have_header = false;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("#kind=", 0) == 0) {
      const auto kind = line.substr(6);
      if (kind == "phoneme") track.kind = TrackKind::Phoneme;
      else if (kind == "word") track.kind = TrackKind::Word;
      else fail(ErrorKind::Format, "unknown alignment kind '" + kind + "' in " + path.string());
      have_header = true;
      continue;
    }
    if (line[0] == '#') continue;
    std::istringstream ss(line);
    std::string a, b, label;
    if (!std::getline(ss, a, '\t') || !std::getline(ss, b, '\t') || !std::getline(ss, label)) {
      fail(ErrorKind::Format,
           path.string() + ":" + std::to_string(lineno) + ": expected start<TAB>end<TAB>label");
    }
    try {
      track.intervals.push_back({std::stod(a), std::stod(b), label});
    } catch (const std::exception&) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  require(have_header, ErrorKind::Format, "alignment file lacks #kind= header: " + path.string());
  track.validate();
  return track;
}

void write_alignment(const std::filesystem::path& path, const AlignmentTrack& track) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write alignment: " + path.string());
  out << "#kind=" << (track.kind == TrackKind::Phoneme ? "phoneme" : "word") << '\n';
  out.precision(17);
  for (const auto& iv : track.intervals)
    out << iv.start_s << '\t' << iv.end_s << '\t' << iv.label << '\n';
}

// ---------------------------------------------------------------------------

const char* to_string(PhonemeClass c) {
  switch (c) {
    case PhonemeClass::ShortVowel: return "short_vowel";
    case PhonemeClass::LongVowel: return "long_vowel";
    case PhonemeClass::Plosive: return "plosive";
    case PhonemeClass::Fricative: return "fricative";
    case PhonemeClass::Nasal: return "nasal";
    case PhonemeClass::Approximant: return "approximant";
  }
  return "?";
}

PhonemeClass phoneme_class_from_string(const std::string& s) {
  for (auto c : {PhonemeClass::ShortVowel, PhonemeClass::LongVowel, PhonemeClass::Plosive,
                 PhonemeClass::Fricative, PhonemeClass::Nasal, PhonemeClass::Approximant}) {
    if (s == to_string(c)) return c;
  }
  fail(ErrorKind::Format, "unknown phoneme class '" + s + "'");
}

PhonemeInventory::PhonemeInventory(std::vector<std::string> symbols,
                                   std::vector<PhonemeClass> classes)
    : symbols_(std::move(symbols)), classes_(std::move(classes)) {
  require(symbols_.size() == kSize, ErrorKind::InvalidInput,
          "phoneme inventory must list exactly 40 symbols, got " +
              std::to_string(symbols_.size()));
  require(classes_.size() == symbols_.size(), ErrorKind::InvalidInput,
          "every phoneme needs a class");
  for (size_t i = 0; i < symbols_.size(); ++i) {
    require(index_.emplace(symbols_[i], i).second, ErrorKind::InvalidInput,
            "duplicate phoneme symbol '" + symbols_[i] + "'");
  }
}

PhonemeInventory PhonemeInventory::default_dutch() {
  using C = PhonemeClass;
  const std::vector<std::pair<const char*, C>> table = {
      {"ɑ", C::ShortVowel},  {"ɛ", C::ShortVowel},  {"ɪ", C::ShortVowel},
      {"ɔ", C::ShortVowel},  {"ʏ", C::ShortVowel},  {"ə", C::ShortVowel},
      {"aː", C::LongVowel},  {"eː", C::LongVowel},  {"i", C::LongVowel},
      {"oː", C::LongVowel},  {"u", C::LongVowel},   {"y", C::LongVowel},
      {"øː", C::LongVowel},  {"ɛi", C::LongVowel},  {"œy", C::LongVowel},
      {"ʌu", C::LongVowel},  {"p", C::Plosive},     {"b", C::Plosive},
      {"t", C::Plosive},     {"d", C::Plosive},     {"k", C::Plosive},
      {"g", C::Plosive},     {"f", C::Fricative},   {"v", C::Fricative},
      {"s", C::Fricative},   {"z", C::Fricative},   {"x", C::Fricative},
      {"ɣ", C::Fricative},   {"h", C::Fricative},   {"ʃ", C::Fricative},
      {"ʒ", C::Fricative},   {"m", C::Nasal},       {"n", C::Nasal},
      {"ŋ", C::Nasal},       {"ɲ", C::Nasal},       {"l", C::Approximant},
      {"r", C::Approximant}, {"j", C::Approximant}, {"ʋ", C::Approximant},
      {"w", C::Approximant},
  };
  std::vector<std::string> symbols;
  std::vector<PhonemeClass> classes;
  for (const auto& [s, c] : table) {
    symbols.emplace_back(s);
    classes.push_back(c);
  }
  return PhonemeInventory(std::move(symbols), std::move(classes));
}

PhonemeInventory PhonemeInventory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::NotFound, "cannot open phoneme inventory: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "malformed phoneme inventory " + path.string() + ": " + e.what());
  }
  std::vector<std::string> symbols;
  std::vector<PhonemeClass> classes;
  for (const auto& entry : j.at("phonemes")) {
    symbols.push_back(entry.at("symbol").get<std::string>());
    classes.push_back(phoneme_class_from_string(entry.at("class").get<std::string>()));
  }
  return PhonemeInventory(std::move(symbols), std::move(classes));
}

void PhonemeInventory::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["phonemes"] = nlohmann::json::array();
  for (size_t i = 0; i < symbols_.size(); ++i)
    j["phonemes"].push_back({{"symbol", symbols_[i]}, {"class", to_string(classes_[i])}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write inventory: " + path.string());
  out << j.dump(2) << '\n';
}

size_t PhonemeInventory::index_of(const std::string& symbol) const {
  const auto it = index_.find(symbol);
  if (it == index_.end())
    fail(ErrorKind::NotFound, "phoneme '" + symbol + "' is not in the inventory");
  return it->second;
}

// ---------------------------------------------------------------------------

std::string case_fold(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80) ch = static_cast<char>(std::tolower(u));
  }
  return out;
}

void EmbeddingTable::insert(const std::string& word, Vector v) {
  require(static_cast<size_t>(v.size()) == dim_, ErrorKind::ShapeMismatch,
          "embedding for '" + word + "' has dimension " + std::to_string(v.size()) +
              ", expected " + std::to_string(dim_));
  table_[case_fold(word)] = std::move(v);
}

const Vector* EmbeddingTable::find(const std::string& word) const {
  const auto it = table_.find(case_fold(word));
  return it == table_.end() ? nullptr : &it->second;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, size_t dimension) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::NotFound, "cannot open embedding file: " + path.string());
  EmbeddingTable table(dimension);
  std::string line;
  size_t lineno = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    values.clear();
    double v;
    while (ss >> v) values.push_back(v);
    if (lineno == 1 && values.size() == 1) continue;  // "count dim" header
    if (values.size() != dimension) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(dimension) + " values, got " +
                                  std::to_string(values.size()));
    }
    table.insert(word, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(dimension)));
  }
  return table;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write embeddings: " + path.string());
  out.precision(9);
  for (const auto& [word, v] : table_) {
    out << word;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T read_le(const std::vector<char>& buf, size_t pos) {
  T v{};
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

}  // namespace

TimeSeriesTensor read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, "cannot open WAV file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(buf.size() >= 12 && std::memcmp(buf.data(), "RIFF", 4) == 0 &&
              std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          ErrorKind::Format, "not a RIFF/WAVE file: " + path.string());
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  size_t data_pos = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const size_t body = pos + 8;
    require(body + len <= buf.size(), ErrorKind::Format, "truncated WAV chunk in " + path.string());
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == 0xFFFE && len >= 26) format = read_le<std::uint16_t>(buf, body + 24);
    } else if (id == "data") {
      data_pos = body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  require(rate > 0 && data_pos > 0, ErrorKind::Format, "WAV lacks fmt or data chunk: " + path.string());
  require(channels == 1, ErrorKind::InvalidInput, "WAV must be mono: " + path.string());
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  require(pcm16 || f32, ErrorKind::Format, "unsupported WAV encoding (need 16-bit PCM or float32)");
  const size_t n = data_len / (bits / 8);
  Matrix m(1, static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) {
    m(0, static_cast<Eigen::Index>(i)) =
        pcm16 ? read_le<std::int16_t>(buf, data_pos + 2 * i) / 32768.0
              : static_cast<double>(read_le<float>(buf, data_pos + 4 * i));
  }
  return TimeSeriesTensor(std::move(m), static_cast<double>(rate));
}

void write_wav_float(const std::filesystem::path& path, const TimeSeriesTensor& audio) {
  require(audio.channels() == 1, ErrorKind::InvalidInput, "only mono audio can be written");
  require(std::abs(audio.fs - std::round(audio.fs)) < 1e-9, ErrorKind::InvalidInput,
          "WAV needs an integer sampling rate");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write WAV: " + path.string());
  const auto n = static_cast<std::uint32_t>(audio.frames());
  const auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  const auto put16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const auto rate = static_cast<std::uint32_t>(std::lround(audio.fs));
  out.write("RIFF", 4);
  put32(36 + 4 * n);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(3);
  put16(1);
  put32(rate);
  put32(rate * 4);
  put16(4);
  put16(32);
  out.write("data", 4);
  put32(4 * n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto v = static_cast<float>(audio.data(0, i));
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace eegmatch
