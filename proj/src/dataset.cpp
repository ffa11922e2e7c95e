#include "eegmatch/dataset.hpp"

#include "eegmatch/error.hpp"
#include "eegmatch/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <utility>

namespace eegmatch {

namespace fs = std::filesystem;
using nlohmann::json;

long WindowingSpec::window_frames() const { return std::lround(window_s * fs); }
long WindowingSpec::hop_frames() const {
  return std::lround(static_cast<double>(window_frames()) * (1.0 - overlap_frac));
}
long WindowingSpec::gap_frames() const { return std::lround(gap_s * fs); }

void WindowingSpec::validate() const {
  require(window_s > 0.0 && gap_s > 0.0 && fs > 0.0, ErrorKind::InvalidSpec,
          "window, gap and rate must be positive");
  require(overlap_frac >= 0.0 && overlap_frac < 1.0, ErrorKind::InvalidSpec,
          "overlap fraction must lie in [0, 1)");
  require(window_frames() >= 1 && hop_frames() >= 1, ErrorKind::InvalidSpec,
          "window and hop must span at least one frame");
}

void SplitSpec::validate() const {
  require(train_frac >= 0.0 && val_frac > 0.0 && test_frac > 0.0, ErrorKind::InvalidSpec,
          "split fractions must be positive");
  require(std::abs(train_frac + val_frac + test_frac - 1.0) < 1e-9, ErrorKind::InvalidSpec,
          "split fractions must sum to 1");
}

const char* to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  return "?";
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::Train;
  if (s == "val") return Partition::Val;
  if (s == "test") return Partition::Test;
  fail(ErrorKind::Format, "unknown partition '" + s + "'");
}

std::vector<long> window_starts(const FrameRange& range, const WindowingSpec& spec) {
  spec.validate();
  std::vector<long> starts;
  for (long s = range.begin; s + spec.span_frames() <= range.end; s += spec.hop_frames())
    starts.push_back(s);
  return starts;
}

SplitRanges split_recording(long frames, const SplitSpec& split, const WindowingSpec& spec) {
  split.validate();
  require(frames >= 10 * spec.span_frames(), ErrorKind::InvalidInput,
          "recording of " + std::to_string(frames) + " frames is too short to split (need " +
              std::to_string(10 * spec.span_frames()) + ")");
  const double L = static_cast<double>(frames);
  const double head = split.train_frac / 2.0;
  const long b1 = std::lround(L * head);
  const long b2 = std::lround(L * (head + split.val_frac));
  const long b3 = std::lround(L * (head + split.val_frac + split.test_frac));
  SplitRanges out;
  out.train = {{0, b1}, {b3, frames}};
  out.val = {b1, b2};
  out.test = {b2, b3};
  return out;
}

Eigen::Index DecisionWindowSet::eeg_channels() const {
  return sources.empty() ? 0 : sources.front()->eeg.rows();
}

Eigen::Index DecisionWindowSet::feature_dim() const {
  return sources.empty() ? 0 : sources.front()->feat.rows();
}

std::map<std::string, size_t> DecisionWindowSet::subject_counts() const {
  std::map<std::string, size_t> counts;
  for (const auto& t : triples) ++counts[sources[t.source]->subject_id];
  return counts;
}

namespace {

std::shared_ptr<WindowSource> make_source(const TimeSeriesTensor& eeg,
                                          const TimeSeriesTensor& feat,
                                          const WindowingSpec& spec, const std::string& subject,
                                          const std::string& recording) {
  require(eeg.fs == spec.fs && feat.fs == spec.fs, ErrorKind::InvalidInput,
          "EEG and feature must both be sampled at " + std::to_string(spec.fs) + " Hz");
  const Eigen::Index L = std::min(eeg.frames(), feat.frames());
  auto src = std::make_shared<WindowSource>();
  src->subject_id = subject;
  src->recording_id = recording;
  src->eeg = eeg.data.leftCols(L);
  src->feat = feat.data.leftCols(L);
  return src;
}

void add_range(DecisionWindowSet& set, std::uint32_t source, const FrameRange& range,
               const WindowingSpec& spec, bool order_swap) {
  for (long s : window_starts(range, spec)) {
    set.triples.push_back({source, s, s + spec.mismatch_offset(), true});
    if (order_swap) set.triples.push_back({source, s, s + spec.mismatch_offset(), false});
  }
}

}  // namespace

DecisionWindowSet make_windows(const TimeSeriesTensor& eeg, const TimeSeriesTensor& feat,
                               const WindowingSpec& spec, const std::string& subject_id,
                               const std::string& recording_id) {
  spec.validate();
  DecisionWindowSet set;
  set.window = spec.window_frames();
  set.sources.push_back(make_source(eeg, feat, spec, subject_id, recording_id));
  add_range(set, 0, {0, set.sources[0]->eeg.cols()}, spec, false);
  return set;
}

const DecisionWindowSet& PartitionedDataset::get(Partition p) const {
  switch (p) {
    case Partition::Train: return train;
    case Partition::Val: return val;
    case Partition::Test: return test;
  }
  return train;
}

DecisionWindowSet& PartitionedDataset::get(Partition p) {
  return const_cast<DecisionWindowSet&>(std::as_const(*this).get(p));
}

PartitionedDataset assemble_dataset(const std::vector<RecordingInput>& recordings,
                                    const std::string& feature, const WindowingSpec& spec,
                                    const SplitSpec& split, const AssembleOptions& opts) {
  spec.validate();
  require(!recordings.empty(), ErrorKind::InvalidInput, "no recordings to assemble");
  const auto components = parse_feature_expression(feature);

  std::vector<std::shared_ptr<const WindowSource>> sources;
  for (const auto& rec : recordings) {
    std::vector<TimeSeriesTensor> parts;
    for (const auto& name : components) {
      const auto it = rec.features.find(name);
      require(it != rec.features.end(), ErrorKind::NotFound,
              "recording '" + rec.recording_id + "' has no feature '" + name + "'");
      parts.push_back(it->second);
    }
    // Feature streams of one story can differ by a frame; align before concatenating.
    Eigen::Index L = rec.eeg.frames();
    for (const auto& p : parts) L = std::min(L, p.frames());
    for (auto& p : parts) p.data.conservativeResize(Eigen::NoChange, L);
    sources.push_back(make_source(rec.eeg, concat_features(parts), spec, rec.subject_id,
                                  rec.recording_id));
    if (sources.size() > 1)
      require(sources.back()->eeg.rows() == sources.front()->eeg.rows() &&
                  sources.back()->feat.rows() == sources.front()->feat.rows(),
              ErrorKind::ShapeMismatch,
              "recording '" + rec.recording_id + "' has a different channel count");
  }

  PartitionedDataset out;
  for (auto* set : {&out.train, &out.val, &out.test}) {
    set->sources = sources;
    set->window = spec.window_frames();
  }
  for (std::uint32_t k = 0; k < sources.size(); ++k) {
    const auto ranges = split_recording(sources[k]->eeg.cols(), split, spec);
    for (const auto& r : ranges.train) add_range(out.train, k, r, spec, opts.order_swap);
    add_range(out.val, k, ranges.val, spec, opts.order_swap);
    add_range(out.test, k, ranges.test, spec, opts.order_swap);
  }
  if (opts.shuffle_train) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(out.train.triples.begin(), out.train.triples.end(), rng);
  }
  return out;
}

// ---------------------------------------------------------------------------

void save_dataset(const fs::path& dir, const PartitionedDataset& data) {
  fs::create_directories(dir);
  const auto& sources = data.train.sources;
  for (const auto* set : {&data.val, &data.test})
    require(set->sources == sources, ErrorKind::State, "partitions must share their sources");
  for (size_t k = 0; k < sources.size(); ++k) {
    const auto& s = *sources[k];
    for (const auto& id : {s.subject_id, s.recording_id})
      require(id.find_first_of(",\n") == std::string::npos, ErrorKind::InvalidInput,
              "identifier '" + id + "' contains a comma or newline");
    write_tensor(dir / ("source_" + std::to_string(k) + "_eeg.ndmm"),
                 TimeSeriesTensor(s.eeg, 64.0));
    write_tensor(dir / ("source_" + std::to_string(k) + "_feat.ndmm"),
                 TimeSeriesTensor(s.feat, 64.0));
  }
  std::ofstream csv(dir / "index.csv");
  require(static_cast<bool>(csv), ErrorKind::Io, "cannot write " + (dir / "index.csv").string());
  csv << "triple_id,subject,recording,source,start_frame,mismatch_start,a_is_match,partition\n";
  size_t id = 0;
  for (auto p : {Partition::Train, Partition::Val, Partition::Test}) {
    const auto& set = data.get(p);
    for (const auto& t : set.triples) {
      const auto& s = *set.sources[t.source];
      csv << id++ << ',' << s.subject_id << ',' << s.recording_id << ',' << t.source << ','
          << t.start << ',' << t.mismatch_start << ',' << (t.a_is_match ? 1 : 0) << ','
          << to_string(p) << '\n';
    }
  }
  json meta = {{"window", data.train.window}, {"sources", sources.size()}};
  std::ofstream(dir / "dataset.json") << meta.dump(2) << '\n';
}

PartitionedDataset load_dataset(const fs::path& dir) {
  std::ifstream meta_in(dir / "dataset.json");
  require(static_cast<bool>(meta_in), ErrorKind::Io, "cannot read " + (dir / "dataset.json").string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "dataset.json: " + std::string(e.what()));
  }
  const size_t n_sources = meta.at("sources").get<size_t>();

  PartitionedDataset out;
  std::vector<std::shared_ptr<WindowSource>> sources(n_sources);
  for (size_t k = 0; k < n_sources; ++k) {
    sources[k] = std::make_shared<WindowSource>();
    sources[k]->eeg = read_tensor(dir / ("source_" + std::to_string(k) + "_eeg.ndmm")).data;
    sources[k]->feat = read_tensor(dir / ("source_" + std::to_string(k) + "_feat.ndmm")).data;
  }

  std::ifstream csv(dir / "index.csv");
  require(static_cast<bool>(csv), ErrorKind::Io, "cannot read " + (dir / "index.csv").string());
  std::string line;
  std::getline(csv, line);
  size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    require(f.size() == 8, ErrorKind::Format, "index.csv line " + std::to_string(line_no) +
                                                  ": expected 8 fields");
    Triple t;
    try {
      t.source = static_cast<std::uint32_t>(std::stoul(f[3]));
      t.start = std::stol(f[4]);
      t.mismatch_start = std::stol(f[5]);
      t.a_is_match = f[6] == "1";
    } catch (const std::exception&) {
      fail(ErrorKind::Format, "index.csv line " + std::to_string(line_no) + ": bad number");
    }
    require(t.source < n_sources, ErrorKind::Format,
            "index.csv line " + std::to_string(line_no) + ": source out of range");
    sources[t.source]->subject_id = f[1];
    sources[t.source]->recording_id = f[2];
    out.get(partition_from_string(f[7])).triples.push_back(t);
  }
  for (auto* set : {&out.train, &out.val, &out.test}) {
    set->sources.assign(sources.begin(), sources.end());
    set->window = meta.at("window").get<long>();
    for (const auto& t : set->triples)
      require(t.start >= 0 && t.mismatch_start + set->window <= sources[t.source]->feat.cols(),
              ErrorKind::Format, "index.csv references frames outside its source");
  }
  return out;
}

// ---------------------------------------------------------------------------

fs::path DatasetManifest::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    const json j = json::parse(in);
    m.inventory = j.value("inventory", std::string{});
    m.embeddings = j.value("embeddings", std::string{});
    for (const auto& js : j.at("subjects")) {
      ManifestSubject s;
      s.id = js.at("id").get<std::string>();
      for (const auto& jr : js.at("recordings")) {
        ManifestRecording r;
        r.id = jr.at("id").get<std::string>();
        r.eeg = jr.value("eeg", std::string{});
        r.audio = jr.value("audio", std::string{});
        r.phonemes = jr.value("phonemes", std::string{});
        r.words = jr.value("words", std::string{});
        if (jr.contains("features"))
          for (const auto& [name, p] : jr.at("features").items()) {
            const auto canon = parse_feature_expression(name);
            require(canon.size() == 1, ErrorKind::Format,
                    "manifest feature key '" + name + "' must name a single feature");
            r.features[canon.front()] = p.get<std::string>();
          }
        s.recordings.push_back(std::move(r));
      }
      m.subjects.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  json subjects = json::array();
  for (const auto& s : m.subjects) {
    json recs = json::array();
    for (const auto& r : s.recordings) {
      json jr = {{"id", r.id}};
      if (!r.eeg.empty()) jr["eeg"] = r.eeg.generic_string();
      if (!r.audio.empty()) jr["audio"] = r.audio.generic_string();
      if (!r.phonemes.empty()) jr["phonemes"] = r.phonemes.generic_string();
      if (!r.words.empty()) jr["words"] = r.words.generic_string();
      json feats = json::object();
      for (const auto& [name, p] : r.features) feats[name] = p.generic_string();
      jr["features"] = feats;
      recs.push_back(jr);
    }
    subjects.push_back({{"id", s.id}, {"recordings", recs}});
  }
  json j = {{"subjects", subjects}};
  if (!m.inventory.empty()) j["inventory"] = m.inventory.generic_string();
  if (!m.embeddings.empty()) j["embeddings"] = m.embeddings.generic_string();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<RecordingInput> load_recordings(const DatasetManifest& m, const std::string& feature) {
  const auto components = parse_feature_expression(feature);
  std::vector<RecordingInput> out;
  for (const auto& s : m.subjects)
    for (const auto& r : s.recordings) {
      RecordingInput in;
      in.subject_id = s.id;
      in.recording_id = r.id;
      require(!r.eeg.empty(), ErrorKind::NotFound, "recording '" + r.id + "' lists no EEG");
      in.eeg = read_tensor(m.resolve(r.eeg));
      for (const auto& name : components) {
        const auto it = r.features.find(name);
        require(it != r.features.end(), ErrorKind::NotFound,
                "recording '" + r.id + "' has no feature '" + name + "'");
        in.features[name] = read_tensor(m.resolve(it->second));
      }
      out.push_back(std::move(in));
    }
  return out;
}

}  // namespace eegmatch
