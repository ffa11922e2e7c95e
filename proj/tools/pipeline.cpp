#include "pipeline.hpp"

#include "hash.hpp"

#include "eegmatch/features.hpp"
#include "eegmatch/model.hpp"
#include "eegmatch/stats.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace eegmatch::cli {

using json = nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return 3;
    case ErrorKind::InvalidSpec: return 4;
    case ErrorKind::Degenerate: return 5;
    case ErrorKind::ShapeMismatch: return 6;
    case ErrorKind::Io: return 7;
    case ErrorKind::Format: return 8;
    case ErrorKind::NotFound: return 9;
    case ErrorKind::Numerical: return 10;
    case ErrorKind::State: return 11;
  }
  return 1;
}

namespace {

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "malformed JSON " + origin + ": " + e.what());
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::NotFound, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + p.string());
  out << text;
}

fs::path absolute_normal(const fs::path& p) {
  return p.empty() ? p : fs::absolute(p).lexically_normal();
}

// Path of `target` as seen from directory `dir`.
fs::path relative_to(const fs::path& target, const fs::path& dir) {
  return absolute_normal(target).lexically_relative(absolute_normal(dir));
}

// A copy of the manifest whose paths resolve from `new_base`.
DatasetManifest rebase(const DatasetManifest& m, const fs::path& new_base) {
  DatasetManifest out = m;
  out.base_dir = new_base;
  auto fix = [&](fs::path& p) {
    if (!p.empty()) p = relative_to(m.resolve(p), new_base);
  };
  fix(out.inventory);
  fix(out.embeddings);
  for (auto& s : out.subjects)
    for (auto& r : s.recordings) {
      fix(r.eeg);
      fix(r.audio);
      fix(r.phonemes);
      fix(r.words);
      for (auto& [name, p] : r.features) fix(p);
    }
  return out;
}

std::string field_or_fail(const fs::path& p, const std::string& recording, const char* field) {
  require(!p.empty(), ErrorKind::NotFound,
          "manifest recording '" + recording + "' has no '" + field + "' entry");
  return p.string();
}

double parse_snr(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  fail(ErrorKind::InvalidSpec, "snr_db must be a number, \"inf\" or \"-inf\"");
}

json snr_json(double snr) {
  if (std::isinf(snr)) return snr > 0 ? "inf" : "-inf";
  return snr;
}

// Sorted "relpath sha256" lines for every file below dir.
std::vector<std::pair<std::string, std::string>> file_hashes(const fs::path& dir,
                                                             const std::set<std::string>& skip) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = e.path().lexically_relative(dir).generic_string();
    if (skip.count(rel)) continue;
    out.emplace_back(rel, sha256_file(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string dir_digest(const fs::path& dir) {
  std::string acc;
  for (const auto& [rel, h] : file_hashes(dir, {".complete"})) acc += rel + ' ' + h + '\n';
  return sha256_hex(acc);
}

// Hash of a manifest and every file it references.
std::string manifest_digest(const fs::path& manifest_path) {
  const auto m = load_manifest(manifest_path);
  std::vector<std::string> parts{sha256_file(manifest_path)};
  auto add = [&](const fs::path& p) {
    if (!p.empty()) parts.push_back(sha256_file(m.resolve(p)));
  };
  add(m.inventory);
  add(m.embeddings);
  for (const auto& s : m.subjects)
    for (const auto& r : s.recordings) {
      add(r.eeg);
      add(r.audio);
      add(r.phonemes);
      add(r.words);
      for (const auto& [name, p] : r.features) add(p);
    }
  std::string acc;
  for (const auto& p : parts) acc += p + '\n';
  return sha256_hex(acc);
}

json bandpass_json(const BandpassSpec& b) {
  return {{"low_hz", b.low_hz}, {"high_hz", b.high_hz}, {"stop_atten_db", b.stop_atten_db},
          {"pass_ripple_db", b.pass_ripple_db}, {"order", b.order}};
}

json preprocess_json(const PreprocessConfig& c) {
  return {{"bandpass", bandpass_json(c.bandpass)}, {"target_fs", c.target_fs},
          {"reference", c.reference}, {"normalize", c.normalize}};
}

json build_json(const BuildSpec& b) {
  return {{"windowing",
           {{"window_s", b.window.window_s}, {"overlap_frac", b.window.overlap_frac},
            {"gap_s", b.window.gap_s}, {"fs", b.window.fs}}},
          {"split",
           {{"train_frac", b.split.train_frac}, {"val_frac", b.split.val_frac},
            {"test_frac", b.split.test_frac}}}};
}

json train_json(const TrainConfig& c) {
  json j = {{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
            {"max_epochs", c.max_epochs}, {"patience", c.patience},
            {"beta1", c.beta1}, {"beta2", c.beta2}, {"adam_eps", c.adam_eps},
            {"max_batches_per_epoch", c.max_batches_per_epoch}};
  if (c.rng_seed) j["rng_seed"] = *c.rng_seed;
  return j;
}

json cohort_json(const CohortConfig& c) {
  return {{"subjects", c.subjects}, {"stories", c.stories}, {"duration_s", c.duration_s},
          {"snr_db", snr_json(c.forward.snr_db)}, {"coupling", c.coupling},
          {"noise", to_string(c.forward.noise)}, {"kernel", to_string(c.forward.kernel)},
          {"latency_ms", c.forward.latency_ms},
          {"source_noise_frac", c.forward.source_noise_frac}, {"seed", c.seed}};
}

std::string safe_name(const std::string& expr) {
  std::string s = expr;
  for (auto& ch : s)
    if (ch == '/' || ch == '\\' || ch == ' ') ch = '_';
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

BuildSpec parse_build_spec(const std::string& text, const std::string& origin) {
  const json j = parse_json(text, origin);
  BuildSpec b;
  try {
    if (j.contains("windowing")) {
      const auto& w = j["windowing"];
      b.window.window_s = w.value("window_s", b.window.window_s);
      b.window.overlap_frac = w.value("overlap_frac", b.window.overlap_frac);
      b.window.gap_s = w.value("gap_s", b.window.gap_s);
      b.window.fs = w.value("fs", b.window.fs);
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      b.split.train_frac = s.value("train_frac", b.split.train_frac);
      b.split.val_frac = s.value("val_frac", b.split.val_frac);
      b.split.test_frac = s.value("test_frac", b.split.test_frac);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "dataset config " + origin + ": " + e.what());
  }
  b.window.validate();
  b.split.validate();
  return b;
}

DatasetManifest preprocess_stage(const fs::path& manifest, const PreprocessConfig& cfg,
                                 const fs::path& out) {
  const auto m = load_manifest(manifest);
  fs::create_directories(out);
  auto result = rebase(m, out);
  for (auto& s : result.subjects)
    for (auto& r : s.recordings) {
      const auto in_path = result.resolve(field_or_fail(r.eeg, r.id, "eeg"));
      const fs::path rel = fs::path("eeg") / s.id / (r.id + ".ndmm");
      fs::create_directories((out / rel).parent_path());
      write_tensor(out / rel, preprocess_eeg(read_tensor(in_path), cfg));
      r.eeg = rel;
    }
  save_manifest(out / "manifest.json", result);
  return result;
}

DatasetManifest featurize_stage(const fs::path& manifest, const std::vector<std::string>& features,
                                const BandpassSpec& bandpass, const fs::path& out) {
  const auto m = load_manifest(manifest);
  std::set<std::string> bases;
  for (const auto& e : features)
    for (const auto& b : parse_feature_expression(e)) bases.insert(b);
  require(!bases.empty(), ErrorKind::InvalidSpec, "no features requested");

  const PhonemeInventory inv = m.inventory.empty() ? PhonemeInventory::default_dutch()
                                                   : PhonemeInventory::load(m.resolve(m.inventory));
  std::optional<EmbeddingTable> emb;
  if (bases.count("wordemb")) {
    require(!m.embeddings.empty(), ErrorKind::NotFound,
            "feature 'wordemb' needs an 'embeddings' entry in the manifest");
    emb = EmbeddingTable::load(m.resolve(m.embeddings));
  }
  FeatureContext ctx;
  ctx.inventory = &inv;
  ctx.embeddings = emb ? &*emb : nullptr;
  ctx.bandpass = bandpass;

  fs::create_directories(out);
  auto result = rebase(m, out);
  // Stories are identified by their audio and alignment files; each is
  // featurized once however many subjects heard it.
  std::map<std::string, std::string> story_key;
  std::set<std::string> used;
  for (size_t si = 0; si < m.subjects.size(); ++si)
    for (size_t ri = 0; ri < m.subjects[si].recordings.size(); ++ri) {
      const auto& r = m.subjects[si].recordings[ri];
      auto& target = result.subjects[si].recordings[ri];
      // Audio fixes the stream length, so every feature needs it.
      const bool needs_words = bases.count("wordemb") > 0;
      const bool needs_phones = std::any_of(bases.begin(), bases.end(), [&](const std::string& b) {
        return b != "envelope" && b != "mel" && b != "vad" && b != "wordemb";
      });
      field_or_fail(r.audio, r.id, "audio");
      if (needs_phones) field_or_fail(r.phonemes, r.id, "phonemes");
      if (needs_words) field_or_fail(r.words, r.id, "words");
      const std::string identity = absolute_normal(m.resolve(r.audio)).string() + '|' +
                                   absolute_normal(m.resolve(r.phonemes)).string() + '|' +
                                   absolute_normal(m.resolve(r.words)).string();
      auto it = story_key.find(identity);
      if (it == story_key.end()) {
        std::string stem = !r.audio.empty()      ? r.audio.stem().string()
                           : !r.phonemes.empty() ? r.phonemes.stem().string()
                                                 : r.words.stem().string();
        std::string key = stem;
        for (int k = 2; used.count(key); ++k) key = stem + "_" + std::to_string(k);
        used.insert(key);
        it = story_key.emplace(identity, key).first;

        std::optional<TimeSeriesTensor> audio;
        std::optional<AlignmentTrack> phones, words;
        if (!r.audio.empty()) audio = read_wav(m.resolve(r.audio));
        if (!r.phonemes.empty()) phones = read_alignment(m.resolve(r.phonemes), key);
        if (!r.words.empty()) words = read_alignment(m.resolve(r.words), key);
        StoryInputs in{audio ? &*audio : nullptr, phones ? &*phones : nullptr,
                       words ? &*words : nullptr};
        for (const auto& b : bases) {
          const fs::path rel = fs::path("features") / b / (key + ".ndmm");
          fs::create_directories((out / rel).parent_path());
          write_tensor(out / rel, compute_base_feature(b, in, ctx));
        }
      }
      for (const auto& b : bases) target.features[b] = fs::path("features") / b / (it->second + ".ndmm");
    }
  save_manifest(out / "manifest.json", result);
  return result;
}

void build_stage(const fs::path& manifest, const std::string& feature, const BuildSpec& spec,
                 std::uint64_t seed, const fs::path& out) {
  const auto m = load_manifest(manifest);
  AssembleOptions opts;
  opts.seed = seed;
  const auto data = assemble_dataset(load_recordings(m, feature), feature, spec.window, spec.split, opts);
  fs::create_directories(out);
  save_dataset(out, data);
  json meta = build_json(spec);
  meta["feature"] = feature;
  meta["seed"] = seed;
  meta["counts"] = {{"train", data.train.size()}, {"val", data.val.size()}, {"test", data.test.size()}};
  write_text(out / "build.json", meta.dump(2) + "\n");
}

TrainResult train_stage(const fs::path& dataset, TrainConfig cfg, std::uint64_t seed,
                        const fs::path& out, std::ostream* log) {
  const json meta = parse_json(read_text(dataset / "build.json"), (dataset / "build.json").string());
  const auto feature = meta.at("feature").get<std::string>();
  const auto data = load_dataset(dataset);
  cfg.rng_seed = seed;
  const auto arch = architecture_for(feature, static_cast<int>(data.train.eeg_channels()),
                                     static_cast<int>(data.train.window));
  const auto init = init_params(arch, derive_seed(seed, 0x1417));
  const auto result = train(init, data, cfg, [&](const EpochLog& e) {
    if (log)
      *log << "  epoch " << e.epoch << ": train " << e.train_loss << ", val " << e.val_loss
           << ", val acc " << e.val_acc << '\n';
  });
  fs::create_directories(out);
  save_checkpoint(out / "model", result.params);
  write_training_log(out / "training_log.csv", result.log);
  json info = {{"feature", feature}, {"seed", seed}, {"best_epoch", result.best_epoch},
               {"epochs_run", result.log.size()}, {"config", train_json(cfg)}};
  write_text(out / "train.json", info.dump(2) + "\n");
  return result;
}

std::vector<SubjectResult> evaluate_stage(const fs::path& dataset, const fs::path& model,
                                          Partition partition, const fs::path& out,
                                          std::vector<std::string>* warnings) {
  const json meta = parse_json(read_text(dataset / "build.json"), (dataset / "build.json").string());
  const auto feature = meta.at("feature").get<std::string>();
  const auto data = load_dataset(dataset);
  const auto params = load_checkpoint(model);
  const auto& set = data.get(partition);
  const auto preds = predict_set(params, set);
  std::vector<std::string> local;
  auto results = subject_results(set, preds, feature, &local);
  fs::create_directories(out);
  write_results(out / "results.csv", results);
  write_predictions(out / "predictions.csv", set, preds);
  if (!local.empty()) {
    std::string text;
    for (const auto& w : local) text += w + '\n';
    write_text(out / "warnings.txt", text);
  } else if (fs::exists(out / "warnings.txt")) {
    fs::remove(out / "warnings.txt");
  }
  if (warnings) warnings->insert(warnings->end(), local.begin(), local.end());
  return results;
}

// ---------------------------------------------------------------------------

CohortConfig parse_cohort(const std::string& text, std::uint64_t seed, const std::string& origin) {
  const json j = parse_json(text, origin);
  CohortConfig c;
  c.seed = seed;
  c.apply_preprocess = false;
  try {
    c.subjects = j.value("subjects", c.subjects);
    c.stories = j.value("stories", c.stories);
    c.duration_s = j.value("duration_s", c.duration_s);
    if (j.contains("snr_db")) c.forward.snr_db = parse_snr(j["snr_db"]);
    c.coupling = j.value("coupling", c.coupling);
    c.forward.noise = noise_color_from_string(j.value("noise", std::string("pink")));
    c.forward.kernel = kernel_shape_from_string(j.value("kernel", std::string("dog")));
    c.forward.latency_ms = j.value("latency_ms", c.forward.latency_ms);
    c.forward.source_noise_frac = j.value("source_noise_frac", c.forward.source_noise_frac);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "synthetic cohort config " + origin + ": " + e.what());
  }
  c.forward.rng_seed = seed;
  c.forward.validate();
  require(c.subjects >= 1 && c.stories >= 1 && c.duration_s >= 1.0, ErrorKind::InvalidSpec,
          "synthetic cohort needs subjects, stories and a duration of at least 1 s");
  parse_feature_expression(c.coupling);
  return c;
}

void ExperimentSpec::validate() const {
  require(synth.has_value() != !manifest.empty(), ErrorKind::InvalidSpec,
          "experiment needs exactly one of 'synth' or 'manifest'");
  require(!features.empty(), ErrorKind::InvalidSpec, "experiment lists no features");
  std::set<std::string> names;
  for (const auto& f : features) {
    parse_feature_expression(f);  // throws on unknown names
    require(names.insert(f).second, ErrorKind::InvalidSpec, "feature '" + f + "' listed twice");
  }
  for (const auto& [a, b] : compare)
    require(names.count(a) && names.count(b), ErrorKind::InvalidSpec,
            "comparison " + a + " vs " + b + " names a feature outside the grid");
  build.window.validate();
  build.split.validate();
}

ExperimentSpec load_experiment(const fs::path& config, std::optional<std::uint64_t> seed) {
  const json j = parse_json(read_text(config), config.string());
  ExperimentSpec s;
  try {
    if (seed) {
      s.seed = *seed;
    } else {
      require(j.contains("seed"), ErrorKind::InvalidSpec,
              "experiment needs a seed ('seed' key or --seed)");
      s.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("synth")) s.synth = parse_cohort(j["synth"].dump(), s.seed, config.string());
    if (j.contains("manifest")) {
      fs::path p = j["manifest"].get<std::string>();
      s.manifest = p.is_absolute() ? p : config.parent_path() / p;
    }
    for (const auto& f : j.at("features")) s.features.push_back(f.get<std::string>());
    if (j.contains("preprocess"))
      s.preprocess = parse_preprocess_config(j["preprocess"].dump(), config.string());
    json build = json::object();
    if (j.contains("windowing")) build["windowing"] = j["windowing"];
    if (j.contains("split")) build["split"] = j["split"];
    s.build = parse_build_spec(build.dump(), config.string());
    if (j.contains("train")) s.train = parse_train_config(j["train"].dump(), config.string());
    if (j.contains("compare"))
      for (const auto& pair : j["compare"]) {
        require(pair.is_array() && pair.size() == 2, ErrorKind::Format,
                "'compare' entries must be [a, b] pairs");
        s.compare.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
      }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "experiment config " + config.string() + ": " + e.what());
  }
  s.train.rng_seed = s.seed;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct CachedStage {
  fs::path dir;
  std::string digest;
};

class StageCache {
 public:
  StageCache(fs::path root, std::ostream& log) : root_(std::move(root)), log_(log) {}

  CachedStage get(const std::string& stage, const json& key,
                  const std::function<void(const fs::path&)>& make) {
    const std::string k = key.dump();
    const std::string h = sha256_hex(stage + '\n' + k);
    const fs::path dir = root_ / (stage + "-" + h.substr(0, 16));
    const fs::path marker = dir / ".complete";
    if (fs::exists(marker)) {
      const json done = parse_json(read_text(marker), marker.string());
      if (done.value("key", std::string{}) == k) {
        log_ << "[" << stage << "] cached " << dir.filename().string() << '\n';
        return {dir, done.at("digest").get<std::string>()};
      }
    }
    fs::remove_all(dir);
    const fs::path tmp = dir.string() + ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    log_ << "[" << stage << "] computing " << dir.filename().string() << '\n';
    make(tmp);
    fs::rename(tmp, dir);
    // Manifests written inside the stage refer to siblings by relative path,
    // so the rename keeps them valid.
    const std::string digest = dir_digest(dir);
    write_text(marker, json{{"stage", stage}, {"key", k}, {"digest", digest}}.dump(2) + "\n");
    return {dir, digest};
  }

 private:
  fs::path root_;
  std::ostream& log_;
};

}  // namespace

void run_pipeline(const ExperimentSpec& spec, const fs::path& out_dir, std::ostream& log) {
  spec.validate();
  fs::create_directories(out_dir);
  const fs::path out = absolute_normal(out_dir);
  StageCache cache(out / "cache", log);

  // Source data.
  fs::path source_manifest;
  std::string source_digest;
  if (spec.synth) {
    const auto st = cache.get("synth", cohort_json(*spec.synth),
                              [&](const fs::path& dir) { write_cohort(*spec.synth, dir); });
    source_manifest = st.dir / "manifest.json";
    source_digest = st.digest;
  } else {
    require(fs::exists(spec.manifest), ErrorKind::NotFound,
            "dataset manifest " + spec.manifest.string() + " does not exist");
    source_manifest = spec.manifest;
    source_digest = manifest_digest(spec.manifest);
  }

  const auto pre = cache.get(
      "preprocess", {{"source", source_digest}, {"config", preprocess_json(spec.preprocess)}},
      [&](const fs::path& dir) { preprocess_stage(source_manifest, spec.preprocess, dir); });

  std::set<std::string> bases;
  for (const auto& f : spec.features)
    for (const auto& b : parse_feature_expression(f)) bases.insert(b);
  std::map<std::string, CachedStage> feat;
  for (const auto& b : bases)
    feat[b] = cache.get("feature",
                        {{"source", source_digest}, {"feature", b},
                         {"bandpass", bandpass_json(spec.preprocess.bandpass)}},
                        [&](const fs::path& dir) {
                          featurize_stage(source_manifest, {b}, spec.preprocess.bandpass, dir);
                        });

  std::vector<ConditionData> conditions;
  const fs::path results_dir = out / "results";
  fs::create_directories(results_dir);
  for (const auto& expr : spec.features) {
    const auto components = parse_feature_expression(expr);
    json feature_digests = json::object();
    for (const auto& c : components) feature_digests[c] = feat.at(c).digest;

    const auto built = cache.get(
        "dataset",
        {{"preprocess", pre.digest}, {"features", feature_digests}, {"feature", expr},
         {"build", build_json(spec.build)}, {"seed", spec.seed}},
        [&](const fs::path& dir) {
          // EEG from the preprocess stage, streams from the feature stages.
          auto m = load_manifest(pre.dir / "manifest.json");
          for (const auto& c : components) {
            const auto fm = load_manifest(feat.at(c).dir / "manifest.json");
            for (size_t si = 0; si < m.subjects.size(); ++si)
              for (size_t ri = 0; ri < m.subjects[si].recordings.size(); ++ri)
                m.subjects[si].recordings[ri].features[c] = absolute_normal(fm.resolve(fm.subjects[si].recordings[ri].features.at(c)));
          }
          const fs::path merged = dir / "inputs.json";
          save_manifest(merged, rebase(m, dir));
          build_stage(merged, expr, spec.build, spec.seed, dir);
        });

    const auto trained = cache.get("train",
                                   {{"dataset", built.digest}, {"config", train_json(spec.train)},
                                    {"seed", spec.seed}},
                                   [&](const fs::path& dir) {
                                     log << "training '" << expr << "'\n";
                                     train_stage(built.dir, spec.train, spec.seed, dir, &log);
                                   });

    const auto evaluated = cache.get(
        "evaluate", {{"dataset", built.digest}, {"model", trained.digest}},
        [&](const fs::path& dir) {
          std::vector<std::string> warnings;
          evaluate_stage(built.dir, trained.dir / "model",
                         Partition::Test, dir, &warnings);
          for (const auto& w : warnings) log << "warning: " << w << '\n';
        });

    const auto name = safe_name(expr);
    fs::copy_file(evaluated.dir / "results.csv", results_dir / (name + ".csv"),
                  fs::copy_options::overwrite_existing);
    fs::copy_file(trained.dir / "training_log.csv", results_dir / (name + "_training_log.csv"),
                  fs::copy_options::overwrite_existing);

    ConditionData cd;
    cd.condition = name;
    for (const auto& r : read_results(evaluated.dir / "results.csv")) {
      cd.subjects.push_back(r.subject_id);
      cd.accuracy.push_back(r.test_accuracy);
    }
    log << expr << ": median test accuracy "
        << (cd.accuracy.empty() ? 0.0 : quantile(cd.accuracy, 0.5)) << " over "
        << cd.accuracy.size() << " subjects\n";
    conditions.push_back(std::move(cd));
  }

  // Statistics.
  const fs::path stats_dir = out / "stats";
  fs::create_directories(stats_dir);
  const bool plottable = std::all_of(conditions.begin(), conditions.end(),
                                     [](const ConditionData& c) { return c.accuracy.size() >= 2; });
  if (plottable) {
    emit_figure_data(stats_dir, conditions);
  } else {
    log << "warning: violin data needs at least 2 subjects per condition; skipped\n";
  }
  std::ostringstream cmp;
  cmp.precision(17);
  cmp << "a,b,n_effective,z,p,note\n";
  for (const auto& [a, b] : spec.compare) {
    auto find = [&](const std::string& n) -> const ConditionData& {
      return *std::find_if(conditions.begin(), conditions.end(),
                           [&](const ConditionData& c) { return c.condition == safe_name(n); });
    };
    std::vector<double> xa, xb;
    align_by_subject(find(a), find(b), xa, xb);
    try {
      const auto w = wilcoxon_signed_rank(xa, xb);
      cmp << a << ',' << b << ',' << w.n_effective << ',' << w.z << ',' << w.p << ",\n";
    } catch (const Error& e) {
      log << "warning: " << a << " vs " << b << ": " << e.what() << '\n';
      cmp << a << ',' << b << ",0,,," << to_string(e.kind()) << '\n';
    }
  }
  write_text(stats_dir / "comparisons.csv", cmp.str());
  write_artifact_manifest(out);
}

void write_artifact_manifest(const fs::path& root) {
  json list = json::array();
  for (const auto& [rel, h] : file_hashes(root, {"artifacts.json"})) {
    if (rel.find(".partial/") != std::string::npos) continue;
    list.push_back({{"path", rel}, {"sha256", h}, {"bytes", fs::file_size(root / rel)}});
  }
  write_text(root / "artifacts.json", json{{"artifacts", list}}.dump(2) + "\n");
}

}  // namespace eegmatch::cli
