#include "doctest.h"

#include "pipeline.hpp"

#include "eegmatch/stats.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace eegmatch;
using namespace eegmatch::cli;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("eegmatch_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Exit status of the CLI with stdout and stderr captured to `log`.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(EEGMATCH_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::State;
}

}  // namespace

TEST_CASE("exit codes follow the error category") {
  CHECK(exit_code(ErrorKind::InvalidInput) == 3);
  CHECK(exit_code(ErrorKind::NotFound) == 9);
  std::set<int> codes;
  for (auto k : {ErrorKind::InvalidInput, ErrorKind::InvalidSpec, ErrorKind::Degenerate,
                 ErrorKind::ShapeMismatch, ErrorKind::Io, ErrorKind::Format, ErrorKind::NotFound,
                 ErrorKind::Numerical, ErrorKind::State})
    codes.insert(exit_code(k));
  CHECK(codes.size() == 9);
  CHECK(codes.count(0) == 0);
  CHECK(codes.count(1) == 0);
  CHECK(codes.count(2) == 0);

  const auto dir = scratch("codes");
  const auto log = dir / "log.txt";
  CHECK(run_cli("", log) == 2);
  CHECK(run_cli("train --dataset x", log) == 2);
  CHECK(run_cli("--help", log) == 0);

  CHECK(run_cli("synth make --subjects 1 --stories 1 --snr-db loud --seed 1 --out " +
                    (dir / "c").string(),
                log) == 3);
  CHECK(slurp(log).find("error [") != std::string::npos);

  CHECK(run_cli("run --config " + (dir / "absent.json").string() + " --out " + (dir / "o").string(),
                log) == 9);

  write(dir / "noseed.json", R"({"synth": {}, "features": ["envelope"]})");
  CHECK(run_cli("run --config " + (dir / "noseed.json").string() + " --out " + (dir / "o").string(),
                log) == 4);
  CHECK(slurp(log).find("seed") != std::string::npos);

  write(dir / "broken.json", "{\"features\": [");
  CHECK(run_cli("run --config " + (dir / "broken.json").string() + " --seed 1 --out " +
                    (dir / "o").string(),
                log) == 8);

  write(dir / "unknown.json", R"({"synth": {}, "features": ["loudness"], "seed": 1})");
  CHECK(run_cli("run --config " + (dir / "unknown.json").string() + " --out " + (dir / "o").string(),
                log) != 0);
}

TEST_CASE("experiment config parsing") {
  const auto dir = scratch("config");
  write(dir / "a.json", R"({"synth": {"subjects": 3, "snr_db": "-inf", "noise": "white"},
    "features": ["env", "mel+bpc"], "compare": [["env", "mel+bpc"]],
    "windowing": {"gap_s": 2.0}, "train": {"max_epochs": 3}, "seed": 5})");
  auto s = load_experiment(dir / "a.json", std::nullopt);
  REQUIRE(s.synth);
  CHECK(s.synth->subjects == 3);
  CHECK(std::isinf(s.synth->forward.snr_db));
  CHECK(s.synth->forward.snr_db < 0);
  CHECK(s.synth->forward.noise == NoiseColor::White);
  CHECK(s.build.window.gap_s == 2.0);
  CHECK(s.train.max_epochs == 3);
  CHECK(s.seed == 5);
  CHECK(*s.train.rng_seed == 5);

  // --seed overrides the file
  s = load_experiment(dir / "a.json", 11);
  CHECK(s.seed == 11);
  CHECK(s.synth->seed == 11);

  fs::create_directories(dir / "sub");
  write(dir / "sub" / "b.json", R"({"manifest": "../data/manifest.json", "features": ["vad"], "seed": 1})");
  s = load_experiment(dir / "sub" / "b.json", std::nullopt);
  CHECK(fs::weakly_canonical(s.manifest) == fs::weakly_canonical(dir / "data" / "manifest.json"));

  write(dir / "c.json", R"({"features": ["vad"], "seed": 1})");
  CHECK(kind_of([&] { load_experiment(dir / "c.json", std::nullopt); }) == ErrorKind::InvalidSpec);
  write(dir / "d.json", R"({"synth": {}, "features": ["vad"], "compare": [["vad", "mel"]], "seed": 1})");
  CHECK(kind_of([&] { load_experiment(dir / "d.json", std::nullopt); }) == ErrorKind::InvalidSpec);
  write(dir / "e.json", R"({"synth": {"snr_db": "loud"}, "features": ["vad"], "seed": 1})");
  CHECK(kind_of([&] { load_experiment(dir / "e.json", std::nullopt); }) == ErrorKind::InvalidSpec);

  const auto b = parse_build_spec(R"({"split": {"train_frac": 0.6, "val_frac": 0.2, "test_frac": 0.2}})");
  CHECK(b.split.val_frac == 0.2);
  CHECK(kind_of([] { parse_build_spec(R"({"windowing": {"window_s": -1}})"); }) ==
        ErrorKind::InvalidSpec);
}

TEST_CASE("a manifest entry missing for a requested feature is named") {
  const auto dir = scratch("missing");
  CohortConfig c;
  c.subjects = 1;
  c.stories = 1;
  c.duration_s = 8;
  c.seed = 2;
  c.forward.rng_seed = 2;
  auto m = write_cohort(c, dir / "cohort");
  m.subjects[0].recordings[0].audio.clear();
  save_manifest(dir / "cohort" / "broken.json", m);

  try {
    featurize_stage(dir / "cohort" / "broken.json", {"envelope"}, {}, dir / "f");
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
    const std::string msg = e.what();
    CHECK(msg.find(m.subjects[0].recordings[0].id) != std::string::npos);
    CHECK(msg.find("audio") != std::string::npos);
  }
  // Acoustic features do not need the alignments.
  m = load_manifest(dir / "cohort" / "manifest.json");
  m.subjects[0].recordings[0].phonemes.clear();
  save_manifest(dir / "cohort" / "nophones.json", m);
  const auto fm = featurize_stage(dir / "cohort" / "nophones.json", {"envelope"}, {}, dir / "f");
  CHECK(fs::exists(fm.resolve(fm.subjects[0].recordings[0].features.at("envelope"))));
  try {
    featurize_stage(dir / "cohort" / "nophones.json", {"env+bpc"}, {}, dir / "g");
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
    CHECK(std::string(e.what()).find("'phonemes'") != std::string::npos);
  }

  m.subjects[0].recordings[0].eeg.clear();
  save_manifest(dir / "cohort" / "noeeg.json", m);
  try {
    preprocess_stage(dir / "cohort" / "noeeg.json", {}, dir / "p");
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
    CHECK(std::string(e.what()).find("'eeg'") != std::string::npos);
  }
}

TEST_CASE("stats subcommands") {
  const auto dir = scratch("stats");
  ConditionData a{"a", {"S1", "S2", "S3", "S4", "S5", "S6"}, {0.8, 0.7, 0.9, 0.85, 0.75, 0.95}};
  ConditionData b{"b", {"S6", "S5", "S4", "S3", "S2", "S1"}, {0.7, 0.6, 0.7, 0.8, 0.65, 0.62}};
  write_condition_csv(dir / "a.csv", a);
  write_condition_csv(dir / "b.csv", b);
  const auto log = dir / "log.txt";
  REQUIRE(run_cli("stats compare --a " + (dir / "a.csv").string() + " --b " + (dir / "b.csv").string(),
                  log) == 0);
  std::vector<double> xa, xb;
  align_by_subject(a, b, xa, xb);
  const auto w = wilcoxon_signed_rank(xa, xb);
  std::istringstream out(slurp(log));
  std::string key;
  double z = 0, p = 0, n = 0;
  out >> key >> z >> key >> p >> key >> n;
  CHECK(z == doctest::Approx(w.z).epsilon(1e-5));
  CHECK(p == doctest::Approx(w.p).epsilon(1e-5));
  CHECK(n == w.n_effective);

  REQUIRE(run_cli("stats violin --in " + (dir / "a.csv").string() + " " + (dir / "b.csv").string() +
                      " --out " + (dir / "fig").string(),
                  log) == 0);
  CHECK(fs::exists(dir / "fig" / "violin.svg"));
  CHECK(fs::exists(dir / "fig" / "a.csv"));

  // Directory input, single SVG output; non-condition CSVs are ignored.
  fs::create_directories(dir / "conds");
  write_condition_csv(dir / "conds" / "a.csv", a);
  write_condition_csv(dir / "conds" / "b.csv", b);
  write(dir / "conds" / "comparisons.csv", "a,b,n_effective,z,p,note\n");
  REQUIRE(run_cli("stats violin --in " + (dir / "conds").string() + " --out " +
                      (dir / "v.svg").string(),
                  log) == 0);
  const auto svg = slurp(dir / "v.svg");
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find(">a<") != std::string::npos);
  CHECK(svg.find(">b<") != std::string::npos);
  CHECK(svg.find("comparisons") == std::string::npos);

  // fewer than 5 pairs
  write_condition_csv(dir / "c.csv", ConditionData{"c", {"S1", "S2"}, {0.5, 0.6}});
  CHECK(run_cli("stats compare --a " + (dir / "a.csv").string() + " --b " + (dir / "c.csv").string(),
                log) == 3);
}

TEST_CASE("inspect prints the tensor shape") {
  const auto dir = scratch("inspect");
  write_tensor(dir / "x.ndmm", TimeSeriesTensor(Matrix::Zero(3, 17), 64.0));
  const auto log = dir / "log.txt";
  REQUIRE(run_cli("inspect --tensor " + (dir / "x.ndmm").string(), log) == 0);
  CHECK(slurp(log) == "shape 3 17\nfs 64\n");
  CHECK(run_cli("inspect --tensor " + (dir / "absent.ndmm").string(), log) >= 3);
}

TEST_CASE("pipeline runs a feature grid, caches stages and reproduces artifacts") {
  const auto dir = scratch("pipeline");
  write(dir / "exp.json", R"({"synth": {"subjects": 2, "stories": 2, "duration_s": 120, "snr_db": 10},
    "features": ["envelope", "vad"], "compare": [["envelope", "vad"]],
    "train": {"max_epochs": 1, "max_batches_per_epoch": 4}})");
  const auto log = dir / "log.txt";
  const std::string base = "run --config " + (dir / "exp.json").string() + " --seed 9 --out ";
  REQUIRE(run_cli(base + (dir / "a").string(), log) == 0);
  const auto first_log = slurp(log);
  CHECK(first_log.find("cached") == std::string::npos);

  for (const char* f : {"envelope", "vad"}) {
    const auto results = read_results(dir / "a" / "results" / (std::string(f) + ".csv"));
    REQUIRE(results.size() == 2);
    for (const auto& r : results) {
      CHECK(r.feature_name == f);
      CHECK(r.n_windows > 0);
    }
    CHECK(fs::exists(dir / "a" / "results" / (std::string(f) + "_training_log.csv")));
  }
  CHECK(fs::exists(dir / "a" / "stats" / "violin.svg"));
  CHECK(slurp(dir / "a" / "stats" / "comparisons.csv").find("envelope,vad") != std::string::npos);
  CHECK(first_log.find("at least 5") != std::string::npos);

  const auto artifacts = json::parse(slurp(dir / "a" / "artifacts.json"));
  CHECK(artifacts["artifacts"].size() > 20);
  for (const auto& a : artifacts["artifacts"])
    CHECK(a["path"].get<std::string>().find(".partial") == std::string::npos);

  // Same config and seed in a fresh directory: identical files and hashes.
  REQUIRE(run_cli(base + (dir / "b").string(), log) == 0);
  CHECK(slurp(dir / "a" / "artifacts.json") == slurp(dir / "b" / "artifacts.json"));

  // Rerun in place: every stage is served from the cache.
  REQUIRE(run_cli(base + (dir / "a").string(), log) == 0);
  const auto rerun = slurp(log);
  CHECK(rerun.find("computing") == std::string::npos);
  CHECK(rerun.find("[train] cached") != std::string::npos);
  CHECK(slurp(dir / "a" / "artifacts.json") == slurp(dir / "b" / "artifacts.json"));

  // A different seed changes the outputs.
  REQUIRE(run_cli("run --config " + (dir / "exp.json").string() + " --seed 10 --out " +
                      (dir / "c").string(),
                  log) == 0);
  CHECK(slurp(dir / "a" / "artifacts.json") != slurp(dir / "c" / "artifacts.json"));
}
