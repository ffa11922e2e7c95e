#include "pipeline.hpp"

#include "eegmatch/features.hpp"
#include "eegmatch/model.hpp"
#include "eegmatch/stats.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>

using namespace eegmatch;
using namespace eegmatch::cli;

namespace {

double parse_snr_arg(const std::string& s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::InvalidInput, "--snr-db: expected a number, inf or -inf, got '" + s + "'");
}

// Header names a subject and an accuracy column; training logs and
// comparison tables in the same directory are skipped.
bool is_condition_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  return header.find("accuracy") != std::string::npos && header.rfind("subject", 0) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG / speech match-mismatch decoding"};
  app.require_subcommand(1);

  // preprocess
  std::string manifest, config, out;
  auto* pre = app.add_subcommand("preprocess", "reference, band-limit, resample and normalize EEG");
  pre->add_option("--manifest", manifest, "dataset manifest")->required();
  pre->add_option("--config", config, "preprocessing config JSON");
  pre->add_option("--out", out, "output directory")->required();

  // featurize
  std::vector<std::string> features;
  auto* feat = app.add_subcommand("featurize", "compute speech feature streams");
  feat->add_option("--manifest", manifest)->required();
  feat->add_option("--features", features, "feature expressions, e.g. mel env+bpc")->required();
  feat->add_option("--config", config, "preprocessing config JSON (bandpass)");
  feat->add_option("--out", out)->required();

  // build-dataset
  std::string feature;
  std::uint64_t seed = 0;
  auto* build = app.add_subcommand("build-dataset", "window and partition into triples");
  build->add_option("--manifest", manifest)->required();
  build->add_option("--feature", feature)->required();
  build->add_option("--config", config, "windowing / split JSON");
  build->add_option("--seed", seed)->required();
  build->add_option("--out", out)->required();

  // train
  std::string dataset;
  auto* tr = app.add_subcommand("train", "fit the match/mismatch model");
  tr->add_option("--dataset", dataset)->required();
  tr->add_option("--config", config, "training config JSON");
  tr->add_option("--seed", seed)->required();
  tr->add_option("--out", out)->required();

  // evaluate
  std::string model, partition = "test";
  auto* ev = app.add_subcommand("evaluate", "per-subject accuracy");
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--model", model)->required();
  ev->add_option("--partition", partition)->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--out", out)->required();

  // stats
  auto* stats = app.add_subcommand("stats", "paired tests and figure data");
  stats->require_subcommand(1);
  std::string csv_a, csv_b;
  auto* cmp = stats->add_subcommand("compare", "Wilcoxon signed-rank test between two conditions");
  cmp->add_option("--a", csv_a, "condition CSV (subject,accuracy) or results CSV")->required();
  cmp->add_option("--b", csv_b)->required();
  std::vector<std::string> inputs;
  auto* vio = stats->add_subcommand("violin", "violin SVG and condition CSVs");
  vio->add_option("--in", inputs, "directory of condition CSVs, or the files themselves")->required();
  vio->add_option("--out", out, "SVG file, or a directory for the SVG plus condition CSVs")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "synthetic cohorts");
  synth->require_subcommand(1);
  CohortConfig cohort;
  cohort.apply_preprocess = false;
  std::string snr = "0", noise = "pink", kernel = "dog";
  auto* make = synth->add_subcommand("make", "write a synthetic cohort with a manifest");
  make->add_option("--subjects", cohort.subjects)->required();
  make->add_option("--stories", cohort.stories)->required();
  make->add_option("--snr-db", snr, "number, inf or -inf")->required();
  make->add_option("--seed", seed)->required();
  make->add_option("--out", out)->required();
  make->add_option("--duration", cohort.duration_s, "seconds per story");
  make->add_option("--coupling", cohort.coupling, "feature expression driving the EEG");
  make->add_option("--noise", noise)->check(CLI::IsMember({"white", "pink"}));
  make->add_option("--kernel", kernel)->check(CLI::IsMember({"dog", "impulse"}));
  make->add_option("--latency-ms", cohort.forward.latency_ms);
  make->add_option("--source-noise", cohort.forward.source_noise_frac,
                   "share of noise energy mixed from sources");

  // inspect
  std::string tensor;
  auto* inspect = app.add_subcommand("inspect", "print the shape and rate of a tensor file");
  inspect->add_option("--tensor", tensor)->required();

  // run
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "full cached pipeline from an experiment config");
  run->add_option("--config", config)->required();
  run->add_option("--seed", run_seed);
  run->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*pre) {
      const auto cfg = config.empty() ? PreprocessConfig{} : load_preprocess_config(config);
      preprocess_stage(manifest, cfg, out);
    } else if (*feat) {
      const auto cfg = config.empty() ? PreprocessConfig{} : load_preprocess_config(config);
      featurize_stage(manifest, features, cfg.bandpass, out);
    } else if (*build) {
      std::string text = "{}";
      if (!config.empty()) {
        std::ifstream in(config);
        require(static_cast<bool>(in), ErrorKind::NotFound, "cannot read " + config);
        text.assign(std::istreambuf_iterator<char>(in), {});
      }
      build_stage(manifest, feature, parse_build_spec(text, config), seed, out);
    } else if (*tr) {
      const auto cfg = config.empty() ? TrainConfig{} : load_train_config(config);
      const auto r = train_stage(dataset, cfg, seed, out, &std::cout);
      std::cout << "best epoch " << r.best_epoch << " of " << r.log.size() << '\n';
    } else if (*ev) {
      std::vector<std::string> warnings;
      const auto results =
          evaluate_stage(dataset, model, partition_from_string(partition), out, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& r : results)
        std::cout << r.subject_id << ' ' << r.test_accuracy << " (" << r.n_correct << '/'
                  << r.n_windows << ")\n";
    } else if (*cmp) {
      std::vector<double> a, b;
      align_by_subject(read_condition_csv(csv_a, "a"), read_condition_csv(csv_b, "b"), a, b);
      const auto w = wilcoxon_signed_rank(a, b);
      std::cout.precision(6);
      std::cout << "z " << w.z << "\np " << w.p << "\nn_effective " << w.n_effective << '\n';
    } else if (*vio) {
      std::vector<std::filesystem::path> files;
      for (const auto& p : inputs) {
        if (std::filesystem::is_directory(p)) {
          for (const auto& e : std::filesystem::directory_iterator(p))
            if (e.path().extension() == ".csv" && is_condition_csv(e.path())) files.push_back(e.path());
        } else {
          files.push_back(p);
        }
      }
      std::sort(files.begin(), files.end());
      require(!files.empty(), ErrorKind::NotFound, "no condition CSVs found");
      std::vector<ConditionData> conds;
      for (const auto& f : files) conds.push_back(read_condition_csv(f, f.stem().string()));
      if (std::filesystem::path(out).extension() == ".svg") {
        std::vector<Summary> sums;
        for (const auto& c : conds) sums.push_back(summarize(c.condition, c.accuracy));
        if (std::filesystem::path(out).has_parent_path())
          std::filesystem::create_directories(std::filesystem::path(out).parent_path());
        std::ofstream(out) << violin_svg(sums);
      } else {
        emit_figure_data(out, conds);
      }
    } else if (*make) {
      cohort.seed = seed;
      cohort.forward.snr_db = parse_snr_arg(snr);
      cohort.forward.noise = noise_color_from_string(noise);
      cohort.forward.kernel = kernel_shape_from_string(kernel);
      cohort.forward.rng_seed = seed;
      cohort.forward.validate();
      parse_feature_expression(cohort.coupling);
      const auto m = write_cohort(cohort, out);
      std::cout << "wrote " << m.subjects.size() << " subjects to " << out << '\n';
    } else if (*inspect) {
      const auto a = read_ndarray(tensor);
      std::cout << "shape";
      for (auto d : a.dims) std::cout << ' ' << d;
      std::cout << "\nfs " << a.fs << '\n';
    } else if (*run) {
      const auto spec = load_experiment(config, run_seed);
      run_pipeline(spec, out, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
