#include "eegmatch/train.hpp"

#include "eegmatch/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <numeric>
#include <random>
#include <sstream>

namespace eegmatch {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  require(rng_seed.has_value(), ErrorKind::InvalidSpec, "training needs an explicit rng seed");
  require(batch_size >= 1 && learning_rate > 0.0 && max_epochs >= 1 && patience >= 1,
          ErrorKind::InvalidSpec, "batch size, learning rate, epochs and patience must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0,
          ErrorKind::InvalidSpec, "Adam betas must lie in [0, 1) and eps must be positive");
  require(max_batches_per_epoch >= 0, ErrorKind::InvalidSpec, "batch cap must be non-negative");
}

TrainConfig parse_train_config(const std::string& text, const std::string& origin) {
  TrainConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.max_batches_per_epoch = j.value("max_batches_per_epoch", c.max_batches_per_epoch);
    if (j.contains("rng_seed")) c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "training config " + origin + ": " + e.what());
  }
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read training config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.string());
}

Adam::Adam(const ModelParams& like, const TrainConfig& cfg)
    : m_(like.zeros_like()),
      v_(like.zeros_like()),
      lr_(cfg.learning_rate),
      b1_(cfg.beta1),
      b2_(cfg.beta2),
      eps_(cfg.adam_eps) {}

void Adam::step(ModelParams& params, const ModelParams& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (size_t k = 0; k < p.size(); ++k) {
    *m[k].second = b1_ * *m[k].second + (1.0 - b1_) * *g[k].second;
    *v[k].second = b2_ * *v[k].second + (1.0 - b2_) * g[k].second->cwiseAbs2();
    p[k].second->array() -= lr_ * (m[k].second->array() / c1) /
                            ((v[k].second->array() / c2).sqrt() + eps_);
  }
}

std::vector<double> predict_set(const ModelParams& params, const DecisionWindowSet& set) {
  std::vector<double> out(set.size());
  for (size_t i = 0; i < set.size(); ++i)
    out[i] = forward(params, set.eeg(i), set.speech_a(i), set.speech_b(i));
  return out;
}

SetMetrics evaluate_set(const ModelParams& params, const DecisionWindowSet& set) {
  SetMetrics m;
  if (set.size() == 0) return m;
  size_t correct = 0;
  for (size_t i = 0; i < set.size(); ++i) {
    const double p = forward(params, set.eeg(i), set.speech_a(i), set.speech_b(i));
    m.loss += bce_loss(p, set.label(i));
    correct += predict_a(p) == set.triples[i].a_is_match;
  }
  m.loss /= static_cast<double>(set.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return m;
}

TrainResult train(const ModelParams& init, const PartitionedDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const auto& tr = data.train;
  const auto& va = data.val;
  require(tr.size() > 0 && va.size() > 0, ErrorKind::InvalidInput,
          "training needs non-empty train and validation partitions");
  require(tr.eeg_channels() == init.config.eeg_channels &&
              tr.feature_dim() == init.config.feature_dim() && tr.window == init.config.frames,
          ErrorKind::ShapeMismatch, "dataset shapes do not match the model architecture");

  std::mt19937_64 rng(*cfg.rng_seed);
  ModelParams params = init;
  ModelParams grads = params.zeros_like();
  Adam adam(params, cfg);
  std::vector<size_t> order(tr.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.max_batches_per_epoch > 0)
      n_batches = std::min(n_batches, static_cast<size_t>(cfg.max_batches_per_epoch));
    double loss_sum = 0.0;
    size_t seen = 0;
    ForwardTrace trace;
    for (size_t bi = 0; bi < n_batches; ++bi) {
      const size_t lo = bi * cfg.batch_size;
      const size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(hi - lo);
      grads.set_zero();
      double batch_loss = 0.0;
      for (size_t k = lo; k < hi; ++k) {
        const size_t i = order[k];
        const double p = forward(params, tr.eeg(i), tr.speech_a(i), tr.speech_b(i), &trace);
        batch_loss += bce_loss(p, tr.label(i));
        backward(params, trace, (p - tr.label(i)) * scale, grads);
      }
      if (!std::isfinite(batch_loss) || !grads.all_finite())
        fail(ErrorKind::Numerical, "non-finite loss or gradient at epoch " +
                                       std::to_string(epoch) + ", batch " + std::to_string(bi) +
                                       " (loss " + std::to_string(batch_loss) + ")");
      adam.step(params, grads);
      loss_sum += batch_loss;
      seen += hi - lo;
    }

    const auto val = evaluate_set(params, va);
    require(std::isfinite(val.loss), ErrorKind::Numerical,
            "non-finite validation loss at epoch " + std::to_string(epoch));
    EpochLog entry{epoch, loss_sum / static_cast<double>(seen), val.loss, val.accuracy};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (val.loss < best) {
      best = val.loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::vector<SubjectResult> subject_results(const DecisionWindowSet& set,
                                           const std::vector<double>& predictions,
                                           const std::string& feature_name,
                                           std::vector<std::string>* warnings) {
  require(predictions.size() == set.size(), ErrorKind::ShapeMismatch,
          "prediction count does not match the window set");
  std::map<std::string, SubjectResult> by_subject;
  for (size_t i = 0; i < set.size(); ++i) {
    auto& r = by_subject[set.source_of(i).subject_id];
    ++r.n_windows;
    r.n_correct += predict_a(predictions[i]) == set.triples[i].a_is_match;
  }
  if (warnings) {
    std::set<std::string> missing;
    for (const auto& s : set.sources)
      if (!by_subject.count(s->subject_id)) missing.insert(s->subject_id);
    for (const auto& id : missing)
      warnings->push_back("subject '" + id + "' has no windows; excluded");
  }
  std::vector<SubjectResult> out;
  for (auto& [id, r] : by_subject) {
    r.subject_id = id;
    r.feature_name = feature_name;
    r.test_accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n_windows);
    out.push_back(r);
  }
  return out;
}

std::vector<SubjectResult> evaluate_per_subject(const ModelParams& params,
                                                const DecisionWindowSet& set,
                                                const std::string& feature_name,
                                                std::vector<std::string>* warnings) {
  return subject_results(set, predict_set(params, set), feature_name, warnings);
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  return out;
}

}  // namespace

void write_training_log(const fs::path& path, const std::vector<EpochLog>& log) {
  auto out = open_out(path);
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : log)
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_acc << '\n';
}

void write_results(const fs::path& path, const std::vector<SubjectResult>& results) {
  auto out = open_out(path);
  out << "subject_id,feature,n_windows,n_correct,accuracy\n";
  for (const auto& r : results)
    out << r.subject_id << ',' << r.feature_name << ',' << r.n_windows << ',' << r.n_correct << ','
        << r.test_accuracy << '\n';
}

std::vector<SubjectResult> read_results(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read results " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format, path.string() + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) header.push_back(c);
  }
  auto col = [&](std::initializer_list<const char*> names) -> long {
    for (const char* n : names) {
      const auto it = std::find(header.begin(), header.end(), n);
      if (it != header.end()) return it - header.begin();
    }
    return -1;
  };
  const long c_subject = col({"subject_id", "subject"}), c_acc = col({"accuracy"});
  const long c_feature = col({"feature"}), c_n = col({"n_windows"}), c_ok = col({"n_correct"});
  require(c_subject >= 0 && c_acc >= 0, ErrorKind::Format,
          path.string() + " needs subject and accuracy columns");

  std::vector<SubjectResult> out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    require(f.size() == header.size(), ErrorKind::Format,
            path.string() + " line " + std::to_string(line_no) + ": wrong field count");
    SubjectResult r;
    r.subject_id = f[c_subject];
    try {
      r.test_accuracy = std::stod(f[c_acc]);
      if (c_n >= 0) r.n_windows = std::stoul(f[c_n]);
      if (c_ok >= 0) r.n_correct = std::stoul(f[c_ok]);
    } catch (const std::exception&) {
      fail(ErrorKind::Format, path.string() + " line " + std::to_string(line_no) + ": bad number");
    }
    if (c_feature >= 0) r.feature_name = f[c_feature];
    out.push_back(r);
  }
  return out;
}

void write_predictions(const fs::path& path, const DecisionWindowSet& set,
                       const std::vector<double>& predictions) {
  require(predictions.size() == set.size(), ErrorKind::ShapeMismatch,
          "prediction count does not match the window set");
  auto out = open_out(path);
  out << "triple,subject,recording,start_frame,a_is_match,p,correct\n";
  for (size_t i = 0; i < set.size(); ++i) {
    const auto& s = set.source_of(i);
    const bool ok = predict_a(predictions[i]) == set.triples[i].a_is_match;
    out << i << ',' << s.subject_id << ',' << s.recording_id << ',' << set.triples[i].start << ','
        << (set.triples[i].a_is_match ? 1 : 0) << ',' << predictions[i] << ',' << (ok ? 1 : 0)
        << '\n';
  }
}

}  // namespace eegmatch
