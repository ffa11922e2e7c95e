#pragma once

#include "eegmatch/dataset.hpp"
#include "eegmatch/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eegmatch {

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  int max_epochs = 50;
  int patience = 5;
  std::optional<std::uint64_t> rng_seed;  // mandatory; validate() rejects a missing seed
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Caps the batches drawn per epoch (0 = full pass); the epoch still
  // reshuffles the whole training partition.
  int max_batches_per_epoch = 0;

  void validate() const;
};

// Keys mirror the field names. Missing keys keep their defaults; the seed may
// be supplied afterwards.
TrainConfig parse_train_config(const std::string& text, const std::string& origin = "");
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  ModelParams params;  // snapshot with the lowest validation loss
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

class Adam {
 public:
  Adam(const ModelParams& like, const TrainConfig& cfg);
  void step(ModelParams& params, const ModelParams& grads);

 private:
  ModelParams m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Reads only the train and val partitions. Throws Numerical on a non-finite
// loss or gradient, naming the epoch and batch.
TrainResult train(const ModelParams& init, const PartitionedDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct SetMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

SetMetrics evaluate_set(const ModelParams& params, const DecisionWindowSet& set);

// p(a is match) per triple, in set order.
std::vector<double> predict_set(const ModelParams& params, const DecisionWindowSet& set);

struct SubjectResult {
  std::string subject_id;
  std::string feature_name;
  size_t n_windows = 0;
  size_t n_correct = 0;
  double test_accuracy = 0.0;  // n_correct / n_windows
};

// Per-subject accuracy from per-triple probabilities. Subjects present in the
// sources but without triples are skipped and reported in `warnings`.
std::vector<SubjectResult> subject_results(const DecisionWindowSet& set,
                                           const std::vector<double>& predictions,
                                           const std::string& feature_name,
                                           std::vector<std::string>* warnings = nullptr);

std::vector<SubjectResult> evaluate_per_subject(const ModelParams& params,
                                                const DecisionWindowSet& set,
                                                const std::string& feature_name,
                                                std::vector<std::string>* warnings = nullptr);

// CSV: epoch,train_loss,val_loss,val_acc
void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);
// CSV: subject_id,feature,n_windows,n_correct,accuracy
void write_results(const std::filesystem::path& path, const std::vector<SubjectResult>& results);
std::vector<SubjectResult> read_results(const std::filesystem::path& path);
// CSV: triple,subject,recording,start_frame,a_is_match,p,correct
void write_predictions(const std::filesystem::path& path, const DecisionWindowSet& set,
                       const std::vector<double>& predictions);

}  // namespace eegmatch
