#pragma once

#include "eegmatch/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace eegmatch {

// Speech front for one feature before the shared LSTM.
enum class SpeechVariant { Conv, NoConv, MaxPool };

const char* to_string(SpeechVariant v);
SpeechVariant speech_variant_from_string(const std::string& s);

struct SpeechBranch {
  std::string feature;  // informational
  int dim = 1;
  SpeechVariant variant = SpeechVariant::NoConv;
};

struct ArchitectureConfig {
  int eeg_channels = 64;
  int frames = 320;
  int eeg_conv_filters = 16;
  int eeg_conv_kernel = 8;
  int embed_dim = 16;    // D, width of both representations
  int lstm_units = 16;   // must equal embed_dim
  int speech_conv_filters = 16;
  int speech_conv_kernel = 8;
  int pool = 3;          // window and stride of the MaxPool variant
  // One branch per concatenated feature; front outputs (embed_dim each) are
  // concatenated at the LSTM input.
  std::vector<SpeechBranch> branches{{"envelope", 1, SpeechVariant::NoConv}};

  int feature_dim() const;
  bool pooled() const;            // any MaxPool branch
  int output_frames() const;      // T'' after optional pooling
  void validate() const;
};

// Default variant: MaxPool for word embeddings, NoConv for F = 1, Conv otherwise.
SpeechVariant default_variant(const std::string& feature, int dim);
// Architecture for a '+' feature expression with library defaults.
ArchitectureConfig architecture_for(const std::string& feature_expr, int eeg_channels,
                                    int frames = 320);

// Conv weights are filters x (kernel * in_channels) with column k * C + c
// multiplying input channel c at tap k. "Same" padding: (K - 1) / 2 frames
// before, the rest after.
struct BranchParams {
  Matrix conv_w, conv_b;    // empty unless Conv
  Matrix dense_w, dense_b;  // D x (conv filters or branch dim)
};

struct ModelParams {
  ArchitectureConfig config;
  Matrix eeg_conv_w, eeg_conv_b;
  Matrix eeg_dense_w, eeg_dense_b;
  std::vector<BranchParams> branches;
  Matrix lstm_wx, lstm_wh, lstm_b;  // gate rows: input, forget, cell, output
  // Head on d(t) = sim_a(t) - sim_b(t):
  //   logit = v * mean_t [tanh(w d + b) - tanh(-w d + b)]
  Matrix head;  // 3 x 1: w, b, v

  // Named views of every trainable tensor in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  size_t parameter_count() const;

  // Same shapes, all zeros (gradient accumulator).
  ModelParams zeros_like() const;
  void set_zero();
  void add_scaled(const ModelParams& other, double scale);
  bool all_finite() const;
};

// Glorot-uniform weights, zero biases except forget-gate bias 1.
ModelParams init_params(const ArchitectureConfig& cfg, std::uint64_t seed);

double cosine_step(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);
inline constexpr double kCosineEps = 1e-8;

struct LstmState {
  Vector h;
  Vector c;
};

LstmState lstm_step(const Eigen::Ref<const Vector>& x, const LstmState& prev, const Matrix& wx,
                    const Matrix& wh, const Matrix& b);

// Cached activations of one forward call. backward() consumes it once.
struct ForwardTrace {
  struct Branch {
    Matrix cols;       // im2col input (Conv) or pooled input (MaxPool) or raw input
    Matrix conv_pre;   // Conv only
    Matrix conv_out;
    Matrix dense_in;   // input to the TD dense
    Matrix dense_pre;
  };
  struct Speech {
    std::vector<Branch> branches;
    Matrix lstm_in;        // sum(D) x T''
    Matrix gates;          // 4U x T'', post-activation
    Matrix c;              // U x (T'' + 1), column 0 is the initial state
    Matrix h;              // U x (T'' + 1)
  };
  Matrix eeg_cols, eeg_conv_pre, eeg_conv_out, eeg_dense_pre, eeg_dense_out;
  std::vector<Eigen::Index> eeg_pool_idx;  // argmax frame per pooled output element
  Matrix r_eeg;  // D x T''
  Speech a, b;
  Vector sim_a, sim_b, diff;
  double logit = 0.0;
  double p = 0.5;
  bool consumed = false;
};

// Probability that speech_a is the match.
double forward(const ModelParams& params, const Eigen::Ref<const Matrix>& eeg,
               const Eigen::Ref<const Matrix>& speech_a, const Eigen::Ref<const Matrix>& speech_b,
               ForwardTrace* trace = nullptr);

// Speech representation (D x T'') of one input, for weight-sharing checks.
Matrix speech_representation(const ModelParams& params, const Eigen::Ref<const Matrix>& speech);

// Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(double p, double label);
inline constexpr double kProbClamp = 1e-7;

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logit).
// Throws State if the trace was already consumed.
void backward(const ModelParams& params, ForwardTrace& trace, double dlogit, ModelParams& grads);

// Tie rule: p = 0.5 predicts input a.
inline bool predict_a(double p) { return p >= 0.5; }

// Checkpoint directory: manifest.json (architecture + tensor file per
// parameter name) and one .ndmm file per tensor.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& dir);

std::string architecture_to_json(const ArchitectureConfig& cfg);
ArchitectureConfig architecture_from_json(const std::string& text);

}  // namespace eegmatch
