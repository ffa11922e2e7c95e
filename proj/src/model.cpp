#include "eegmatch/model.hpp"

#include "eegmatch/error.hpp"
#include "eegmatch/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace eegmatch {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SpeechVariant v) {
  switch (v) {
    case SpeechVariant::Conv: return "conv";
    case SpeechVariant::NoConv: return "no-conv";
    case SpeechVariant::MaxPool: return "maxpool";
  }
  return "?";
}

SpeechVariant speech_variant_from_string(const std::string& s) {
  if (s == "conv") return SpeechVariant::Conv;
  if (s == "no-conv") return SpeechVariant::NoConv;
  if (s == "maxpool") return SpeechVariant::MaxPool;
  fail(ErrorKind::InvalidSpec, "unknown speech path variant '" + s + "'");
}

int ArchitectureConfig::feature_dim() const {
  int f = 0;
  for (const auto& b : branches) f += b.dim;
  return f;
}

bool ArchitectureConfig::pooled() const {
  return std::any_of(branches.begin(), branches.end(),
                     [](const SpeechBranch& b) { return b.variant == SpeechVariant::MaxPool; });
}

int ArchitectureConfig::output_frames() const { return pooled() ? frames / pool : frames; }

void ArchitectureConfig::validate() const {
  require(eeg_channels >= 1 && frames >= 1 && eeg_conv_filters >= 1 && eeg_conv_kernel >= 1 &&
              embed_dim >= 1 && lstm_units >= 1 && speech_conv_filters >= 1 &&
              speech_conv_kernel >= 1 && pool >= 1,
          ErrorKind::InvalidSpec, "architecture sizes must be at least 1");
  require(lstm_units == embed_dim, ErrorKind::InvalidSpec,
          "lstm_units must equal embed_dim for the cosine comparison");
  require(!branches.empty(), ErrorKind::InvalidSpec, "speech path needs at least one branch");
  for (const auto& b : branches) {
    require(b.dim >= 1, ErrorKind::InvalidSpec, "branch dimension must be at least 1");
    require(!(b.variant == SpeechVariant::Conv && b.dim < 2), ErrorKind::InvalidSpec,
            "conv speech front needs a feature dimension of at least 2");
  }
  if (pooled()) {
    require(std::all_of(branches.begin(), branches.end(),
                        [](const SpeechBranch& b) { return b.variant == SpeechVariant::MaxPool; }),
            ErrorKind::InvalidSpec, "max-pooled branches cannot be mixed with unpooled ones");
    require(frames >= pool, ErrorKind::InvalidSpec, "window shorter than the pooling stride");
  }
}

SpeechVariant default_variant(const std::string& feature, int dim) {
  if (feature == "wordemb") return SpeechVariant::MaxPool;
  return dim == 1 ? SpeechVariant::NoConv : SpeechVariant::Conv;
}

ArchitectureConfig architecture_for(const std::string& feature_expr, int eeg_channels,
                                    int frames) {
  ArchitectureConfig cfg;
  cfg.eeg_channels = eeg_channels;
  cfg.frames = frames;
  cfg.branches.clear();
  for (const auto& name : parse_feature_expression(feature_expr)) {
    const int dim = static_cast<int>(feature_dim(name));
    cfg.branches.push_back({name, dim, default_variant(name, dim)});
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out = {
      {"eeg_conv_w", &eeg_conv_w}, {"eeg_conv_b", &eeg_conv_b},
      {"eeg_dense_w", &eeg_dense_w}, {"eeg_dense_b", &eeg_dense_b}};
  for (size_t k = 0; k < branches.size(); ++k) {
    const std::string p = "speech" + std::to_string(k) + "_";
    auto& b = branches[k];
    if (b.conv_w.size() > 0) {
      out.push_back({p + "conv_w", &b.conv_w});
      out.push_back({p + "conv_b", &b.conv_b});
    }
    out.push_back({p + "dense_w", &b.dense_w});
    out.push_back({p + "dense_b", &b.dense_b});
  }
  out.push_back({"lstm_wx", &lstm_wx});
  out.push_back({"lstm_wh", &lstm_wh});
  out.push_back({"lstm_b", &lstm_b});
  out.push_back({"head", &head});
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : const_cast<ModelParams*>(this)->tensors()) out.push_back({name, m});
  return out;
}

size_t ModelParams::parameter_count() const {
  size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<size_t>(m->size());
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.set_zero();
  return z;
}

void ModelParams::set_zero() {
  for (auto& [name, m] : tensors()) m->setZero();
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  require(mine.size() == theirs.size(), ErrorKind::ShapeMismatch, "parameter sets differ");
  for (size_t i = 0; i < mine.size(); ++i) *mine[i].second += scale * *theirs[i].second;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, m] : tensors())
    if (!m->allFinite()) return false;
  return true;
}

namespace {

Matrix glorot(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double fan_in,
              double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

}  // namespace

ModelParams init_params(const ArchitectureConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = cfg;
  const int C = cfg.eeg_channels, Ke = cfg.eeg_conv_kernel, Fe = cfg.eeg_conv_filters;
  const int D = cfg.embed_dim, U = cfg.lstm_units;
  p.eeg_conv_w = glorot(rng, Fe, Ke * C, Ke * C, Ke * Fe);
  p.eeg_conv_b = Matrix::Zero(Fe, 1);
  p.eeg_dense_w = glorot(rng, D, Fe, Fe, D);
  p.eeg_dense_b = Matrix::Zero(D, 1);
  for (const auto& b : cfg.branches) {
    BranchParams bp;
    int in = b.dim;
    if (b.variant == SpeechVariant::Conv) {
      const int Ks = cfg.speech_conv_kernel, Fs = cfg.speech_conv_filters;
      bp.conv_w = glorot(rng, Fs, Ks * b.dim, Ks * b.dim, Ks * Fs);
      bp.conv_b = Matrix::Zero(Fs, 1);
      in = Fs;
    }
    bp.dense_w = glorot(rng, D, in, in, D);
    bp.dense_b = Matrix::Zero(D, 1);
    p.branches.push_back(std::move(bp));
  }
  const int din = D * static_cast<int>(cfg.branches.size());
  p.lstm_wx = glorot(rng, 4 * U, din, din, 4 * U);
  p.lstm_wh = glorot(rng, 4 * U, U, U, 4 * U);
  p.lstm_b = Matrix::Zero(4 * U, 1);
  p.lstm_b.block(U, 0, U, 1).setOnes();
  p.head.resize(3, 1);
  p.head << 1.0, 0.0, 1.0;
  return p;
}

// ---------------------------------------------------------------------------

double cosine_step(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  return u.dot(v) / (std::max(u.norm(), kCosineEps) * std::max(v.norm(), kCosineEps));
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Rows k * C + c hold input channel c shifted by tap k ("same" padding).
Matrix im2col(const Eigen::Ref<const Matrix>& x, int kernel) {
  const Eigen::Index C = x.rows(), T = x.cols();
  const long left = (kernel - 1) / 2;
  Matrix cols = Matrix::Zero(C * kernel, T);
  for (int k = 0; k < kernel; ++k) {
    const long shift = k - left;
    const long t0 = std::max(0L, -shift);
    const long t1 = std::min<long>(T, T - shift);
    if (t1 > t0) cols.block(k * C, t0, C, t1 - t0) = x.middleCols(t0 + shift, t1 - t0);
  }
  return cols;
}

Matrix affine(const Matrix& w, const Matrix& b, const Eigen::Ref<const Matrix>& x) {
  Matrix y = w * x;
  y.colwise() += b.col(0);
  return y;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

// Max over non-overlapping windows of `pool` frames; idx gets the source frame.
Matrix maxpool(const Eigen::Ref<const Matrix>& x, int pool, std::vector<Eigen::Index>* idx) {
  const Eigen::Index R = x.rows(), T2 = x.cols() / pool;
  Matrix y(R, T2);
  if (idx) idx->assign(static_cast<size_t>(R * T2), 0);
  for (Eigen::Index j = 0; j < T2; ++j)
    for (Eigen::Index r = 0; r < R; ++r) {
      Eigen::Index best = j * pool;
      for (Eigen::Index t = j * pool + 1; t < (j + 1) * pool; ++t)
        if (x(r, t) > x(r, best)) best = t;
      y(r, j) = x(r, best);
      if (idx) (*idx)[static_cast<size_t>(j * R + r)] = best;
    }
  return y;
}

void run_speech(const ModelParams& params, const Eigen::Ref<const Matrix>& speech,
                ForwardTrace::Speech& s) {
  const auto& cfg = params.config;
  const int D = cfg.embed_dim, U = cfg.lstm_units;
  const Eigen::Index T2 = cfg.output_frames();
  s.branches.resize(cfg.branches.size());
  s.lstm_in.resize(D * static_cast<Eigen::Index>(cfg.branches.size()), T2);
  Eigen::Index row = 0;
  for (size_t k = 0; k < cfg.branches.size(); ++k) {
    const auto& bc = cfg.branches[k];
    const auto& bp = params.branches[k];
    auto& bt = s.branches[k];
    const auto x = speech.middleRows(row, bc.dim);
    row += bc.dim;
    switch (bc.variant) {
      case SpeechVariant::Conv:
        bt.cols = im2col(x, cfg.speech_conv_kernel);
        bt.conv_pre = affine(bp.conv_w, bp.conv_b, bt.cols);
        bt.conv_out = relu(bt.conv_pre);
        bt.dense_in = bt.conv_out;
        break;
      case SpeechVariant::NoConv:
        bt.dense_in = x;
        break;
      case SpeechVariant::MaxPool:
        bt.dense_in = maxpool(x, cfg.pool, nullptr);
        break;
    }
    bt.dense_pre = affine(bp.dense_w, bp.dense_b, bt.dense_in);
    s.lstm_in.middleRows(static_cast<Eigen::Index>(k) * D, D) = relu(bt.dense_pre);
  }

  s.gates = affine(params.lstm_wx, params.lstm_b, s.lstm_in);
  s.c = Matrix::Zero(U, T2 + 1);
  s.h = Matrix::Zero(U, T2 + 1);
  for (Eigen::Index t = 0; t < T2; ++t) {
    auto a = s.gates.col(t);
    a.noalias() += params.lstm_wh * s.h.col(t);
    for (int i = 0; i < U; ++i) {
      a(i) = sigmoid(a(i));
      a(U + i) = sigmoid(a(U + i));
      a(2 * U + i) = std::tanh(a(2 * U + i));
      a(3 * U + i) = sigmoid(a(3 * U + i));
      s.c(i, t + 1) = a(U + i) * s.c(i, t) + a(i) * a(2 * U + i);
      s.h(i, t + 1) = a(3 * U + i) * std::tanh(s.c(i, t + 1));
    }
  }
}

void check_input(const ArchitectureConfig& cfg, const Eigen::Ref<const Matrix>& m, int rows,
                 const char* what) {
  require(m.rows() == rows && m.cols() == cfg.frames, ErrorKind::ShapeMismatch,
          std::string(what) + " must be " + std::to_string(rows) + "x" +
              std::to_string(cfg.frames) + ", got " + std::to_string(m.rows()) + "x" +
              std::to_string(m.cols()));
}

}  // namespace

LstmState lstm_step(const Eigen::Ref<const Vector>& x, const LstmState& prev, const Matrix& wx,
                    const Matrix& wh, const Matrix& b) {
  const Eigen::Index U = prev.h.size();
  require(wx.rows() == 4 * U && wx.cols() == x.size() && wh.rows() == 4 * U && wh.cols() == U &&
              b.rows() == 4 * U && prev.c.size() == U,
          ErrorKind::ShapeMismatch, "LSTM dimensions do not match");
  const Vector a = wx * x + wh * prev.h + b.col(0);
  LstmState next{Vector(U), Vector(U)};
  for (Eigen::Index i = 0; i < U; ++i) {
    const double ig = sigmoid(a(i)), fg = sigmoid(a(U + i));
    const double g = std::tanh(a(2 * U + i)), og = sigmoid(a(3 * U + i));
    next.c(i) = fg * prev.c(i) + ig * g;
    next.h(i) = og * std::tanh(next.c(i));
  }
  return next;
}

double forward(const ModelParams& params, const Eigen::Ref<const Matrix>& eeg,
               const Eigen::Ref<const Matrix>& speech_a, const Eigen::Ref<const Matrix>& speech_b,
               ForwardTrace* trace) {
  const auto& cfg = params.config;
  check_input(cfg, eeg, cfg.eeg_channels, "EEG window");
  check_input(cfg, speech_a, cfg.feature_dim(), "speech input a");
  check_input(cfg, speech_b, cfg.feature_dim(), "speech input b");

  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  tr = ForwardTrace{};

  tr.eeg_cols = im2col(eeg, cfg.eeg_conv_kernel);
  tr.eeg_conv_pre = affine(params.eeg_conv_w, params.eeg_conv_b, tr.eeg_cols);
  tr.eeg_conv_out = relu(tr.eeg_conv_pre);
  tr.eeg_dense_pre = affine(params.eeg_dense_w, params.eeg_dense_b, tr.eeg_conv_out);
  tr.eeg_dense_out = relu(tr.eeg_dense_pre);
  tr.r_eeg = cfg.pooled() ? maxpool(tr.eeg_dense_out, cfg.pool, &tr.eeg_pool_idx)
                          : tr.eeg_dense_out;

  run_speech(params, speech_a, tr.a);
  run_speech(params, speech_b, tr.b);

  const Eigen::Index T2 = cfg.output_frames();
  tr.sim_a.resize(T2);
  tr.sim_b.resize(T2);
  for (Eigen::Index t = 0; t < T2; ++t) {
    tr.sim_a(t) = cosine_step(tr.r_eeg.col(t), tr.a.h.col(t + 1));
    tr.sim_b(t) = cosine_step(tr.r_eeg.col(t), tr.b.h.col(t + 1));
  }
  tr.diff = tr.sim_a - tr.sim_b;
  const double w = params.head(0), b = params.head(1), v = params.head(2);
  double m = 0.0;
  for (Eigen::Index t = 0; t < T2; ++t)
    m += std::tanh(w * tr.diff(t) + b) - std::tanh(-w * tr.diff(t) + b);
  m /= static_cast<double>(T2);
  tr.logit = v * m;
  tr.p = sigmoid(tr.logit);
  return tr.p;
}

Matrix speech_representation(const ModelParams& params, const Eigen::Ref<const Matrix>& speech) {
  check_input(params.config, speech, params.config.feature_dim(), "speech input");
  ForwardTrace::Speech s;
  run_speech(params, speech, s);
  return s.h.rightCols(s.h.cols() - 1);
}

double bce_loss(double p, double label) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
}

// ---------------------------------------------------------------------------

namespace {

// d cos(u, v) / du scaled by g, with the epsilon guard treated as a constant.
void cosine_grad(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v, double g,
                 Eigen::Ref<Vector> du, Eigen::Ref<Vector> dv) {
  const double nu = u.norm(), nv = v.norm();
  const double Nu = std::max(nu, kCosineEps), Nv = std::max(nv, kCosineEps);
  const double s = u.dot(v);
  du += g * v / (Nu * Nv);
  dv += g * u / (Nu * Nv);
  if (nu > kCosineEps) du -= g * s / (nu * nu * nu * Nv) * u;
  if (nv > kCosineEps) dv -= g * s / (nv * nv * nv * Nu) * v;
}

void relu_backward(Matrix& grad, const Matrix& pre) {
  grad.array() *= (pre.array() > 0.0).cast<double>();
}

void backward_speech(const ModelParams& params, const ForwardTrace::Speech& s, const Matrix& dh_out,
                     ModelParams& grads) {
  const auto& cfg = params.config;
  const int U = cfg.lstm_units, D = cfg.embed_dim;
  const Eigen::Index T2 = dh_out.cols();
  Matrix dA(4 * U, T2);
  Vector dh_next = Vector::Zero(U), dc_next = Vector::Zero(U);
  for (Eigen::Index t = T2 - 1; t >= 0; --t) {
    const auto g = s.gates.col(t);
    for (int i = 0; i < U; ++i) {
      const double ig = g(i), fg = g(U + i), cg = g(2 * U + i), og = g(3 * U + i);
      const double ct = s.c(i, t + 1), tc = std::tanh(ct);
      const double dh = dh_out(i, t) + dh_next(i);
      const double d_o = dh * tc;
      const double dc = dc_next(i) + dh * og * (1.0 - tc * tc);
      dA(i, t) = dc * cg * ig * (1.0 - ig);
      dA(U + i, t) = dc * s.c(i, t) * fg * (1.0 - fg);
      dA(2 * U + i, t) = dc * ig * (1.0 - cg * cg);
      dA(3 * U + i, t) = d_o * og * (1.0 - og);
      dc_next(i) = dc * fg;
    }
    dh_next.noalias() = params.lstm_wh.transpose() * dA.col(t);
  }
  grads.lstm_wx.noalias() += dA * s.lstm_in.transpose();
  grads.lstm_wh.noalias() += dA * s.h.leftCols(T2).transpose();
  grads.lstm_b += dA.rowwise().sum();
  const Matrix d_in = params.lstm_wx.transpose() * dA;

  for (size_t k = 0; k < cfg.branches.size(); ++k) {
    const auto& bt = s.branches[k];
    const auto& bp = params.branches[k];
    auto& bg = grads.branches[k];
    Matrix d_pre = d_in.middleRows(static_cast<Eigen::Index>(k) * D, D);
    relu_backward(d_pre, bt.dense_pre);
    bg.dense_w.noalias() += d_pre * bt.dense_in.transpose();
    bg.dense_b += d_pre.rowwise().sum();
    if (cfg.branches[k].variant == SpeechVariant::Conv) {
      Matrix d_conv = bp.dense_w.transpose() * d_pre;
      relu_backward(d_conv, bt.conv_pre);
      bg.conv_w.noalias() += d_conv * bt.cols.transpose();
      bg.conv_b += d_conv.rowwise().sum();
    }
  }
}

}  // namespace

void backward(const ModelParams& params, ForwardTrace& tr, double dlogit, ModelParams& grads) {
  require(!tr.consumed, ErrorKind::State, "forward trace was already consumed by backward");
  tr.consumed = true;
  const auto& cfg = params.config;
  const Eigen::Index T2 = tr.diff.size();
  require(T2 == cfg.output_frames() && grads.branches.size() == params.branches.size(),
          ErrorKind::ShapeMismatch, "trace or gradient buffer does not match the parameters");

  const double w = params.head(0), b = params.head(1), v = params.head(2);
  double m = 0.0, dw = 0.0, db = 0.0;
  const double dm = dlogit * v;
  Vector dd(T2);
  for (Eigen::Index t = 0; t < T2; ++t) {
    const double d = tr.diff(t);
    const double ta = std::tanh(w * d + b), tb = std::tanh(-w * d + b);
    m += ta - tb;
    const double dza = dm / static_cast<double>(T2) * (1.0 - ta * ta);
    const double dzb = -dm / static_cast<double>(T2) * (1.0 - tb * tb);
    dw += (dza - dzb) * d;
    db += dza + dzb;
    dd(t) = w * (dza - dzb);
  }
  m /= static_cast<double>(T2);
  grads.head(0) += dw;
  grads.head(1) += db;
  grads.head(2) += dlogit * m;

  const int D = cfg.embed_dim;
  Matrix d_eeg = Matrix::Zero(D, T2), dha = Matrix::Zero(D, T2), dhb = Matrix::Zero(D, T2);
  for (Eigen::Index t = 0; t < T2; ++t) {
    cosine_grad(tr.r_eeg.col(t), tr.a.h.col(t + 1), dd(t), d_eeg.col(t), dha.col(t));
    cosine_grad(tr.r_eeg.col(t), tr.b.h.col(t + 1), -dd(t), d_eeg.col(t), dhb.col(t));
  }
  backward_speech(params, tr.a, dha, grads);
  backward_speech(params, tr.b, dhb, grads);

  Matrix d_dense;
  if (cfg.pooled()) {
    d_dense = Matrix::Zero(tr.eeg_dense_out.rows(), tr.eeg_dense_out.cols());
    for (Eigen::Index j = 0; j < T2; ++j)
      for (Eigen::Index r = 0; r < D; ++r)
        d_dense(r, tr.eeg_pool_idx[static_cast<size_t>(j * D + r)]) += d_eeg(r, j);
  } else {
    d_dense = std::move(d_eeg);
  }
  relu_backward(d_dense, tr.eeg_dense_pre);
  grads.eeg_dense_w.noalias() += d_dense * tr.eeg_conv_out.transpose();
  grads.eeg_dense_b += d_dense.rowwise().sum();
  Matrix d_conv = params.eeg_dense_w.transpose() * d_dense;
  relu_backward(d_conv, tr.eeg_conv_pre);
  grads.eeg_conv_w.noalias() += d_conv * tr.eeg_cols.transpose();
  grads.eeg_conv_b += d_conv.rowwise().sum();
}

// ---------------------------------------------------------------------------

namespace {

json config_json(const ArchitectureConfig& c) {
  json branches = json::array();
  for (const auto& b : c.branches)
    branches.push_back({{"feature", b.feature}, {"dim", b.dim}, {"variant", to_string(b.variant)}});
  return {{"eeg_channels", c.eeg_channels},
          {"frames", c.frames},
          {"eeg_conv_filters", c.eeg_conv_filters},
          {"eeg_conv_kernel", c.eeg_conv_kernel},
          {"embed_dim", c.embed_dim},
          {"lstm_units", c.lstm_units},
          {"speech_conv_filters", c.speech_conv_filters},
          {"speech_conv_kernel", c.speech_conv_kernel},
          {"pool", c.pool},
          {"branches", branches}};
}

ArchitectureConfig config_from(const json& j) {
  ArchitectureConfig c;
  c.eeg_channels = j.value("eeg_channels", c.eeg_channels);
  c.frames = j.value("frames", c.frames);
  c.eeg_conv_filters = j.value("eeg_conv_filters", c.eeg_conv_filters);
  c.eeg_conv_kernel = j.value("eeg_conv_kernel", c.eeg_conv_kernel);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.lstm_units = j.value("lstm_units", c.lstm_units);
  c.speech_conv_filters = j.value("speech_conv_filters", c.speech_conv_filters);
  c.speech_conv_kernel = j.value("speech_conv_kernel", c.speech_conv_kernel);
  c.pool = j.value("pool", c.pool);
  if (j.contains("branches")) {
    c.branches.clear();
    for (const auto& b : j.at("branches"))
      c.branches.push_back({b.value("feature", std::string{}), b.at("dim").get<int>(),
                            speech_variant_from_string(b.at("variant").get<std::string>())});
  }
  c.validate();
  return c;
}

}  // namespace

std::string architecture_to_json(const ArchitectureConfig& cfg) {
  return config_json(cfg).dump(2);
}

ArchitectureConfig architecture_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("architecture config: ") + e.what());
  }
}

void save_checkpoint(const fs::path& dir, const ModelParams& params) {
  fs::create_directories(dir);
  json files = json::object();
  for (const auto& [name, m] : params.tensors()) {
    const std::string file = name + ".ndmm";
    write_tensor(dir / file, TimeSeriesTensor(*m, 1.0));
    files[name] = file;
  }
  std::ofstream out(dir / "manifest.json");
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write checkpoint manifest in " + dir.string());
  out << json{{"architecture", config_json(params.config)}, {"parameters", files}}.dump(2) << '\n';
}

ModelParams load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read checkpoint manifest in " + dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "checkpoint manifest: " + std::string(e.what()));
  }
  ModelParams p;
  try {
    p = init_params(config_from(j.at("architecture")), 0);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "checkpoint architecture: " + std::string(e.what()));
  }
  const auto& files = j.at("parameters");
  for (auto& [name, m] : p.tensors()) {
    require(files.contains(name), ErrorKind::Format, "checkpoint lacks parameter '" + name + "'");
    const auto t = read_tensor(dir / files.at(name).get<std::string>());
    require(t.data.rows() == m->rows() && t.data.cols() == m->cols(), ErrorKind::ShapeMismatch,
            "checkpoint parameter '" + name + "' has the wrong shape");
    *m = t.data;
  }
  return p;
}

}  // namespace eegmatch
