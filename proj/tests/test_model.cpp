#include <doctest.h>

#include "eegmatch/error.hpp"
#include "eegmatch/model.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace eegmatch;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

ArchitectureConfig tiny(std::vector<SpeechBranch> branches) {
  ArchitectureConfig c;
  c.eeg_channels = 4;
  c.frames = 20;
  c.eeg_conv_filters = 3;
  c.eeg_conv_kernel = 3;
  c.embed_dim = 3;
  c.lstm_units = 3;
  c.speech_conv_filters = 3;
  c.speech_conv_kernel = 3;
  c.branches = std::move(branches);
  return c;
}

// Randomize every tensor, biases included, so no path is trivially zero.
ModelParams random_params(const ArchitectureConfig& cfg, std::uint64_t seed) {
  auto p = init_params(cfg, seed);
  std::mt19937_64 rng(seed + 1000);
  for (auto& [name, m] : p.tensors()) *m = random_matrix(rng, m->rows(), m->cols(), 0.5);
  p.head << 1.3, 0.4, 2.0;
  return p;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-loop LSTM reference.
void lstm_reference(const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c,
                    const Matrix& wx, const Matrix& wh, const Matrix& b) {
  const size_t U = h.size();
  std::vector<double> a(4 * U);
  for (size_t r = 0; r < 4 * U; ++r) {
    double s = b(static_cast<Eigen::Index>(r), 0);
    for (size_t k = 0; k < x.size(); ++k) s += wx(r, k) * x[k];
    for (size_t k = 0; k < U; ++k) s += wh(r, k) * h[k];
    a[r] = s;
  }
  for (size_t i = 0; i < U; ++i) {
    const double ig = sig(a[i]), fg = sig(a[U + i]), g = std::tanh(a[2 * U + i]),
                 og = sig(a[3 * U + i]);
    c[i] = fg * c[i] + ig * g;
    h[i] = og * std::tanh(c[i]);
  }
}

struct Inputs {
  Matrix eeg, a, b;
};

Inputs random_inputs(const ArchitectureConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {random_matrix(rng, cfg.eeg_channels, cfg.frames),
          random_matrix(rng, cfg.feature_dim(), cfg.frames),
          random_matrix(rng, cfg.feature_dim(), cfg.frames)};
}

double loss_at(const ModelParams& p, const Inputs& in, double label) {
  return bce_loss(forward(p, in.eeg, in.a, in.b), label);
}

// Worst per-tensor relative error of the analytic gradient against central
// differences.
double gradient_check(const ArchitectureConfig& cfg, std::uint64_t seed, std::string* worst) {
  auto params = random_params(cfg, seed);
  const auto in = random_inputs(cfg, seed + 7);
  const double label = 1.0;
  ForwardTrace tr;
  const double p = forward(params, in.eeg, in.a, in.b, &tr);
  auto grads = params.zeros_like();
  backward(params, tr, p - label, grads);

  const double h = 1e-5;
  double max_rel = 0.0;
  auto ptensors = params.tensors();
  const auto gtensors = grads.tensors();
  for (size_t k = 0; k < ptensors.size(); ++k) {
    Matrix& m = *ptensors[k].second;
    Matrix fd(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + h;
      const double lp = loss_at(params, in, label);
      m.data()[i] = orig - h;
      const double lm = loss_at(params, in, label);
      m.data()[i] = orig;
      fd.data()[i] = (lp - lm) / (2.0 * h);
    }
    const Matrix& g = *gtensors[k].second;
    const double scale = std::max(g.norm(), fd.norm());
    const double rel = scale < 1e-9 ? 0.0 : (g - fd).norm() / scale;
    if (rel > max_rel) {
      max_rel = rel;
      if (worst) *worst = ptensors[k].first;
    }
  }
  return max_rel;
}

}  // namespace

TEST_CASE("cosine_step") {
  const Vector e1 = Vector::Unit(4, 0);
  CHECK(cosine_step(e1, e1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_step(e1, -e1) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine_step(Vector::Zero(4), e1) == 0.0);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector u = random_matrix(rng, 7, 1), v = random_matrix(rng, 7, 1);
    double dot = 0, nu = 0, nv = 0;
    for (int i = 0; i < 7; ++i) {
      dot += u(i) * v(i);
      nu += u(i) * u(i);
      nv += v(i) * v(i);
    }
    const double ref = dot / (std::sqrt(nu) * std::sqrt(nv));
    CHECK(std::abs(cosine_step(u, v) - ref) < 1e-12);
    CHECK(std::abs(cosine_step(u, v)) <= 1.0 + 1e-15);
  }
}

TEST_CASE("lstm_step") {
  SUBCASE("all zero") {
    const auto s = lstm_step(Vector::Zero(3), {Vector::Zero(2), Vector::Zero(2)}, Matrix::Zero(8, 3),
                             Matrix::Zero(8, 2), Matrix::Zero(8, 1));
    CHECK(s.h.isZero(0.0));
    CHECK(s.c.isZero(0.0));
  }
  SUBCASE("saturated forget gate keeps the cell") {
    Matrix b = Matrix::Zero(8, 1);
    b.block(2, 0, 2, 1).setConstant(50.0);  // forget
    b.block(0, 0, 2, 1).setConstant(-50.0); // input closed
    Vector c(2);
    c << 0.7, -1.3;
    const auto s = lstm_step(Vector::Ones(3), {Vector::Constant(2, 0.2), c}, Matrix::Zero(8, 3),
                             Matrix::Zero(8, 2), b);
    CHECK((s.c - c).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("matches the scalar-loop reference") {
    std::mt19937_64 rng(11);
    const int U = 3, X = 3;
    const Matrix wx = random_matrix(rng, 4 * U, X), wh = random_matrix(rng, 4 * U, U),
                 b = random_matrix(rng, 4 * U, 1);
    LstmState st{Vector::Zero(U), Vector::Zero(U)};
    std::vector<double> h(U, 0.0), c(U, 0.0);
    for (int t = 0; t < 25; ++t) {
      const Vector x = random_matrix(rng, X, 1);
      st = lstm_step(x, st, wx, wh, b);
      lstm_reference({x(0), x(1), x(2)}, h, c, wx, wh, b);
      for (int i = 0; i < U; ++i) {
        CHECK(std::abs(st.h(i) - h[i]) < 1e-12);
        CHECK(std::abs(st.c(i) - c[i]) < 1e-12);
      }
    }
  }
}

TEST_CASE("bce_loss") {
  CHECK(bce_loss(0.5, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.5, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(1.0 - 1e-12, 1.0) < 1e-6);
  CHECK(bce_loss(1.0, 0.0) == doctest::Approx(-std::log(1e-7)));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int i = 0; i < 50; ++i) {
    const double p = u(rng);
    CHECK(bce_loss(p, 1.0) == doctest::Approx(-std::log(p)).epsilon(1e-14));
    CHECK(bce_loss(p, 0.0) == doctest::Approx(-std::log(1.0 - p)).epsilon(1e-14));
  }
}

TEST_CASE("architecture variants") {
  CHECK(architecture_for("env", 64).branches[0].variant == SpeechVariant::NoConv);
  CHECK(architecture_for("mel", 64).branches[0].variant == SpeechVariant::Conv);
  const auto w = architecture_for("wordemb", 64);
  CHECK(w.branches[0].variant == SpeechVariant::MaxPool);
  CHECK(w.output_frames() == 106);
  const auto cat = architecture_for("env+bpc", 64);
  CHECK(cat.branches.size() == 2);
  CHECK(cat.feature_dim() == 7);
  CHECK_THROWS_AS(architecture_for("mel+wordemb", 64), Error);
  auto bad = tiny({{"x", 1, SpeechVariant::Conv}});
  CHECK_THROWS_AS(bad.validate(), Error);
  const auto json = architecture_to_json(cat);
  const auto back = architecture_from_json(json);
  CHECK(back.branches[1].dim == 6);
  CHECK(back.branches[1].variant == SpeechVariant::Conv);
}

TEST_CASE("forward symmetry") {
  const auto cfg = architecture_for("mel", 64);
  const auto params = random_params(cfg, 5);
  std::mt19937_64 rng(9);
  SUBCASE("swapping the speech inputs gives 1 - p") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto in = random_inputs(cfg, 100 + trial);
      const double p = forward(params, in.eeg, in.a, in.b);
      const double q = forward(params, in.eeg, in.b, in.a);
      CHECK(std::abs(p + q - 1.0) < 1e-12);
    }
  }
  SUBCASE("identical speech inputs give exactly 0.5") {
    const auto in = random_inputs(cfg, 3);
    CHECK(forward(params, in.eeg, in.a, in.a) == 0.5);
  }
  SUBCASE("zero EEG with freshly initialised params gives 0.5") {
    const auto fresh = init_params(cfg, 1);
    const auto in = random_inputs(cfg, 4);
    ForwardTrace tr;
    CHECK(forward(fresh, Matrix::Zero(64, 320), in.a, in.b, &tr) == 0.5);
    CHECK(tr.sim_a.isZero(0.0));
    CHECK(tr.sim_b.isZero(0.0));
  }
  SUBCASE("shape mismatch") {
    const auto in = random_inputs(cfg, 4);
    CHECK_THROWS_AS(forward(params, Matrix::Zero(63, 320), in.a, in.b), Error);
    CHECK_THROWS_AS(forward(params, in.eeg, Matrix::Zero(28, 319), in.b), Error);
  }
}

TEST_CASE("speech path weight sharing") {
  const auto cfg = tiny({{"bpc", 6, SpeechVariant::Conv}});
  auto params = random_params(cfg, 8);
  const auto in = random_inputs(cfg, 8);
  ForwardTrace tr;
  forward(params, in.eeg, in.a, in.a, &tr);
  CHECK(tr.a.h == tr.b.h);
  params.branches[0].conv_w(0, 0) += 0.3;
  params.lstm_wh(1, 1) -= 0.2;
  ForwardTrace tr2;
  forward(params, in.eeg, in.a, in.a, &tr2);
  CHECK(tr2.a.h == tr2.b.h);
  CHECK(tr2.a.h != tr.a.h);
  CHECK(speech_representation(params, in.a) == tr2.a.h.rightCols(cfg.frames));
}

TEST_CASE("gradient check against central differences") {
  const std::vector<std::vector<SpeechBranch>> cases = {
      {{"envelope", 1, SpeechVariant::NoConv}},
      {{"anyphoneme", 2, SpeechVariant::Conv}},
      {{"vowel_consonant", 3, SpeechVariant::Conv}},
      {{"bpc", 6, SpeechVariant::Conv}},
      {{"mel", 28, SpeechVariant::Conv}},
      {{"phoneme", 40, SpeechVariant::Conv}},
      {{"wordemb", 300, SpeechVariant::MaxPool}},
      {{"envelope", 1, SpeechVariant::NoConv}, {"bpc", 6, SpeechVariant::Conv}},
  };
  for (size_t k = 0; k < cases.size(); ++k) {
    const auto cfg = tiny(cases[k]);
    std::string worst;
    const double rel = gradient_check(cfg, 40 + k, &worst);
    MESSAGE("case " << k << " (dim " << cfg.feature_dim() << "): max rel " << rel << " in " << worst);
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("backward edge cases") {
  const auto cfg = tiny({{"bpc", 6, SpeechVariant::Conv}});
  const auto params = random_params(cfg, 12);
  const auto in = random_inputs(cfg, 12);
  SUBCASE("symmetric pair: zero head-bias gradient") {
    ForwardTrace tr;
    const double p = forward(params, in.eeg, in.a, in.a, &tr);
    auto g = params.zeros_like();
    backward(params, tr, p - 1.0, g);
    CHECK(g.head(1) == 0.0);
  }
  SUBCASE("zero upstream gradient") {
    ForwardTrace tr;
    forward(params, in.eeg, in.a, in.b, &tr);
    auto g = params.zeros_like();
    backward(params, tr, 0.0, g);
    for (const auto& [name, m] : g.tensors()) CHECK(m->isZero(0.0));
  }
  SUBCASE("a trace is consumed once") {
    ForwardTrace tr;
    forward(params, in.eeg, in.a, in.b, &tr);
    auto g = params.zeros_like();
    backward(params, tr, 0.1, g);
    CHECK_THROWS_AS(backward(params, tr, 0.1, g), Error);
  }
  SUBCASE("deterministic") {
    CHECK(forward(params, in.eeg, in.a, in.b) == forward(params, in.eeg, in.a, in.b));
  }
}

TEST_CASE("prediction") {
  CHECK(predict_a(0.7));
  CHECK_FALSE(predict_a(0.3));
  CHECK(predict_a(0.5));
  const auto cfg = tiny({{"envelope", 1, SpeechVariant::NoConv}});
  const auto params = random_params(cfg, 21);
  int correct = 0, n = 40;
  int recount = 0;
  for (int i = 0; i < n; ++i) {
    const auto in = random_inputs(cfg, 200 + i);
    const double label = i % 2;
    const double p = forward(params, in.eeg, in.a, in.b);
    correct += (predict_a(p) ? 1.0 : 0.0) == label;
    recount += (p >= 0.5 && label == 1.0) || (p < 0.5 && label == 0.0);
  }
  CHECK(correct == recount);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "eegmatch_ckpt_test";
  std::filesystem::remove_all(dir);
  const auto cfg = tiny({{"envelope", 1, SpeechVariant::NoConv}, {"bpc", 6, SpeechVariant::Conv}});
  const auto params = random_params(cfg, 33);
  save_checkpoint(dir, params);
  const auto back = load_checkpoint(dir);
  const auto a = params.tensors(), b = back.tensors();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(*a[i].second == *b[i].second);
  }
  const auto in = random_inputs(cfg, 1);
  CHECK(forward(params, in.eeg, in.a, in.b) == forward(back, in.eeg, in.a, in.b));
  std::filesystem::remove_all(dir);
}
