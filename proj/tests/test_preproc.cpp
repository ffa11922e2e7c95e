#include <doctest.h>

#include "eegmatch/error.hpp"
#include "eegmatch/preproc.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace eegmatch;

namespace {

TimeSeriesTensor row_tensor(const std::vector<double>& v, double fs) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return TimeSeriesTensor(std::move(m), fs);
}

std::vector<double> row_vector(const TimeSeriesTensor& x, Eigen::Index c = 0) {
  std::vector<double> v(static_cast<size_t>(x.frames()));
  for (Eigen::Index i = 0; i < x.frames(); ++i) v[static_cast<size_t>(i)] = x.data(c, i);
  return v;
}

}  // namespace

TEST_CASE("common average reference") {
  SUBCASE("symmetric two-channel case") {
    Matrix m(2, 1);
    m << 1, 3;
    const auto y = common_average_reference(TimeSeriesTensor(m, 64.0));
    CHECK(y.data(0, 0) == doctest::Approx(-1.0));
    CHECK(y.data(1, 0) == doctest::Approx(1.0));
    CHECK(y.fs == 64.0);
  }
  SUBCASE("identical channels give zeros") {
    Matrix m = Matrix::Ones(4, 10) * 3.5;
    CHECK(common_average_reference(TimeSeriesTensor(m, 64.0)).data.isZero(0.0));
  }
  SUBCASE("random input has zero channel sums and is idempotent") {
    std::srand(7);
    const TimeSeriesTensor x(Matrix::Random(8, 100), 64.0);
    const auto y = common_average_reference(x);
    for (Eigen::Index t = 0; t < y.frames(); ++t) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < y.channels(); ++c) s += y.data(c, t);
      CHECK(std::abs(s) < 1e-10);
    }
    const auto yy = common_average_reference(y);
    CHECK((yy.data - y.data).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("single channel is rejected") {
    CHECK_THROWS_AS(common_average_reference(TimeSeriesTensor(Matrix::Ones(1, 5), 64.0)),
                    Error);
  }
}

TEST_CASE("Chebyshev-II bandpass design") {
  const BandpassSpec spec{};
  const double fs = 8000.0;
  const auto f = design_bandpass(spec, fs);

  SUBCASE("stopbands reach the attenuation target on a frequency grid") {
    double worst = -1e9;
    for (double fr = 1e-3; fr <= 0.25; fr += 1e-3) worst = std::max(worst, f.magnitude_db(fr));
    for (double fr = 40.0; fr < fs / 2; fr *= 1.002) worst = std::max(worst, f.magnitude_db(fr));
    MESSAGE("worst stopband gain " << worst << " dB, prototype order " << f.prototype_order);
    CHECK(worst <= -80.0);
  }
  SUBCASE("passband midpoint is close to unity") {
    const double mid = f.magnitude_db(4.0);
    CHECK(mid >= -3.0);
    CHECK(mid <= 0.1);
  }
  SUBCASE("edges outside (0, fs/2) are rejected") {
    CHECK_THROWS_AS(design_bandpass(BandpassSpec{0.5, 4000.0}, fs), Error);
    CHECK_THROWS_AS(design_bandpass(BandpassSpec{0.0, 32.0}, fs), Error);
    CHECK_THROWS_AS(design_bandpass(BandpassSpec{0.5, 32.0}, 64.0), Error);
  }
  SUBCASE("highpass variant used for 64 Hz feature streams") {
    const auto hp = design_highpass(0.5, 0.25, 80.0, 1.0, 64.0);
    for (double fr = 1e-3; fr <= 0.25; fr += 1e-3) CHECK(hp.magnitude_db(fr) <= -80.0);
    CHECK(hp.magnitude_db(4.0) >= -1.0);
    CHECK(hp.magnitude_db(30.0) >= -1.0);
  }
}

TEST_CASE("zero-phase filtering") {
  const double fs = 8000.0;
  const auto f = design_bandpass(BandpassSpec{}, fs);
  const size_t n = 8 * 8000;

  SUBCASE("zero in, zero out") {
    const auto y = apply_filter(row_tensor(std::vector<double>(n, 0.0), fs), f);
    CHECK(y.data.isZero(0.0));
    CHECK(y.frames() == static_cast<Eigen::Index>(n));
  }
  SUBCASE("4 Hz passes with amplitude within 5 %") {
    const auto y = row_vector(apply_filter(row_tensor(oracle::sine(4.0, fs, n), fs), f));
    const double amp = oracle::sine_amplitude(y, 4.0, fs, n / 4, 3 * n / 4);
    CHECK(amp == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("60 Hz is attenuated by at least 60 dB") {
    const auto y = row_vector(apply_filter(row_tensor(oracle::sine(60.0, fs, n), fs), f));
    const double amp = oracle::sine_amplitude(y, 60.0, fs, n / 4, 3 * n / 4);
    CHECK(20.0 * std::log10(amp) <= -60.0);
  }
  SUBCASE("sampling-rate mismatch is rejected") {
    CHECK_THROWS_AS(apply_filter(row_tensor(std::vector<double>(100, 1.0), 256.0), f), Error);
  }
  SUBCASE("linearity") {
    const double fs2 = 256.0;
    const auto g = design_bandpass(BandpassSpec{}, fs2);
    const auto x = oracle::gaussian_noise(4096, 1);
    const auto z = oracle::gaussian_noise(4096, 2);
    std::vector<double> mix(x.size());
    for (size_t i = 0; i < x.size(); ++i) mix[i] = 2.5 * x[i] - 0.75 * z[i];
    const auto fx = row_vector(apply_filter(row_tensor(x, fs2), g));
    const auto fz = row_vector(apply_filter(row_tensor(z, fs2), g));
    const auto fm = row_vector(apply_filter(row_tensor(mix, fs2), g));
    double err = 0.0, scale = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      err = std::max(err, std::abs(fm[i] - (2.5 * fx[i] - 0.75 * fz[i])));
      scale = std::max(scale, std::abs(fm[i]));
    }
    CHECK(err <= 1e-9 * scale);
  }
}

TEST_CASE("rational rate approximation") {
  const auto r = rational_ratio(64.0, 8000.0);
  CHECK(r.up == 1);
  CHECK(r.down == 125);
  const auto q = rational_ratio(64.0, 44100.0);
  CHECK(q.down <= 1000);
  CHECK(static_cast<double>(q.up) / q.down == doctest::Approx(64.0 / 44100.0).epsilon(1e-4));
}

TEST_CASE("resampling") {
  const double fs = 8000.0;
  const size_t n = 20 * 8000;

  SUBCASE("output length") {
    const auto y = resample(row_tensor(std::vector<double>(12345, 0.0), fs), 64.0);
    CHECK(y.frames() == std::lround(12345 * 64.0 / 8000.0));
    CHECK(y.fs == 64.0);
  }
  SUBCASE("10 Hz survives: DFT peak and amplitude") {
    const auto y = row_vector(resample(row_tensor(oracle::sine(10.0, fs, n), fs), 64.0));
    CHECK(oracle::dft_peak_hz(y, 64.0) == doctest::Approx(10.0).epsilon(1e-9));
    const double amp = oracle::sine_amplitude(y, 10.0, 64.0, y.size() / 4, 3 * y.size() / 4);
    CHECK(amp == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("40 Hz above the new Nyquist is suppressed") {
    const auto x = oracle::sine(40.0, fs, n);
    const auto y = row_vector(resample(row_tensor(x, fs), 64.0));
    const double ratio = oracle::rms(y, y.size() / 8, 7 * y.size() / 8) /
                         oracle::rms(x, 0, x.size());
    MESSAGE("40 Hz residual " << 20 * std::log10(ratio) << " dB");
    CHECK(ratio < 0.05);
  }
  SUBCASE("same rate is the identity") {
    const auto x = oracle::gaussian_noise(1000, 3);
    const auto y = row_vector(resample(row_tensor(x, 256.0), 256.0));
    for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) <= 1e-6);
  }
  SUBCASE("down and back up never amplifies energy beyond 1 %") {
    // Band-limited test signals: sums of tones below the intermediate Nyquist.
    for (unsigned seed = 0; seed < 5; ++seed) {
      std::mt19937 rng(seed);
      std::uniform_real_distribution<double> fdist(0.5, 28.0), adist(0.1, 1.0);
      std::vector<double> x(256 * 30, 0.0);
      for (int k = 0; k < 4; ++k) {
        const auto s = oracle::sine(fdist(rng), 256.0, x.size(), adist(rng));
        for (size_t i = 0; i < x.size(); ++i) x[i] += s[i];
      }
      const auto down = resample(row_tensor(x, 256.0), 64.0);
      const auto back = row_vector(resample(down, 256.0));
      REQUIRE(back.size() == x.size());
      double ex = 0, eb = 0;
      for (size_t i = 0; i < x.size(); ++i) {
        ex += x[i] * x[i];
        eb += back[i] * back[i];
      }
      CHECK(eb <= 1.01 * ex);
    }
  }
}

TEST_CASE("recording normalization") {
  SUBCASE("three samples") {
    Matrix m(1, 3);
    m << 1, 2, 3;
    const auto y = normalize_recording(TimeSeriesTensor(m, 64.0));
    CHECK(std::abs(y.data.row(0).mean()) < 1e-12);
    CHECK(y.data.row(0).squaredNorm() / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("idempotent") {
    std::srand(3);
    const auto y = normalize_recording(TimeSeriesTensor(Matrix::Random(4, 500), 64.0));
    const auto yy = normalize_recording(y);
    CHECK((yy.data - y.data).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("random 64 x 10000 moments") {
    std::srand(11);
    Matrix m = Matrix::Random(64, 10000) * 40.0;
    m.array().colwise() += Eigen::ArrayXd::LinSpaced(64, -100.0, 100.0);
    const auto y = normalize_recording(TimeSeriesTensor(m, 64.0));
    for (Eigen::Index c = 0; c < 64; ++c) {
      double mean = 0.0;
      for (Eigen::Index t = 0; t < y.frames(); ++t) mean += y.data(c, t);
      mean /= static_cast<double>(y.frames());
      double var = 0.0;
      for (Eigen::Index t = 0; t < y.frames(); ++t) var += (y.data(c, t) - mean) * (y.data(c, t) - mean);
      var /= static_cast<double>(y.frames());
      CHECK(std::abs(mean) < 1e-10);
      CHECK(std::abs(var - 1.0) < 1e-8);
    }
  }
  SUBCASE("constant channel is degenerate") {
    try {
      normalize_recording(TimeSeriesTensor(Matrix::Constant(2, 50, 4.0), 64.0));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Degenerate);
    }
  }
}

TEST_CASE("full chain is deterministic") {
  std::srand(5);
  const TimeSeriesTensor x(Matrix::Random(8, 256 * 20), 256.0);
  PreprocessConfig cfg;
  const auto a = preprocess_eeg(x, cfg);
  const auto b = preprocess_eeg(x, cfg);
  CHECK(a.fs == 64.0);
  CHECK(a.frames() == 64 * 20);
  CHECK(a.data == b.data);
}
