// Envelope, mel spectrogram and voice-activity features.

#include "eegmatch/error.hpp"
#include "eegmatch/features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace eegmatch {

namespace {

void require_mono(const TimeSeriesTensor& audio) {
  require(audio.channels() == 1, ErrorKind::InvalidInput, "audio must be mono");
  require(audio.frames() >= 1, ErrorKind::InvalidInput, "audio is empty");
  audio.validate();
}

double erb_rate(double hz) { return 21.4 * std::log10(4.37e-3 * hz + 1.0); }
double erb_rate_to_hz(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 4.37e-3; }

}  // namespace

TimeSeriesTensor envelope_subbands_raw(const TimeSeriesTensor& audio, const EnvelopeOptions& opts) {
  require_mono(audio);
  require(audio.fs >= 8000.0, ErrorKind::InvalidInput, "envelope needs audio at fs >= 8000 Hz");
  require(opts.bands >= 1 && opts.low_hz > 0.0 && opts.high_hz > opts.low_hz &&
              opts.high_hz < audio.fs / 2.0,
          ErrorKind::InvalidSpec, "invalid gammatone filterbank range");

  const auto n = audio.frames();
  const double fs = audio.fs;
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(n);
  const double e_lo = erb_rate(opts.low_hz), e_hi = erb_rate(opts.high_hz);
  const auto x = audio.data.row(0);

  for (int b = 0; b < opts.bands; ++b) {
    const double frac = opts.bands == 1 ? 0.5 : static_cast<double>(b) / (opts.bands - 1);
    const double fc = erb_rate_to_hz(e_lo + frac * (e_hi - e_lo));
    const double bw = 1.019 * 24.7 * (4.37e-3 * fc + 1.0);
    const double radius = std::exp(-2.0 * std::numbers::pi * bw / fs);
    const double ar = radius * std::cos(2.0 * std::numbers::pi * fc / fs);
    const double ai = radius * std::sin(2.0 * std::numbers::pi * fc / fs);
    const double gain = 1.0 - radius;
    // Fourth-order gammatone as four cascaded complex one-pole stages.
    double s_re[4] = {0, 0, 0, 0}, s_im[4] = {0, 0, 0, 0};
    for (Eigen::Index t = 0; t < n; ++t) {
      double in_re = x(t), in_im = 0.0;
      for (int k = 0; k < 4; ++k) {
        const double re = gain * in_re + ar * s_re[k] - ai * s_im[k];
        const double im = gain * in_im + ar * s_im[k] + ai * s_re[k];
        s_re[k] = re;
        s_im[k] = im;
        in_re = re;
        in_im = im;
      }
      acc(t) += std::pow(std::hypot(in_re, in_im), opts.exponent);
    }
  }
  acc /= static_cast<double>(opts.bands);
  return TimeSeriesTensor(Matrix(acc), fs, {"envelope"});
}

TimeSeriesTensor envelope_powerlaw(const TimeSeriesTensor& audio, const BandpassSpec& bandpass,
                                   const EnvelopeOptions& opts) {
  auto env = resample(envelope_subbands_raw(audio, opts), kFeatureRate);
  const long want = frames_for_duration(audio.duration_s());
  if (env.frames() != want) env.data.conservativeResize(1, want);
  env = band_limit(env, bandpass);
  env.labels = {"envelope"};
  return env;
}

// ---------------------------------------------------------------------------

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_edges(const MelOptions& opts) {
  const double lo = hz_to_mel(opts.low_hz), hi = hz_to_mel(opts.high_hz);
  std::vector<double> edges(static_cast<size_t>(opts.bands + 2));
  for (size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (opts.bands + 1));
  return edges;
}

TimeSeriesTensor mel_spectrogram_raw(const TimeSeriesTensor& audio, const MelOptions& opts) {
  require_mono(audio);
  require(audio.fs >= 2.0 * opts.high_hz, ErrorKind::InvalidInput,
          "mel spectrogram up to " + std::to_string(opts.high_hz) +
              " Hz needs fs >= " + std::to_string(2.0 * opts.high_hz));
  const double fs = audio.fs;
  const long n_out = frames_for_duration(audio.duration_s());
  // Frames are taken at oversample x 64 Hz and decimated with an anti-alias
  // filter; point-sampling 25 ms frames at 64 Hz aliases energy fluctuations.
  const double frame_rate = kFeatureRate * opts.oversample;
  const long n_frames = n_out * opts.oversample;
  const long win = std::max(2L, std::lround(opts.window_s * fs));
  long nfft = 1;
  while (nfft < win) nfft <<= 1;
  const long n_bins = nfft / 2 + 1;

  std::vector<double> window(static_cast<size_t>(win));
  double wsum = 0.0;
  for (long i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
    wsum += window[i] * window[i];
  }
  const double norm = std::sqrt(wsum);

  // Triangular weights on the FFT bin grid.
  const auto edges = mel_band_edges(opts);
  Matrix weights = Matrix::Zero(opts.bands, n_bins);
  for (int m = 0; m < opts.bands; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    for (long b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * fs / static_cast<double>(nfft);
      if (f > l && f < r) weights(m, b) = f <= c ? (f - l) / (c - l) : (r - f) / (r - c);
    }
  }

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<size_t>(nfft));
  std::vector<std::complex<double>> spec;
  Vector mag(n_bins);
  Matrix out(opts.bands, n_frames);
  const auto x = audio.data.row(0);
  const long total = static_cast<long>(audio.frames());
  for (long k = 0; k < n_frames; ++k) {
    const long centre = std::lround(static_cast<double>(k) * fs / frame_rate);
    const long first = centre - win / 2;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (long i = 0; i < win; ++i) {
      const long idx = first + i;
      if (idx >= 0 && idx < total) frame[static_cast<size_t>(i)] = x(idx) * window[i];
    }
    fft.fwd(spec, frame);
    for (long b = 0; b < n_bins; ++b) mag(b) = std::abs(spec[static_cast<size_t>(b)]) / norm;
    out.col(k).noalias() = weights * mag;
  }
  std::vector<std::string> labels;
  for (int m = 0; m < opts.bands; ++m) labels.push_back("mel" + std::to_string(m));
  if (opts.oversample == 1) return TimeSeriesTensor(std::move(out), kFeatureRate, std::move(labels));
  auto low = resample(TimeSeriesTensor(std::move(out), frame_rate), kFeatureRate);
  low.data.conservativeResize(opts.bands, n_out);
  low.labels = std::move(labels);
  return low;
}

TimeSeriesTensor mel_spectrogram(const TimeSeriesTensor& audio, const BandpassSpec& bandpass,
                                 const MelOptions& opts) {
  auto raw = mel_spectrogram_raw(audio, opts);
  auto labels = raw.labels;
  auto out = band_limit(raw, bandpass);
  out.labels = std::move(labels);
  return out;
}

// ---------------------------------------------------------------------------

VadFrames vad_frames(const TimeSeriesTensor& audio, const VadOptions& opts) {
  require_mono(audio);
  VadFrames out;
  out.frame_len = static_cast<size_t>(std::lround(opts.frame_s * audio.fs));
  require(out.frame_len >= 1, ErrorKind::InvalidInput, "VAD frame shorter than one sample");
  const auto total = static_cast<size_t>(audio.frames());
  const size_t n_frames = total / out.frame_len;
  require(n_frames >= 1, ErrorKind::InvalidInput, "story is shorter than one VAD frame");

  const auto x = audio.data.row(0);
  out.energy.assign(n_frames, 0.0);
  for (size_t j = 0; j < n_frames; ++j) {
    double e = 0.0;
    for (size_t i = j * out.frame_len; i < (j + 1) * out.frame_len; ++i) {
      const auto t = static_cast<Eigen::Index>(i);
      const double y = x(t) - (i > 0 ? opts.preemphasis * x(t - 1) : 0.0);
      e += y * y;
    }
    out.energy[j] = e;
  }

  std::vector<double> sorted = out.energy;
  std::sort(sorted.begin(), sorted.end());
  const double pos = opts.percentile / 100.0 * static_cast<double>(n_frames - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, n_frames - 1);
  out.threshold = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);

  out.active.resize(n_frames);
  for (size_t j = 0; j < n_frames; ++j) out.active[j] = out.energy[j] > out.threshold ? 1 : 0;
  return out;
}

TimeSeriesTensor vad(const TimeSeriesTensor& audio, const VadOptions& opts) {
  const auto frames = vad_frames(audio, opts);
  const long n_out = frames_for_duration(audio.duration_s());
  Matrix out(1, n_out);
  for (long k = 0; k < n_out; ++k) {
    const double sample = static_cast<double>(k) * audio.fs / kFeatureRate;
    auto j = static_cast<size_t>(std::floor(sample / static_cast<double>(frames.frame_len)));
    j = std::min(j, frames.active.size() - 1);
    out(0, k) = frames.active[j];
  }
  return TimeSeriesTensor(std::move(out), kFeatureRate, {"vad"});
}

}  // namespace eegmatch
