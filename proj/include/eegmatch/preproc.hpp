#pragma once

#include "eegmatch/tensor.hpp"

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

namespace eegmatch {

struct BandpassSpec {
  double low_hz = 0.5;
  double high_hz = 32.0;
  double stop_atten_db = 80.0;
  double pass_ripple_db = 1.0;
  // 0 selects the minimum order meeting the attenuation targets.
  int order = 0;

  // Stopband edges used by the design: 0.5 * low and 1.25 * high.
  double low_stop_hz() const { return 0.5 * low_hz; }
  double high_stop_hz() const { return 1.25 * high_hz; }
};

// One biquad, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

// Cascade of second-order sections designed for a fixed sampling rate.
struct FilterCoefficients {
  std::vector<Biquad> sections;
  double fs = 0.0;
  // Prototype (lowpass) order; the realized digital order is larger for a
  // bandpass.
  int prototype_order = 0;
  // Lowest edge of interest; sets the edge padding used by zero-phase filtering.
  double low_edge_hz = 0.0;

  std::complex<double> response(double f_hz) const;
  double magnitude_db(double f_hz) const;
};

// Chebyshev type-II bandpass with stopband edges per BandpassSpec.
FilterCoefficients design_bandpass(const BandpassSpec& spec, double fs);

// Chebyshev type-II highpass, passband edge pass_hz, stopband edge stop_hz.
FilterCoefficients design_highpass(double pass_hz, double stop_hz,
                                   double stop_atten_db, double pass_ripple_db,
                                   double fs);

// Zero-phase (forward-backward) filtering with odd edge extension and
// steady-state initial conditions. Length is preserved.
TimeSeriesTensor apply_filter(const TimeSeriesTensor& x,
                              const FilterCoefficients& coeffs);

// Single causal pass over one sequence, zero initial state.
std::vector<double> sos_filter(const std::vector<Biquad>& sections,
                               std::vector<double> x);

// Band-limiting for a stream at rate fs. When the upper edge is at or above
// the Nyquist limit the stream is already band-limited from above (its
// anti-aliasing filter did that), and only the highpass half is applied.
TimeSeriesTensor band_limit(const TimeSeriesTensor& x, const BandpassSpec& spec);

TimeSeriesTensor common_average_reference(const TimeSeriesTensor& x);

struct Ratio {
  long up;
  long down;
};

// Best rational approximation of fs_out / fs_in with denominator <= max_den.
Ratio rational_ratio(double fs_out, double fs_in, long max_den = 1000);

struct ResampleOptions {
  // One-sided filter length in units of max(up, down).
  int half_length_factor = 10;
  double stop_atten_db = 80.0;
};

// Polyphase FIR rate conversion with a Kaiser-windowed anti-aliasing lowpass
// cut at min(fs_in, fs_out) / 2. Output length is round(T * fs_out / fs_in).
TimeSeriesTensor resample(const TimeSeriesTensor& x, double fs_out,
                          const ResampleOptions& opts = {});

// Per-channel mean 0 / variance 1 over the whole recording.
TimeSeriesTensor normalize_recording(const TimeSeriesTensor& x);

struct PreprocessConfig {
  BandpassSpec bandpass;
  double target_fs = 64.0;
  bool reference = true;
  bool normalize = true;
};

// {"bandpass": {low_hz, high_hz, stop_atten_db, pass_ripple_db, order},
//  "target_fs", "reference", "normalize"}; missing keys keep defaults.
PreprocessConfig parse_preprocess_config(const std::string& text, const std::string& origin = "");
PreprocessConfig load_preprocess_config(const std::filesystem::path& path);

// reference -> band-limit -> resample -> normalize.
TimeSeriesTensor preprocess_eeg(const TimeSeriesTensor& x,
                                const PreprocessConfig& cfg);

}  // namespace eegmatch
