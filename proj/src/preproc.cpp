#include "eegmatch/preproc.hpp"

#include "eegmatch/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <numbers>
#include <numeric>

namespace eegmatch {

using cplx = std::complex<double>;

namespace {

struct Zpk {
  std::vector<cplx> zeros;
  std::vector<cplx> poles;
  double gain = 1.0;
};

double prewarp(double f_hz, double fs) {
  return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs);
}

double ripple_ratio(double stop_db, double pass_db) {
  return std::sqrt((std::pow(10.0, stop_db / 10.0) - 1.0) /
                   (std::pow(10.0, pass_db / 10.0) - 1.0));
}

// Analog lowpass prototype with the stopband edge at 1 rad/s and the given
// stopband attenuation.
Zpk cheby2_prototype(int n, double stop_db) {
  const double pi = std::numbers::pi;
  const double de = 1.0 / std::sqrt(std::pow(10.0, 0.1 * stop_db) - 1.0);
  const double mu = std::asinh(1.0 / de) / n;
  Zpk out;
  for (int m = -n + 1; m <= n - 1; m += 2) {
    if (m != 0) out.zeros.emplace_back(0.0, 1.0 / std::sin(m * pi / (2.0 * n)));
    const cplx base = -std::exp(cplx(0.0, pi * m / (2.0 * n)));
    const cplx p(std::sinh(mu) * base.real(), std::cosh(mu) * base.imag());
    out.poles.push_back(1.0 / p);
  }
  cplx num(1.0), den(1.0);
  for (auto p : out.poles) num *= -p;
  for (auto z : out.zeros) den *= -z;
  out.gain = (num / den).real();
  return out;
}

Zpk lowpass_to_bandpass(const Zpk& in, double w0, double bw) {
  Zpk out;
  const auto map = [&](cplx s, std::vector<cplx>& dst) {
    const cplx half = s * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0 * w0);
    dst.push_back(half + root);
    dst.push_back(half - root);
  };
  for (auto z : in.zeros) map(z, out.zeros);
  for (auto p : in.poles) map(p, out.poles);
  const auto degree = in.poles.size() - in.zeros.size();
  for (size_t i = 0; i < degree; ++i) out.zeros.emplace_back(0.0, 0.0);
  out.gain = in.gain * std::pow(bw, static_cast<double>(degree));
  return out;
}

Zpk lowpass_to_highpass(const Zpk& in, double wc) {
  Zpk out;
  cplx num(1.0), den(1.0);
  for (auto z : in.zeros) {
    out.zeros.push_back(wc / z);
    num *= -z;
  }
  for (auto p : in.poles) {
    out.poles.push_back(wc / p);
    den *= -p;
  }
  const auto degree = in.poles.size() - in.zeros.size();
  for (size_t i = 0; i < degree; ++i) out.zeros.emplace_back(0.0, 0.0);
  out.gain = in.gain * (num / den).real();
  return out;
}

Zpk bilinear(const Zpk& in, double fs) {
  const double fs2 = 2.0 * fs;
  Zpk out;
  cplx num(1.0), den(1.0);
  for (auto z : in.zeros) {
    out.zeros.push_back((fs2 + z) / (fs2 - z));
    num *= fs2 - z;
  }
  for (auto p : in.poles) {
    out.poles.push_back((fs2 + p) / (fs2 - p));
    den *= fs2 - p;
  }
  while (out.zeros.size() < out.poles.size()) out.zeros.emplace_back(-1.0, 0.0);
  out.gain = in.gain * (num / den).real();
  return out;
}

// Splits roots into conjugate pairs and real pairs; a leftover real root
// forms a single-element group.
std::vector<std::vector<cplx>> group_roots(const std::vector<cplx>& roots) {
  constexpr double tol = 1e-10;
  std::vector<cplx> upper;
  std::vector<double> reals;
  for (auto r : roots) {
    if (std::abs(r.imag()) <= tol * std::max(1.0, std::abs(r)))
      reals.push_back(r.real());
    else if (r.imag() > 0)
      upper.push_back(r);
  }
  std::vector<std::vector<cplx>> groups;
  for (auto r : upper) groups.push_back({r, std::conj(r)});
  std::sort(reals.begin(), reals.end());
  for (size_t i = 0; i + 1 < reals.size(); i += 2)
    groups.push_back({cplx(reals[i]), cplx(reals[i + 1])});
  if (reals.size() % 2 == 1) groups.push_back({cplx(reals.back())});
  return groups;
}

Biquad section_from_roots(const std::vector<cplx>& zeros,
                          const std::vector<cplx>& poles) {
  const auto poly = [](const std::vector<cplx>& r) {
    // (1 - r0 z^-1)(1 - r1 z^-1)
    std::array<double, 3> c{1.0, 0.0, 0.0};
    if (r.size() == 1) {
      c[1] = -r[0].real();
    } else if (r.size() == 2) {
      c[1] = -(r[0] + r[1]).real();
      c[2] = (r[0] * r[1]).real();
    }
    return c;
  };
  const auto b = poly(zeros);
  const auto a = poly(poles);
  return Biquad{b[0], b[1], b[2], a[1], a[2]};
}

cplx biquad_response(const Biquad& s, cplx zinv) {
  return (s.b0 + zinv * (s.b1 + zinv * s.b2)) / (1.0 + zinv * (s.a1 + zinv * s.a2));
}

cplx zpk_response(const Zpk& f, cplx z) {
  cplx h(f.gain);
  for (auto q : f.zeros) h *= z - q;
  for (auto p : f.poles) h /= z - p;
  return h;
}

// Pairs each pole group with the nearest zero group of the same size, poles
// closest to the unit circle first, and scales every section to unit gain at
// f_ref so intermediate signals stay near the input level.
std::vector<Biquad> to_sections(const Zpk& f, double fs, double f_ref) {
  auto pole_groups = group_roots(f.poles);
  auto zero_groups = group_roots(f.zeros);
  require(pole_groups.size() == zero_groups.size(), ErrorKind::Numerical,
          "pole/zero grouping mismatch in filter design");
  std::sort(pole_groups.begin(), pole_groups.end(),
            [](const auto& a, const auto& b) { return std::abs(a[0]) > std::abs(b[0]); });

  const cplx zref = std::exp(cplx(0.0, 2.0 * std::numbers::pi * f_ref / fs));
  std::vector<Biquad> sections;
  std::vector<bool> used(zero_groups.size(), false);
  for (const auto& pg : pole_groups) {
    size_t best = zero_groups.size();
    double best_d = 0.0;
    for (size_t j = 0; j < zero_groups.size(); ++j) {
      if (used[j] || zero_groups[j].size() != pg.size()) continue;
      const double d = std::abs(zero_groups[j][0] - pg[0]);
      if (best == zero_groups.size() || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    require(best < zero_groups.size(), ErrorKind::Numerical,
            "no zero group available for pole pairing");
    used[best] = true;
    Biquad s = section_from_roots(zero_groups[best], pg);
    const double g = std::abs(biquad_response(s, 1.0 / zref));
    if (g > 0.0) {
      s.b0 /= g;
      s.b1 /= g;
      s.b2 /= g;
    }
    sections.push_back(s);
  }

  cplx cascade(1.0);
  for (const auto& s : sections) cascade *= biquad_response(s, 1.0 / zref);
  const double correction = (zpk_response(f, zref) / cascade).real();
  sections.front().b0 *= correction;
  sections.front().b1 *= correction;
  sections.front().b2 *= correction;
  return sections;
}

}  // namespace

cplx FilterCoefficients::response(double f_hz) const {
  const cplx zinv = std::exp(cplx(0.0, -2.0 * std::numbers::pi * f_hz / fs));
  cplx h(1.0);
  for (const auto& s : sections) h *= biquad_response(s, zinv);
  return h;
}

double FilterCoefficients::magnitude_db(double f_hz) const {
  return 20.0 * std::log10(std::abs(response(f_hz)));
}

FilterCoefficients design_bandpass(const BandpassSpec& spec, double fs) {
  require(fs > 0.0, ErrorKind::InvalidSpec, "sampling rate must be positive");
  require(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz, ErrorKind::InvalidSpec,
          "bandpass edges must satisfy 0 < low < high");
  require(spec.high_hz < fs / 2.0, ErrorKind::InvalidSpec,
          "bandpass upper edge must lie below fs/2");
  require(spec.high_stop_hz() < fs / 2.0, ErrorKind::InvalidSpec,
          "upper stopband edge (1.25 * high) must lie below fs/2");
  require(spec.stop_atten_db > 0.0 && spec.pass_ripple_db > 0.0,
          ErrorKind::InvalidSpec, "attenuation and ripple must be positive");
  require(spec.order >= 0, ErrorKind::InvalidSpec, "order must be >= 0");

  const double wp1 = prewarp(spec.low_hz, fs);
  const double wp2 = prewarp(spec.high_hz, fs);
  const double ws1 = prewarp(spec.low_stop_hz(), fs);
  const double ws2 = prewarp(spec.high_stop_hz(), fs);
  const double w0 = std::sqrt(wp1 * wp2);
  const double bw_pass = wp2 - wp1;
  // Largest prototype bandwidth that still maps both stop edges to |W| >= 1.
  const double b_stop = std::min(std::abs(ws1 * ws1 - w0 * w0) / ws1,
                                 std::abs(ws2 * ws2 - w0 * w0) / ws2);
  const double ratio = ripple_ratio(spec.stop_atten_db, spec.pass_ripple_db);

  int n = spec.order;
  if (n == 0) {
    const double omega_p = bw_pass / b_stop;
    require(omega_p < 1.0, ErrorKind::InvalidSpec,
            "stopband edges leave no transition band");
    n = static_cast<int>(std::ceil(std::acosh(ratio) / std::acosh(1.0 / omega_p) - 1e-12));
  }
  // Split whatever slack the integer order leaves between the passband and
  // the stopband.
  const double b_pass = bw_pass * std::cosh(std::acosh(ratio) / n);
  const double bw = b_pass <= b_stop ? std::sqrt(b_pass * b_stop) : b_stop;

  const Zpk digital =
      bilinear(lowpass_to_bandpass(cheby2_prototype(n, spec.stop_atten_db), w0, bw), fs);
  FilterCoefficients out;
  out.fs = fs;
  out.prototype_order = n;
  out.low_edge_hz = spec.low_hz;
  out.sections = to_sections(digital, fs, std::sqrt(spec.low_hz * spec.high_hz));
  return out;
}

FilterCoefficients design_highpass(double pass_hz, double stop_hz, double stop_atten_db,
                                   double pass_ripple_db, double fs) {
  require(fs > 0.0, ErrorKind::InvalidSpec, "sampling rate must be positive");
  require(stop_hz > 0.0 && stop_hz < pass_hz && pass_hz < fs / 2.0, ErrorKind::InvalidSpec,
          "highpass edges must satisfy 0 < stop < pass < fs/2");
  require(stop_atten_db > 0.0 && pass_ripple_db > 0.0, ErrorKind::InvalidSpec,
          "attenuation and ripple must be positive");
  const double wp = prewarp(pass_hz, fs);
  const double ws = prewarp(stop_hz, fs);
  const double ratio = ripple_ratio(stop_atten_db, pass_ripple_db);
  const int n = static_cast<int>(std::ceil(std::acosh(ratio) / std::acosh(wp / ws) - 1e-12));
  const double wc_pass = wp / std::cosh(std::acosh(ratio) / n);
  const double wc = wc_pass >= ws ? std::sqrt(ws * wc_pass) : ws;

  const Zpk digital = bilinear(lowpass_to_highpass(cheby2_prototype(n, stop_atten_db), wc), fs);
  FilterCoefficients out;
  out.fs = fs;
  out.prototype_order = n;
  out.low_edge_hz = pass_hz;
  out.sections = to_sections(digital, fs, std::min(fs / 4.0, 8.0 * pass_hz));
  return out;
}

std::vector<double> sos_filter(const std::vector<Biquad>& sections, std::vector<double> x) {
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (auto& v : x) {
      const double y = s.b0 * v + z1;
      z1 = s.b1 * v - s.a1 * y + z2;
      z2 = s.b2 * v - s.a2 * y;
      v = y;
    }
  }
  return x;
}

namespace {

// Steady-state section states for a unit step at the cascade input.
std::vector<std::array<double, 2>> step_states(const std::vector<Biquad>& sections) {
  std::vector<std::array<double, 2>> zi;
  double scale = 1.0;
  for (const auto& s : sections) {
    const double den = 1.0 + s.a1 + s.a2;
    const double g = den != 0.0 ? (s.b0 + s.b1 + s.b2) / den : 0.0;
    const double z2 = (s.b2 - s.a2 * g) * scale;
    const double z1 = (s.b1 - s.a1 * g) * scale + z2;
    zi.push_back({z1, z2});
    scale *= g;
  }
  return zi;
}

void filter_in_place(const std::vector<Biquad>& sections,
                     const std::vector<std::array<double, 2>>& zi, double x0,
                     std::vector<double>& x) {
  for (size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    double z1 = zi[k][0] * x0, z2 = zi[k][1] * x0;
    for (auto& v : x) {
      const double y = s.b0 * v + z1;
      z1 = s.b1 * v - s.a1 * y + z2;
      z2 = s.b2 * v - s.a2 * y;
      v = y;
    }
  }
}

}  // namespace

TimeSeriesTensor apply_filter(const TimeSeriesTensor& x, const FilterCoefficients& coeffs) {
  x.validate();
  require(std::abs(x.fs - coeffs.fs) <= 1e-9 * x.fs, ErrorKind::InvalidInput,
          "filter was designed for fs=" + std::to_string(coeffs.fs) +
              " but signal has fs=" + std::to_string(x.fs));
  const auto T = static_cast<long>(x.frames());
  const long wanted = static_cast<long>(std::ceil(3.0 * coeffs.fs / coeffs.low_edge_hz));
  const long pad = std::min(T - 1, wanted);
  const auto zi = step_states(coeffs.sections);

  TimeSeriesTensor out = x;
  std::vector<double> buf(static_cast<size_t>(T + 2 * pad));
  for (Eigen::Index c = 0; c < x.channels(); ++c) {
    const auto row = x.data.row(c);
    for (long i = 0; i < pad; ++i) buf[i] = 2.0 * row(0) - row(pad - i);
    for (long i = 0; i < T; ++i) buf[pad + i] = row(i);
    for (long i = 0; i < pad; ++i) buf[pad + T + i] = 2.0 * row(T - 1) - row(T - 2 - i);

    filter_in_place(coeffs.sections, zi, buf.front(), buf);
    std::reverse(buf.begin(), buf.end());
    filter_in_place(coeffs.sections, zi, buf.front(), buf);
    std::reverse(buf.begin(), buf.end());
    for (long i = 0; i < T; ++i) out.data(c, i) = buf[pad + i];
  }
  return out;
}

TimeSeriesTensor band_limit(const TimeSeriesTensor& x, const BandpassSpec& spec) {
  if (spec.high_stop_hz() < x.fs / 2.0)
    return apply_filter(x, design_bandpass(spec, x.fs));
  const auto hp = design_highpass(spec.low_hz, spec.low_stop_hz(), spec.stop_atten_db,
                                  spec.pass_ripple_db, x.fs);
  return apply_filter(x, hp);
}

TimeSeriesTensor common_average_reference(const TimeSeriesTensor& x) {
  x.validate();
  require(x.channels() >= 2, ErrorKind::InvalidInput,
          "common-average reference needs at least two channels");
  TimeSeriesTensor out = x;
  const Eigen::RowVectorXd mean = x.data.colwise().mean();
  out.data.rowwise() -= mean;
  return out;
}

Ratio rational_ratio(double fs_out, double fs_in, long max_den) {
  require(fs_out > 0.0 && fs_in > 0.0, ErrorKind::InvalidInput,
          "sampling rates must be positive");
  const auto is_int = [](double v) { return std::abs(v - std::round(v)) < 1e-9; };
  if (is_int(fs_out) && is_int(fs_in)) {
    const auto a = static_cast<long>(std::llround(fs_out));
    const auto b = static_cast<long>(std::llround(fs_in));
    const long g = std::gcd(a, b);
    if (b / g <= max_den) return {a / g, b / g};
  }
  // Continued-fraction convergents.
  const double target = fs_out / fs_in;
  long h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double v = target;
  Ratio best{std::max(1L, std::lround(target)), 1};
  for (int iter = 0; iter < 64; ++iter) {
    const double a = std::floor(v);
    const long h2 = static_cast<long>(a) * h1 + h0;
    const long k2 = static_cast<long>(a) * k1 + k0;
    if (k2 > max_den) break;
    best = {h2, k2};
    if (std::abs(static_cast<double>(h2) / k2 - target) < 1e-12 * target) break;
    h0 = h1;
    h1 = h2;
    k0 = k1;
    k1 = k2;
    const double frac = v - a;
    if (frac < 1e-15) break;
    v = 1.0 / frac;
  }
  require(best.up > 0, ErrorKind::InvalidInput, "rate ratio too small to approximate");
  return best;
}

namespace {

std::vector<double> kaiser_lowpass(long half, double cutoff, double atten_db) {
  const double beta = atten_db > 50.0   ? 0.1102 * (atten_db - 8.7)
                      : atten_db >= 21.0 ? 0.5842 * std::pow(atten_db - 21.0, 0.4) +
                                               0.07886 * (atten_db - 21.0)
                                         : 0.0;
  const double i0b = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(static_cast<size_t>(2 * half + 1));
  for (long k = -half; k <= half; ++k) {
    const double t = 2.0 * cutoff * static_cast<double>(k);
    const double sinc = k == 0 ? 1.0 : std::sin(std::numbers::pi * t) / (std::numbers::pi * t);
    const double r = static_cast<double>(k) / static_cast<double>(half);
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[static_cast<size_t>(k + half)] = 2.0 * cutoff * sinc * w;
  }
  return h;
}

}  // namespace

TimeSeriesTensor resample(const TimeSeriesTensor& x, double fs_out,
                          const ResampleOptions& opts) {
  x.validate();
  require(fs_out > 0.0, ErrorKind::InvalidInput, "target rate must be positive");
  const Ratio r = rational_ratio(fs_out, x.fs);
  if (r.up == r.down) return x;

  const long T = static_cast<long>(x.frames());
  const long t_out = std::lround(static_cast<double>(T) * r.up / r.down);
  require(t_out >= 1, ErrorKind::InvalidInput, "resampled signal would be empty");
  const long L = std::max(r.up, r.down);
  const long half = opts.half_length_factor * L;
  auto h = kaiser_lowpass(half, 0.5 / static_cast<double>(L), opts.stop_atten_db);
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (auto& v : h) v *= static_cast<double>(r.up) / sum;

  TimeSeriesTensor out(Matrix::Zero(x.channels(), t_out),
                       x.fs * static_cast<double>(r.up) / static_cast<double>(r.down),
                       x.labels);
  const long n_taps = 2 * half + 1;
  const long up_len = T * r.up;
  for (long m = 0; m < t_out; ++m) {
    const long n0 = m * r.down + half;
    // Taps k with (n0 - k) a multiple of up land on original samples.
    long k = n0 % r.up;
    const long n_hi = n0 - (up_len - 1);
    if (k < n_hi) k += ((n_hi - k + r.up - 1) / r.up) * r.up;
    auto col = out.data.col(m);
    for (; k < n_taps && k <= n0; k += r.up) {
      col.noalias() += h[static_cast<size_t>(k)] * x.data.col((n0 - k) / r.up);
    }
  }
  return out;
}

TimeSeriesTensor normalize_recording(const TimeSeriesTensor& x) {
  x.validate();
  TimeSeriesTensor out = x;
  const double n = static_cast<double>(x.frames());
  for (Eigen::Index c = 0; c < x.channels(); ++c) {
    auto row = out.data.row(c);
    const double mean = row.sum() / n;
    row.array() -= mean;
    const double var = row.squaredNorm() / n;
    if (!(var > 1e-24 * std::max(1.0, mean * mean))) {
      fail(ErrorKind::Degenerate, "channel " + std::to_string(c) +
                                      " has zero variance; cannot normalize");
    }
    row /= std::sqrt(var);
    // Second centering pass removes the rounding residue of the first.
    row.array() -= row.sum() / n;
  }
  return out;
}

PreprocessConfig parse_preprocess_config(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "malformed preprocessing config " + origin + ": " + e.what());
  }
  PreprocessConfig cfg;
  try {
    if (j.contains("bandpass")) {
      const auto& b = j["bandpass"];
      cfg.bandpass.low_hz = b.value("low_hz", cfg.bandpass.low_hz);
      cfg.bandpass.high_hz = b.value("high_hz", cfg.bandpass.high_hz);
      cfg.bandpass.stop_atten_db = b.value("stop_atten_db", cfg.bandpass.stop_atten_db);
      cfg.bandpass.pass_ripple_db = b.value("pass_ripple_db", cfg.bandpass.pass_ripple_db);
      cfg.bandpass.order = b.value("order", cfg.bandpass.order);
    }
    cfg.target_fs = j.value("target_fs", cfg.target_fs);
    cfg.reference = j.value("reference", cfg.reference);
    cfg.normalize = j.value("normalize", cfg.normalize);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "preprocessing config " + origin + ": " + e.what());
  }
  return cfg;
}

PreprocessConfig load_preprocess_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::NotFound, "cannot open preprocessing config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_preprocess_config(ss.str(), path.string());
}

TimeSeriesTensor preprocess_eeg(const TimeSeriesTensor& x, const PreprocessConfig& cfg) {
  TimeSeriesTensor y = cfg.reference && x.channels() >= 2 ? common_average_reference(x) : x;
  y = band_limit(y, cfg.bandpass);
  y = resample(y, cfg.target_fs);
  if (cfg.normalize) y = normalize_recording(y);
  return y;
}

}  // namespace eegmatch
