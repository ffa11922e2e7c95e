#include "eegmatch/stats.hpp"

#include "eegmatch/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace eegmatch {

namespace fs = std::filesystem;

namespace {

struct Ranked {
  std::vector<double> diffs;  // nonzero differences
  std::vector<double> ranks;  // average ranks of |diffs|
  double tie_term = 0.0;      // sum of t^3 - t over tie groups
};

Ranked rank_differences(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorKind::ShapeMismatch, "paired samples differ in length");
  Ranked r;
  for (size_t i = 0; i < a.size(); ++i) {
    require(std::isfinite(a[i]) && std::isfinite(b[i]), ErrorKind::InvalidInput,
            "paired samples must be finite");
    if (a[i] != b[i]) r.diffs.push_back(a[i] - b[i]);
  }
  require(!r.diffs.empty(), ErrorKind::Degenerate, "all paired differences are zero");
  const size_t n = r.diffs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return std::abs(r.diffs[x]) < std::abs(r.diffs[y]); });
  r.ranks.assign(n, 0.0);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && std::abs(r.diffs[order[j + 1]]) == std::abs(r.diffs[order[i]])) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) r.ranks[order[k]] = avg;
    const double t = static_cast<double>(j - i + 1);
    r.tie_term += t * t * t - t;
    i = j + 1;
  }
  return r;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() >= 5, ErrorKind::InvalidInput, "paired comparison needs at least 5 subjects");
  const auto r = rank_differences(a, b);
  WilcoxonResult out;
  out.n_effective = r.diffs.size();
  for (size_t i = 0; i < r.diffs.size(); ++i)
    (r.diffs[i] > 0 ? out.w_plus : out.w_minus) += r.ranks[i];
  const double n = static_cast<double>(out.n_effective);
  const double mu = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - r.tie_term / 48.0;
  const double dev = out.w_plus - mu;
  const double corrected = dev == 0.0 ? 0.0 : dev - std::copysign(std::min(0.5, std::abs(dev)), dev);
  out.z = var > 0.0 ? corrected / std::sqrt(var) : 0.0;
  out.p = std::erfc(std::abs(out.z) / std::numbers::sqrt2);
  return out;
}

double wilcoxon_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
  const auto r = rank_differences(a, b);
  const size_t n = r.diffs.size();
  require(n <= 24, ErrorKind::InvalidInput, "exact enumeration is limited to 24 differences");
  double observed = 0.0, total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    total += r.ranks[i];
    if (r.diffs[i] > 0) observed += r.ranks[i];
  }
  const double mu = total / 2.0;
  const double target = std::abs(observed - mu) - 1e-9;
  std::uint64_t extreme = 0;
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    double w = 0.0;
    for (size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) w += r.ranks[i];
    if (std::abs(w - mu) >= target) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::InvalidInput, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Summary summarize(const std::string& condition, const std::vector<double>& values,
                  size_t grid_points) {
  require(values.size() >= 2, ErrorKind::InvalidInput,
          "summary of '" + condition + "' needs at least 2 subjects");
  require(grid_points >= 2, ErrorKind::InvalidInput, "KDE grid needs at least 2 points");
  Summary s;
  s.condition = condition;
  s.n = values.size();
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);

  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  s.bandwidth = sd > 0.0 ? sd * std::pow(n, -0.2) : 1e-3;

  const double lo = s.min - 5.0 * s.bandwidth, hi = s.max + 5.0 * s.bandwidth;
  s.grid.resize(grid_points);
  s.density.resize(grid_points);
  const double norm = 1.0 / (n * s.bandwidth * std::sqrt(2.0 * std::numbers::pi));
  for (size_t g = 0; g < grid_points; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
    double d = 0.0;
    for (double v : values) {
      const double u = (x - v) / s.bandwidth;
      d += std::exp(-0.5 * u * u);
    }
    s.grid[g] = x;
    s.density[g] = d * norm;
  }
  return s;
}

// ---------------------------------------------------------------------------

void write_condition_csv(const fs::path& path, const ConditionData& data) {
  require(data.subjects.size() == data.accuracy.size(), ErrorKind::ShapeMismatch,
          "subject and accuracy lists differ in length");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "subject,accuracy\n";
  for (size_t i = 0; i < data.subjects.size(); ++i)
    out << data.subjects[i] << ',' << data.accuracy[i] << '\n';
}

ConditionData read_condition_csv(const fs::path& path, const std::string& condition) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format, path.string() + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) header.push_back(c);
  }
  long c_subject = -1, c_acc = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "subject" || header[i] == "subject_id") c_subject = static_cast<long>(i);
    if (header[i] == "accuracy") c_acc = static_cast<long>(i);
  }
  require(c_subject >= 0 && c_acc >= 0, ErrorKind::Format,
          path.string() + " needs subject and accuracy columns");
  ConditionData d;
  d.condition = condition;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    require(f.size() == header.size(), ErrorKind::Format,
            path.string() + " line " + std::to_string(line_no) + ": wrong field count");
    d.subjects.push_back(f[c_subject]);
    try {
      d.accuracy.push_back(std::stod(f[c_acc]));
    } catch (const std::exception&) {
      fail(ErrorKind::Format, path.string() + " line " + std::to_string(line_no) + ": bad accuracy");
    }
  }
  return d;
}

std::string violin_svg(const std::vector<Summary>& summaries) {
  require(!summaries.empty(), ErrorKind::InvalidInput, "no conditions to plot");
  const double width = 120.0 * static_cast<double>(summaries.size()) + 80.0, height = 360.0;
  const double top = 20.0, bottom = 300.0, left = 60.0;
  double lo = 1.0, hi = 0.0;
  for (const auto& s : summaries) {
    lo = std::min(lo, s.min);
    hi = std::max(hi, s.max);
  }
  lo = std::floor(lo * 10.0) / 10.0;
  hi = std::ceil(hi * 10.0) / 10.0;
  if (hi <= lo) hi = lo + 0.1;
  auto y_of = [&](double acc) { return bottom - (acc - lo) / (hi - lo) * (bottom - top); };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double acc = lo + (hi - lo) * k / 4.0;
    svg << "<text x=\"" << left - 8 << "\" y=\"" << y_of(acc) + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << std::lround(acc * 100.0) << "%</text>\n";
  }
  for (size_t c = 0; c < summaries.size(); ++c) {
    const auto& s = summaries[c];
    const double cx = left + 60.0 + 120.0 * static_cast<double>(c);
    double peak = 0.0;
    for (size_t g = 0; g < s.grid.size(); ++g)
      if (s.grid[g] >= s.min && s.grid[g] <= s.max) peak = std::max(peak, s.density[g]);
    if (peak <= 0.0) peak = 1.0;
    // Density samples clipped to the data range, with exact end points.
    std::vector<std::pair<double, double>> pts;
    auto dens_at = [&](double x) {
      double d = 0.0;
      const auto it = std::lower_bound(s.grid.begin(), s.grid.end(), x);
      const size_t g = static_cast<size_t>(std::clamp<long>(it - s.grid.begin(), 1, s.grid.size() - 1));
      const double t = (x - s.grid[g - 1]) / (s.grid[g] - s.grid[g - 1]);
      d = s.density[g - 1] + std::clamp(t, 0.0, 1.0) * (s.density[g] - s.density[g - 1]);
      return d;
    };
    pts.push_back({s.min, dens_at(s.min)});
    for (size_t g = 0; g < s.grid.size(); ++g)
      if (s.grid[g] > s.min && s.grid[g] < s.max) pts.push_back({s.grid[g], s.density[g]});
    pts.push_back({s.max, dens_at(s.max)});
    svg << "<polygon fill=\"#9ecae1\" stroke=\"#3182bd\" data-min=\"" << s.min << "\" data-max=\""
        << s.max << "\" points=\"";
    for (const auto& [x, d] : pts) svg << cx + 45.0 * d / peak << ',' << y_of(x) << ' ';
    for (auto it = pts.rbegin(); it != pts.rend(); ++it)
      svg << cx - 45.0 * it->second / peak << ',' << y_of(it->first) << ' ';
    svg << "\"/>\n";
    svg << "<line x1=\"" << cx << "\" y1=\"" << y_of(s.q1) << "\" x2=\"" << cx << "\" y2=\""
        << y_of(s.q3) << "\" stroke=\"black\" stroke-width=\"4\"/>\n";
    svg << "<circle cx=\"" << cx << "\" cy=\"" << y_of(s.median) << "\" r=\"3\" fill=\"white\"/>\n";
    svg << "<text x=\"" << cx << "\" y=\"" << bottom + 20
        << "\" font-size=\"12\" text-anchor=\"middle\">";
    for (char ch : s.condition) {
      switch (ch) {
        case '&': svg << "&amp;"; break;
        case '<': svg << "&lt;"; break;
        case '>': svg << "&gt;"; break;
        default: svg << ch;
      }
    }
    svg << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_figure_data(const fs::path& dir, const std::vector<ConditionData>& conditions) {
  fs::create_directories(dir);
  std::vector<Summary> summaries;
  for (const auto& c : conditions) {
    write_condition_csv(dir / (c.condition + ".csv"), c);
    summaries.push_back(summarize(c.condition, c.accuracy));
  }
  std::ofstream out(dir / "violin.svg");
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + (dir / "violin.svg").string());
  out << violin_svg(summaries);
}

void align_by_subject(const ConditionData& a, const ConditionData& b, std::vector<double>& out_a,
                      std::vector<double>& out_b) {
  std::map<std::string, double> mb;
  for (size_t i = 0; i < b.subjects.size(); ++i) mb[b.subjects[i]] = b.accuracy[i];
  std::set<std::string> seen;
  out_a.clear();
  out_b.clear();
  for (size_t i = 0; i < a.subjects.size(); ++i) {
    const auto it = mb.find(a.subjects[i]);
    require(it != mb.end(), ErrorKind::InvalidInput,
            "subject '" + a.subjects[i] + "' is missing from condition '" + b.condition + "'");
    require(seen.insert(a.subjects[i]).second, ErrorKind::InvalidInput,
            "subject '" + a.subjects[i] + "' appears twice in condition '" + a.condition + "'");
    out_a.push_back(a.accuracy[i]);
    out_b.push_back(it->second);
  }
  require(seen.size() == mb.size(), ErrorKind::InvalidInput,
          "condition '" + b.condition + "' has subjects missing from '" + a.condition + "'");
}

}  // namespace eegmatch
