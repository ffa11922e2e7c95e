#include "doctest.h"
#include "oracles.hpp"

#include "eegmatch/error.hpp"
#include "eegmatch/stats.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

using namespace eegmatch;
namespace fs = std::filesystem;

namespace {

std::vector<double> uniform(size_t n, std::mt19937_64& rng, double lo = 0.4, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

// Tag balance, quoted attributes and a single root. Enough for generated SVG.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  size_t i = 0, roots = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const size_t close = s.find('>', i);
    if (close == std::string::npos) return false;
    std::string tag = s.substr(i + 1, close - i - 1);
    i = close + 1;
    if (tag.starts_with("?")) {
      if (!tag.ends_with("?")) return false;
      continue;
    }
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
    if (tag.starts_with("/")) {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.ends_with("/");
    const std::string name = tag.substr(0, tag.find_first_of(" /"));
    if (name.empty()) return false;
    if (stack.empty()) ++roots;
    if (!self_closing) stack.push_back(name);
  }
  // Stray '&' outside entities breaks XML.
  for (size_t k = 0; (k = s.find('&', k)) != std::string::npos; ++k) {
    const size_t semi = s.find(';', k);
    if (semi == std::string::npos || semi - k > 6) return false;
  }
  return stack.empty() && roots == 1;
}

}  // namespace

TEST_CASE("wilcoxon: degenerate and small samples") {
  const std::vector<double> a{0.6, 0.7, 0.8, 0.9, 0.5};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), Error);
  try {
    wilcoxon_signed_rank(a, a);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
  CHECK_THROWS_AS(wilcoxon_signed_rank({0.1, 0.2}, {0.2, 0.1}), Error);
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, {0.1, 0.2}), Error);
}

TEST_CASE("wilcoxon: zeros dropped, ties averaged") {
  // Differences: 0, +1, -1, +2, +2, +3 -> n_eff 5, ranks 1.5 1.5 3.5 3.5 5.
  const std::vector<double> a{1, 2, 0, 3, 4, 6};
  const std::vector<double> b{1, 1, 1, 1, 2, 3};
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.n_effective == 5);
  CHECK(r.w_plus == doctest::Approx(13.5));
  CHECK(r.w_minus == doctest::Approx(1.5));
  // mu 7.5, var 5*6*11/24 - (6 + 6)/48 = 13.5, continuity-corrected dev 5.5.
  CHECK(r.z == doctest::Approx(5.5 / std::sqrt(13.5)).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(std::erfc(5.5 / std::sqrt(13.5) / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("wilcoxon: n = 8 all positive against enumeration") {
  std::vector<double> a, b;
  for (int i = 1; i <= 8; ++i) {
    a.push_back(0.5 + 0.03 * i);
    b.push_back(0.5);
  }
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.w_plus == 36.0);
  CHECK(r.w_minus == 0.0);
  const double exact = oracle::signed_rank_exact_p(a, b);
  CHECK(exact == doctest::Approx(2.0 / 256.0));
  CHECK(std::abs(r.p - exact) < 0.01);
  CHECK(wilcoxon_exact_p(a, b) == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("wilcoxon: antisymmetry is exact") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = uniform(9, rng), b = uniform(9, rng);
    const auto ab = wilcoxon_signed_rank(a, b), ba = wilcoxon_signed_rank(b, a);
    CHECK(ab.z == -ba.z);
    CHECK(ab.p == ba.p);
  }
}

TEST_CASE("wilcoxon: invariant under increasing affine transforms") {
  // Only maps that keep the ordering of |a - b| keep the ranks.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> scale(0.1, 50.0), shift(-10.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = uniform(12, rng), b = uniform(12, rng);
    const double k = scale(rng), c = shift(rng);
    std::vector<double> ta, tb;
    for (size_t i = 0; i < a.size(); ++i) {
      ta.push_back(k * a[i] + c);
      tb.push_back(k * b[i] + c);
    }
    const auto r = wilcoxon_signed_rank(a, b), t = wilcoxon_signed_rank(ta, tb);
    CHECK(t.w_plus == r.w_plus);
    CHECK(t.p == doctest::Approx(r.p).epsilon(1e-12));
  }
}

TEST_CASE("wilcoxon: normal approximation near exact for small n") {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (size_t n = 5; n <= 12; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      const auto a = uniform(n, rng), b = uniform(n, rng);
      const double approx = wilcoxon_signed_rank(a, b).p;
      const double exact = oracle::signed_rank_exact_p(a, b);
      worst = std::max(worst, std::abs(approx - exact));
      CHECK(wilcoxon_exact_p(a, b) == doctest::Approx(exact).epsilon(1e-12));
    }
  }
  MESSAGE("worst |p_normal - p_exact| = " << worst);
  CHECK(worst < 0.05);
}

TEST_CASE("summarize: quantiles and KDE") {
  const auto s = summarize("x", {0.5, 0.7, 0.9});
  CHECK(s.median == doctest::Approx(0.7));
  CHECK(s.q1 == doctest::Approx(0.6));
  CHECK(s.q3 == doctest::Approx(0.8));
  CHECK(s.min == 0.5);
  CHECK(s.max == 0.9);
  // Scott: sd * n^-1/5
  CHECK(s.bandwidth == doctest::Approx(0.2 * std::pow(3.0, -0.2)));

  const auto c = summarize("c", {0.8, 0.8, 0.8, 0.8});
  CHECK(c.q1 == c.q3);
  CHECK(c.median == 0.8);

  std::mt19937_64 rng(9);
  for (const auto& vals : {std::vector<double>{0.5, 0.7, 0.9}, std::vector<double>(5, 0.62),
                           uniform(40, rng), uniform(86, rng, 0.6, 0.95)}) {
    const auto k = summarize("k", vals);
    double area = 0.0;
    for (size_t g = 1; g < k.grid.size(); ++g)
      area += 0.5 * (k.density[g] + k.density[g - 1]) * (k.grid[g] - k.grid[g - 1]);
    CHECK(std::abs(area - 1.0) < 1e-3);
  }
  CHECK_THROWS_AS(summarize("one", {0.5}), Error);
}

TEST_CASE("figure data: CSV round trip, SVG structure and extents") {
  const fs::path dir = fs::temp_directory_path() / "eegmatch_test_stats";
  fs::remove_all(dir);
  std::mt19937_64 rng(21);
  std::vector<ConditionData> conds;
  for (const std::string name : {"envelope", "mel", "vad"}) {
    ConditionData d;
    d.condition = name;
    for (int s = 0; s < 12; ++s) d.subjects.push_back("S" + std::to_string(s));
    d.accuracy = uniform(12, rng, 0.55, 0.95);
    conds.push_back(d);
  }
  emit_figure_data(dir, conds);

  for (const auto& c : conds) {
    const auto back = read_condition_csv(dir / (c.condition + ".csv"), c.condition);
    CHECK(back.subjects == c.subjects);
    CHECK(back.accuracy == c.accuracy);
  }

  std::ifstream in(dir / "violin.svg");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string svg = ss.str();
  CHECK(well_formed_xml(svg));

  // Each polygon carries its data range; recompute from the CSV and compare.
  // The vertical pixel span per unit of accuracy must be shared by all violins.
  const std::regex poly(R"re(<polygon[^>]*data-min="([^"]+)" data-max="([^"]+)" points="([^"]+)")re");
  size_t idx = 0;
  std::vector<double> scale;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator();
       ++it, ++idx) {
    REQUIRE(idx < conds.size());
    const auto csv = read_condition_csv(dir / (conds[idx].condition + ".csv"), "");
    const double lo = *std::min_element(csv.accuracy.begin(), csv.accuracy.end());
    const double hi = *std::max_element(csv.accuracy.begin(), csv.accuracy.end());
    CHECK(std::stod((*it)[1]) == doctest::Approx(lo).epsilon(1e-5));
    CHECK(std::stod((*it)[2]) == doctest::Approx(hi).epsilon(1e-5));
    std::stringstream pts((*it)[3].str());
    double ymin = 1e9, ymax = -1e9;
    for (std::string p; pts >> p;) {
      const double y = std::stod(p.substr(p.find(',') + 1));
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    scale.push_back((ymax - ymin) / (hi - lo));
  }
  CHECK(idx == conds.size());
  for (double s : scale) CHECK(s == doctest::Approx(scale.front()).epsilon(1e-4));

  CHECK(!well_formed_xml("<svg><g></svg>"));
  fs::remove_all(dir);
}

TEST_CASE("subject alignment") {
  ConditionData a{"a", {"S1", "S2", "S3"}, {0.6, 0.7, 0.8}};
  ConditionData b{"b", {"S3", "S1", "S2"}, {0.9, 0.5, 0.4}};
  std::vector<double> xa, xb;
  align_by_subject(a, b, xa, xb);
  CHECK(xa == std::vector<double>{0.6, 0.7, 0.8});
  CHECK(xb == std::vector<double>{0.5, 0.4, 0.9});
  ConditionData c{"c", {"S1", "S2"}, {0.5, 0.5}};
  CHECK_THROWS_AS(align_by_subject(a, c, xa, xb), Error);
  CHECK_THROWS_AS(align_by_subject(c, a, xa, xb), Error);
}
