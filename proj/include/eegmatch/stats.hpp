#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace eegmatch {

struct WilcoxonResult {
  double z = 0.0;        // signed: positive when A tends to exceed B
  double p = 1.0;        // two-sided, normal approximation
  size_t n_effective = 0;
  double w_plus = 0.0;   // rank sum of positive differences A - B
  double w_minus = 0.0;
};

// Zero differences are discarded, ties get average ranks, the variance is
// tie-corrected and a 0.5 continuity correction is applied toward the mean.
// Throws Degenerate when every difference is zero and InvalidInput for fewer
// than 5 pairs.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided exact p by enumerating all 2^n sign assignments of the observed
// (tie-averaged) ranks: P(|W+ - mu| >= |observed - mu|). n_effective <= 24.
double wilcoxon_exact_p(const std::vector<double>& a, const std::vector<double>& b);

struct Summary {
  std::string condition;
  size_t n = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double bandwidth = 0.0;       // Scott's rule on the sample standard deviation
  std::vector<double> grid;     // [min - 5h, max + 5h]
  std::vector<double> density;  // Gaussian KDE on grid
};

// Quantiles use linear interpolation between order statistics. Constant
// samples fall back to a bandwidth of 1e-3. Throws InvalidInput for n < 2.
Summary summarize(const std::string& condition, const std::vector<double>& values,
                  size_t grid_points = 512);

double quantile(std::vector<double> values, double q);

struct ConditionData {
  std::string condition;
  std::vector<std::string> subjects;
  std::vector<double> accuracy;
};

// CSV: subject,accuracy
void write_condition_csv(const std::filesystem::path& path, const ConditionData& data);
ConditionData read_condition_csv(const std::filesystem::path& path, const std::string& condition);

// Static violin chart; each violin spans exactly [min, max] of its data.
std::string violin_svg(const std::vector<Summary>& summaries);

// Per-condition CSVs (<condition>.csv) and violin.svg in `dir`.
void emit_figure_data(const std::filesystem::path& dir, const std::vector<ConditionData>& conditions);

// Aligns two result sets by subject id. Throws InvalidInput when the subject
// sets differ.
void align_by_subject(const ConditionData& a, const ConditionData& b, std::vector<double>& out_a,
                      std::vector<double>& out_b);

}  // namespace eegmatch
