#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajgeom/error.hpp"

namespace trajgeom::stats {

struct StatResult {
  std::string test;
  double statistic = 0.0;
  double df = 0.0;
  /// Denominator degrees of freedom (F tests only).
  std::optional<double> df2;
  double p_value = 1.0;
  std::optional<double> effect_size;
  std::vector<std::size_t> sample_sizes;
};

enum class TTestVariant { kWelch, kStudent };

/// Independent two-sample t-test, two-sided. Cohen's d (pooled SD, sign of
/// mean(a) - mean(b)) is reported as the effect size for both variants.
StatResult ttest_ind(std::span<const double> a, std::span<const double> b,
                     TTestVariant variant = TTestVariant::kWelch);

StatResult anova_oneway(std::span<const std::vector<double>> groups);

/// Sample correlation; the p-value is the two-sided t test of r = 0.
StatResult pearson_r(std::span<const double> x, std::span<const double> y);

double cohens_d(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

/// P(F' >= f) for the F distribution with (df1, df2) degrees of freedom.
double f_survival(double f, double df1, double df2);

}  // namespace trajgeom::stats
