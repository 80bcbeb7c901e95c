#include "trajgeom/stats.hpp"

#include <cmath>
#include <limits>

#include "trajgeom/numeric.hpp"

namespace trajgeom::stats {

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEpsilon = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) {
    d = kTiny;
  }
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEpsilon) {
      return h;
    }
  }
  throw DomainError("incomplete beta continued fraction did not converge");
}

void require_size(std::span<const double> xs, std::size_t n, const char* what) {
  if (xs.size() < n) {
    throw DomainError(std::string(what) + " needs at least " +
                      std::to_string(n) + " observations");
  }
}

double pooled_variance(std::span<const double> a, std::span<const double> b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  return ((na - 1.0) * numeric::variance(a) + (nb - 1.0) * numeric::variance(b)) /
         (na + nb - 2.0);
}

// I_x(a, b) given both x and y = 1 - x, so callers can pass a complement
// computed without cancellation.
double incomplete_beta_xy(double a, double b, double x, double y) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw DomainError("incomplete beta arguments out of domain");
  }
  if (x == 0.0) {
    return 0.0;
  }
  if (y == 0.0) {
    return 1.0;
  }
  const double log_front = std::lgamma(a + b) - std::lgamma(a) -
                           std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  return incomplete_beta_xy(a, b, x, 1.0 - x);
}

double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) {
    return 0.0;
  }
  if (t == 0.0) {
    return 1.0;
  }
  const double t2 = t * t;
  return incomplete_beta_xy(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2));
}

double f_survival(double f, double df1, double df2) {
  if (std::isinf(f)) {
    return 0.0;
  }
  if (f <= 0.0) {
    return 1.0;
  }
  const double denom = df2 + df1 * f;
  return incomplete_beta_xy(0.5 * df2, 0.5 * df1, df2 / denom, df1 * f / denom);
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  require_size(a, 2, "Cohen's d");
  require_size(b, 2, "Cohen's d");
  const double diff = numeric::mean(a) - numeric::mean(b);
  const double sp = std::sqrt(pooled_variance(a, b));
  if (sp == 0.0) {
    if (diff == 0.0) {
      return 0.0;
    }
    return diff > 0.0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
  }
  return diff / sp;
}

StatResult ttest_ind(std::span<const double> a, std::span<const double> b,
                     TTestVariant variant) {
  require_size(a, 2, "t-test sample a");
  require_size(b, 2, "t-test sample b");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = numeric::variance(a);
  const double vb = numeric::variance(b);
  if (va == 0.0 && vb == 0.0) {
    throw DomainError("t-test undefined: both samples have zero variance");
  }
  const double diff = numeric::mean(a) - numeric::mean(b);

  StatResult r;
  r.sample_sizes = {a.size(), b.size()};
  if (variant == TTestVariant::kWelch) {
    r.test = "welch_t";
    const double sa = va / na;
    const double sb = vb / nb;
    r.statistic = diff / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) /
           (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  } else {
    r.test = "student_t";
    const double sp2 = pooled_variance(a, b);
    r.statistic = diff / std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    r.df = na + nb - 2.0;
  }
  r.p_value = student_t_two_sided_p(r.statistic, r.df);
  r.effect_size = cohens_d(a, b);
  return r;
}

StatResult anova_oneway(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) {
    throw DomainError("ANOVA needs at least 2 groups");
  }
  numeric::CompensatedSum grand;
  std::size_t total = 0;
  for (const auto& g : groups) {
    require_size(g, 2, "ANOVA group");
    for (double x : g) {
      grand.add(x);
    }
    total += g.size();
  }
  const double grand_mean = grand.value() / static_cast<double>(total);
  numeric::CompensatedSum between;
  numeric::CompensatedSum within;
  StatResult r;
  r.test = "anova_oneway";
  for (const auto& g : groups) {
    const double m = numeric::mean(g);
    between.add(static_cast<double>(g.size()) * (m - grand_mean) * (m - grand_mean));
    for (double x : g) {
      within.add((x - m) * (x - m));
    }
    r.sample_sizes.push_back(g.size());
  }
  const double df1 = static_cast<double>(groups.size() - 1);
  const double df2 = static_cast<double>(total - groups.size());
  const double ms_between = between.value() / df1;
  const double ms_within = within.value() / df2;
  if (ms_within == 0.0) {
    if (ms_between == 0.0) {
      throw DomainError("ANOVA undefined: zero variance within and between groups");
    }
    r.statistic = std::numeric_limits<double>::infinity();
  } else {
    r.statistic = ms_between / ms_within;
  }
  r.df = df1;
  r.df2 = df2;
  r.p_value = f_survival(r.statistic, df1, df2);
  // eta squared
  r.effect_size = between.value() / (between.value() + within.value());
  return r;
}

StatResult pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DomainError("Pearson r needs series of equal length");
  }
  require_size(x, 3, "Pearson r");
  const double mx = numeric::mean(x);
  const double my = numeric::mean(y);
  std::vector<double> dx(x.size());
  std::vector<double> dy(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] = x[i] - mx;
    dy[i] = y[i] - my;
  }
  const double nx = numeric::norm(dx);
  const double ny = numeric::norm(dy);
  if (nx == 0.0 || ny == 0.0) {
    throw DomainError("Pearson r undefined for a constant series");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] /= nx;
    dy[i] /= ny;
  }
  // r = 1 - |u - v|^2 / 2 (or |u + v|^2 / 2 - 1) keeps |r| <= 1 without
  // clamping and stays accurate near +-1.
  const double cosine = numeric::dot(dx, dy);
  std::vector<double> w(x.size());
  const double sign = cosine >= 0.0 ? -1.0 : 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    w[i] = dx[i] + sign * dy[i];
  }
  const double w2 = numeric::dot(w, w);
  StatResult res;
  res.test = "pearson_r";
  res.statistic = cosine >= 0.0 ? 1.0 - 0.5 * w2 : 0.5 * w2 - 1.0;
  res.df = static_cast<double>(x.size() - 2);
  res.sample_sizes = {x.size()};
  const double one_minus_r2 = (1.0 - res.statistic) * (1.0 + res.statistic);
  if (one_minus_r2 <= 0.0) {
    res.p_value = 0.0;
  } else {
    const double t = res.statistic * std::sqrt(res.df / one_minus_r2);
    res.p_value = student_t_two_sided_p(t, res.df);
  }
  res.effect_size = res.statistic;
  return res;
}

}  // namespace trajgeom::stats
