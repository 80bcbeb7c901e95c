#include "trajgeom/numeric.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace trajgeom::numeric {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

double sum(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) {
    acc.add(x);
  }
  return acc.value();
}

double mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : sum(xs) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) {
    return 0.0;
  }
  const double m = mean(xs);
  CompensatedSum acc;
  for (double x : xs) {
    acc.add((x - m) * (x - m));
  }
  return acc.value() / static_cast<double>(xs.size() - 1);
}

double dot(std::span<const double> a, std::span<const double> b) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc.add(a[i] * b[i]);
  }
  return acc.value();
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::string format_double(double x) {
  if (std::isnan(x)) {
    return "nan";
  }
  if (std::isinf(x)) {
    return x > 0 ? "inf" : "-inf";
  }
  if (x == 0.0) {
    return "0";  // folds -0 so reports never differ on the sign of zero
  }
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

}  // namespace trajgeom::numeric
