#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace trajgeom::numeric {

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double sum(std::span<const double> xs);
double mean(std::span<const double> xs);
/// Unbiased (n - 1) sample variance, two-pass.
double variance(std::span<const double> xs);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Shortest round-trip decimal text; "nan", "inf", "-inf" for non-finite.
std::string format_double(double x);

}  // namespace trajgeom::numeric
