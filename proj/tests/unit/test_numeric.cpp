#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "trajgeom/numeric.hpp"
#include "trajgeom/rng.hpp"

using namespace trajgeom;

TEST_CASE("compensated sum recovers cancelled terms") {
  const std::vector<double> xs{1e16, 1.0, -1e16, 1.0};
  CHECK(numeric::sum(xs) == 2.0);
  numeric::CompensatedSum acc;
  for (int i = 0; i < 10; ++i) acc.add(0.1);
  CHECK(acc.value() == 1.0);
}

TEST_CASE("mean, variance, dot, norm") {
  const std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(numeric::mean(xs) == 5.0);
  CHECK(numeric::variance(xs) == doctest::Approx(32.0 / 7.0).epsilon(1e-15));
  const std::vector<double> one{3.0};
  CHECK(numeric::variance(one) == 0.0);
  const std::vector<double> a{3, 4};
  CHECK(numeric::norm(a) == 5.0);
  CHECK(numeric::dot(a, a) == 25.0);
}

TEST_CASE("format_double is shortest round-trip text") {
  CHECK(numeric::format_double(0.1) == "0.1");
  CHECK(numeric::format_double(-0.0) == "0");
  CHECK(numeric::format_double(1e-300) == "1e-300");
  CHECK(numeric::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(numeric::format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(numeric::format_double(x)) == x);
}

TEST_CASE("engine sequence is the standard mt19937_64") {
  Rng rng(5489);
  CHECK(rng.next() == 14514284786278117030ULL);
  Rng again(5489);
  std::uint64_t last = 0;
  for (int i = 0; i < 10000; ++i) last = again.next();
  CHECK(last == 9981545732273789042ULL);
}

TEST_CASE("derive_seed is splitmix64") {
  CHECK(derive_seed(0, 0) == 0xE220A8397B1DCDAFULL);
  CHECK(derive_seed(7, 3) != derive_seed(7, 4));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("bounded draws stay in range and cover it") {
  Rng rng(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.index(7);
    REQUIRE(k < 7);
    ++hits[k];
  }
  for (int h : hits) {
    CHECK(h > 850);
    CHECK(h < 1150);
  }
  CHECK(rng.index(1) == 0);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("sampling without replacement and shuffle") {
  Rng rng(3);
  const auto s = rng.sample_without_replacement(10, 10);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 10);
  CHECK(rng.sample_without_replacement(5, 9).size() == 5);
  std::vector<int> v{1, 2, 3, 4, 5, 6};
  rng.shuffle(v);
  CHECK(std::multiset<int>(v.begin(), v.end()) == std::multiset<int>{1, 2, 3, 4, 5, 6});
}
