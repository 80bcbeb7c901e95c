#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these share code with the library under test.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "trajgeom/geometry.hpp"

namespace trajgeom::testing {

using Matrix = std::vector<std::vector<double>>;

/// Standard normal draws from a fixed engine via Box-Muller.
class Normal {
 public:
  explicit Normal(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    while (u <= 0.0) {
      u = uniform();
    }
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * std::numbers::pi * v);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * v);
  }

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline geometry::PointMatrix gaussian_points(Normal& g, std::size_t n, std::size_t d) {
  geometry::PointMatrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      m(i, j) = g();
    }
  }
  return m;
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q).
inline Eigen::MatrixXd random_orthogonal(Normal& g, std::size_t d) {
  Eigen::MatrixXd a(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      a(i, j) = g();
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) {
      q.col(j) *= -1.0;
    }
  }
  return q;
}

/// Covariance matrix in long double, straight from the definition.
inline Matrix covariance(const geometry::PointMatrix& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  std::vector<long double> mu(d, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] += x(i, j);
    }
  }
  for (auto& m : mu) {
    m /= static_cast<long double>(n);
  }
  Matrix c(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      long double s = 0.0L;
      for (std::size_t i = 0; i < n; ++i) {
        s += (x(i, a) - mu[a]) * (x(i, b) - mu[b]);
      }
      c[a][b] = c[b][a] = static_cast<double>(s / static_cast<long double>(n - 1));
    }
  }
  return c;
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
inline std::vector<double> jacobi_eigenvalues(Matrix a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        off += a[p][q] * a[p][q];
      }
    }
    if (off < 1e-300) {
      break;
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) {
          continue;
        }
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) {
    ev[i] = std::max(0.0, a[i][i]);
  }
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

inline double participation_ratio(const std::vector<double>& ev) {
  long double s = 0.0L;
  long double s2 = 0.0L;
  for (double l : ev) {
    s += l;
    s2 += static_cast<long double>(l) * l;
  }
  return static_cast<double>(s * s / s2);
}

/// Turning angle between two vectors as 2 atan2(|u^ - v^|, |u^ + v^|),
/// which avoids the arccos route used by the library.
inline double angle_between(const double* u, const double* v, std::size_t d) {
  long double uu = 0.0L;
  long double vv = 0.0L;
  for (std::size_t i = 0; i < d; ++i) {
    uu += static_cast<long double>(u[i]) * u[i];
    vv += static_cast<long double>(v[i]) * v[i];
  }
  const long double nu = std::sqrt(uu);
  const long double nv = std::sqrt(vv);
  long double minus = 0.0L;
  long double plus = 0.0L;
  for (std::size_t i = 0; i < d; ++i) {
    const long double a = u[i] / nu;
    const long double b = v[i] / nv;
    minus += (a - b) * (a - b);
    plus += (a + b) * (a + b);
  }
  return static_cast<double>(2.0L * std::atan2(std::sqrt(minus), std::sqrt(plus)));
}

/// Number of start positions where `gram` occurs in `words`.
inline std::size_t count_occurrences(const std::vector<std::string>& words,
                                     const std::vector<std::string>& gram) {
  if (gram.empty() || gram.size() > words.size()) {
    return 0;
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i + gram.size() <= words.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < gram.size() && match; ++j) {
      match = words[i + j] == gram[j];
    }
    count += match ? 1 : 0;
  }
  return count;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("trajgeom_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) {
    return {};
  }
  std::string out;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) {
    out.append(buf, n);
  }
  std::fclose(f);
  return out;
}

}  // namespace trajgeom::testing
