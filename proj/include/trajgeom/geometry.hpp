#pragma once

// Trajectory geometry: curvature/straightening, Menger curvature on the
// unit-step path, participation-ratio dimensionality, elongation, and PCA
// node maps.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "trajgeom/error.hpp"
#include "trajgeom/store.hpp"

namespace trajgeom::geometry {

/// Rows are points (one per token), columns are hidden dimensions.
using PointMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class GeometryError : public DomainError {
 public:
  explicit GeometryError(const std::string& message,
                         std::optional<std::size_t> token_index = std::nullopt)
      : DomainError(message), token_index_(token_index) {}

  /// For zero-norm transitions: index of the first of the two identical
  /// consecutive points.
  std::optional<std::size_t> token_index() const { return token_index_; }

 private:
  std::optional<std::size_t> token_index_;
};

/// Ordered points x_1..x_n and their transitions v_k = x_{k+1} - x_k.
class TrajectoryView {
 public:
  explicit TrajectoryView(PointMatrix points);

  const PointMatrix& points() const { return points_; }
  const PointMatrix& transitions() const { return transitions_; }
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }

 private:
  PointMatrix points_;
  PointMatrix transitions_;
};

/// Widens one stored layer of a tensor to 64-bit points.
PointMatrix layer_points(const store::ActivationTensor& tensor,
                         std::size_t layer);

/// Angles between consecutive transitions, n - 2 values in [0, pi].
std::vector<double> local_curvatures(const TrajectoryView& view);
double sequence_curvature(const TrajectoryView& view);
double straightening(double baseline_curvature, double layer_curvature);

struct MengerTriangle {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double semi_perimeter = 0.0;
  double area = 0.0;

  /// Heron's formula in Kahan's cancellation-free ordering.
  static MengerTriangle from_sides(double a, double b, double c);
  /// Unit-step triangle (a = b = 1) with chord c = |u_k + u_{k+1}|. Near
  /// collinearity the factor 2 - c cancels, so it is taken from the
  /// complementary chord |u_{k+1} - u_k| instead.
  static MengerTriangle unit_step(double chord, double gap);
  /// 4K / (abc); 0 for collinear triangles, 2/a for the folded a = b, c = 0
  /// case (full reversal).
  double curvature() const;
};

/// Menger curvature of each consecutive triplet of the unit-step path.
std::vector<double> local_menger_curvatures(const TrajectoryView& view);
double menger_sequence_curvature(const TrajectoryView& view);

enum class SpectrumRoute {
  kAuto,        ///< Gram when n < d, covariance otherwise
  kGram,        ///< eigenvalues of the n x n centered Gram matrix / (n - 1)
  kCovariance,  ///< eigenvalues of the d x d covariance matrix
};

/// Covariance eigenvalues of the rows of `points`, descending, negatives
/// from rounding set to zero.
std::vector<double> covariance_spectrum(const PointMatrix& points,
                                        SpectrumRoute route = SpectrumRoute::kAuto);

/// Participation ratio (sum l)^2 / sum l^2.
double effective_dimensionality(const PointMatrix& points,
                                SpectrumRoute route = SpectrumRoute::kAuto);
double effective_dimensionality(std::span<const double> spectrum);

/// 1 - l2 / l1.
double elongation(const PointMatrix& points,
                  SpectrumRoute route = SpectrumRoute::kAuto);
double elongation(std::span<const double> spectrum);

enum class Measure {
  kCurvature,
  kStraightening,
  kMengerCurvature,
  kMengerStraightening,
  kEffectiveDimensionality,
  kElongation,
};

std::string_view to_string(Measure m);
Measure parse_measure(std::string_view text);
inline constexpr std::array<Measure, 6> kAllMeasures = {
    Measure::kCurvature,
    Measure::kStraightening,
    Measure::kMengerCurvature,
    Measure::kMengerStraightening,
    Measure::kEffectiveDimensionality,
    Measure::kElongation,
};

/// Per-layer measures for one window; straightening values are relative to
/// layer 0.
struct CurvatureProfile {
  std::vector<double> curvature;
  std::vector<double> straightening;
  std::vector<double> menger_curvature;
  std::vector<double> menger_straightening;
  std::vector<double> effective_dimensionality;
  std::vector<double> elongation;

  std::size_t n_layers() const { return curvature.size(); }
  const std::vector<double>& values(Measure m) const;
};

CurvatureProfile layer_profile(const store::ActivationTensor& window);
CurvatureProfile layer_profile(const store::TrajectoryBundle& bundle,
                               std::string_view sequence_id,
                               store::TokenRange window);

/// Inclusive layer band.
struct LayerBand {
  std::size_t lo = 15;
  std::size_t hi = 25;
};

double band_mean(const CurvatureProfile& profile, LayerBand band, Measure m);
std::vector<double> band_aggregate(std::span<const CurvatureProfile> profiles,
                                   LayerBand band, Measure m);

struct NodeMap {
  std::size_t layer = 0;
  std::vector<std::size_t> nodes;    ///< nodes with >= 1 occurrence, ascending
  std::vector<std::size_t> missing;  ///< nodes never seen in a test window
  std::vector<std::size_t> counts;   ///< occurrences per entry of `nodes`
  std::vector<std::vector<double>> means;
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> explained{0.0, 0.0};
};

/// Top-2 principal coordinates of node-mean vectors.
///
/// `node_means` rows are the per-node mean activations. Component signs are
/// fixed so the largest-magnitude coordinate of each component is positive.
void project_node_means(const PointMatrix& node_means,
                        std::vector<std::array<double, 2>>& coords,
                        std::array<double, 2>& explained);

/// Averages test-window activations per grid node and projects the node
/// means on their top two principal components. `node_token_ids[i]` is the
/// token id of node i; `sequences` restricts the bundle entries (empty = all).
NodeMap node_map(const store::TrajectoryBundle& bundle, std::size_t layer,
                 std::span<const std::int64_t> node_token_ids,
                 std::span<const std::size_t> sequences = {});

}  // namespace trajgeom::geometry
