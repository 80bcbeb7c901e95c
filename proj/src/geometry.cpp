#include "trajgeom/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "trajgeom/numeric.hpp"

namespace trajgeom::geometry {

namespace {

std::span<const double> row_span(const PointMatrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

void require_points(const TrajectoryView& view, std::size_t minimum) {
  if (view.size() < minimum) {
    throw GeometryError("need at least " + std::to_string(minimum) +
                        " points, got " + std::to_string(view.size()));
  }
}

/// Norms of every transition; throws on a zero-length transition.
std::vector<double> transition_norms(const TrajectoryView& view) {
  const PointMatrix& v = view.transitions();
  std::vector<double> norms(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index k = 0; k < v.rows(); ++k) {
    norms[k] = numeric::norm(row_span(v, k));
    if (!(norms[k] > 0.0)) {
      throw GeometryError("zero-norm transition between tokens " +
                              std::to_string(k) + " and " +
                              std::to_string(k + 1),
                          static_cast<std::size_t>(k));
    }
  }
  return norms;
}

PointMatrix centered(const PointMatrix& points) {
  PointMatrix out = points;
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    numeric::CompensatedSum acc;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      acc.add(points(i, j));
    }
    const double m = acc.value() / static_cast<double>(points.rows());
    out.col(j).array() -= m;
  }
  return out;
}

Eigen::MatrixXd gram_matrix(const PointMatrix& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = g(j, i) = numeric::dot(row_span(x, i), row_span(x, j));
    }
  }
  return g;
}

Eigen::MatrixXd scatter_matrix(const PointMatrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd c(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = j; k < d; ++k) {
      numeric::CompensatedSum acc;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc.add(x(i, j) * x(i, k));
      }
      c(j, k) = c(k, j) = acc.value();
    }
  }
  return c;
}

bool use_gram(const PointMatrix& points, SpectrumRoute route) {
  switch (route) {
    case SpectrumRoute::kGram: return true;
    case SpectrumRoute::kCovariance: return false;
    case SpectrumRoute::kAuto: break;
  }
  return points.rows() < points.cols();
}

}  // namespace

TrajectoryView::TrajectoryView(PointMatrix points) : points_(std::move(points)) {
  if (points_.rows() >= 2) {
    transitions_ = points_.bottomRows(points_.rows() - 1) -
                   points_.topRows(points_.rows() - 1);
  } else {
    transitions_.resize(0, points_.cols());
  }
}

PointMatrix layer_points(const store::ActivationTensor& tensor,
                         std::size_t layer) {
  PointMatrix out(static_cast<Eigen::Index>(tensor.n_tokens()),
                  static_cast<Eigen::Index>(tensor.hidden_dim()));
  for (std::size_t t = 0; t < tensor.n_tokens(); ++t) {
    const auto row = tensor.row(layer, t);
    for (std::size_t d = 0; d < row.size(); ++d) {
      out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = row[d];
    }
  }
  return out;
}

std::vector<double> local_curvatures(const TrajectoryView& view) {
  require_points(view, 3);
  const std::vector<double> norms = transition_norms(view);
  const PointMatrix& v = view.transitions();
  std::vector<double> angles;
  angles.reserve(norms.size() - 1);
  std::vector<double> squares(norms.size());
  for (std::size_t k = 0; k < norms.size(); ++k) {
    squares[k] = numeric::dot(row_span(v, static_cast<Eigen::Index>(k)),
                              row_span(v, static_cast<Eigen::Index>(k)));
  }
  for (Eigen::Index k = 0; k + 1 < v.rows(); ++k) {
    // sqrt(|u|^2 |v|^2) rather than |u| |v|: equal steps give exactly 1.
    const double cosine =
        numeric::dot(row_span(v, k + 1), row_span(v, k)) /
        std::sqrt(squares[k + 1] * squares[k]);
    angles.push_back(std::acos(std::clamp(cosine, -1.0, 1.0)));
  }
  return angles;
}

double sequence_curvature(const TrajectoryView& view) {
  return numeric::mean(local_curvatures(view));
}

double straightening(double baseline_curvature, double layer_curvature) {
  if (!std::isfinite(baseline_curvature) || !std::isfinite(layer_curvature)) {
    throw GeometryError("straightening needs finite curvatures");
  }
  return baseline_curvature - layer_curvature;
}

MengerTriangle MengerTriangle::from_sides(double a, double b, double c) {
  MengerTriangle tri{a, b, c, 0.5 * (a + b + c), 0.0};
  std::array<double, 3> s{a, b, c};
  std::sort(s.begin(), s.end(), std::greater<>());
  const double x = s[0];
  const double y = s[1];
  const double z = s[2];
  const double product =
      (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z));
  tri.area = product > 0.0 ? 0.25 * std::sqrt(product) : 0.0;
  return tri;
}

double MengerTriangle::curvature() const {
  if (c == 0.0 && a == b && a > 0.0) {
    return 2.0 / a;
  }
  if (area == 0.0) {
    return 0.0;
  }
  return 4.0 * area / (a * b * c);
}

MengerTriangle MengerTriangle::unit_step(double chord, double gap) {
  MengerTriangle tri{1.0, 1.0, chord, 0.5 * (2.0 + chord), 0.0};
  // Heron with a = b = 1: (2 + c)(2 - c) c^2, where 2 - c = gap^2 / (2 + c)
  // because chord^2 + gap^2 = 4 for two unit steps.
  const double excess = gap * gap / (2.0 + chord);
  const double product = (2.0 + chord) * excess * chord * chord;
  tri.area = product > 0.0 ? 0.25 * std::sqrt(product) : 0.0;
  return tri;
}

std::vector<double> local_menger_curvatures(const TrajectoryView& view) {
  require_points(view, 3);
  const std::vector<double> norms = transition_norms(view);
  const PointMatrix& v = view.transitions();
  const auto dim = static_cast<std::size_t>(v.cols());
  std::vector<double> chord(dim);
  std::vector<double> gap(dim);
  std::vector<double> kappas;
  kappas.reserve(norms.size() - 1);
  for (Eigen::Index k = 0; k + 1 < v.rows(); ++k) {
    // chord = y_{k+2} - y_k on the unit-step path; gap = u_{k+1} - u_k.
    for (std::size_t d = 0; d < dim; ++d) {
      const double u0 = v(k, static_cast<Eigen::Index>(d)) / norms[k];
      const double u1 = v(k + 1, static_cast<Eigen::Index>(d)) / norms[k + 1];
      chord[d] = u0 + u1;
      gap[d] = u1 - u0;
    }
    kappas.push_back(
        MengerTriangle::unit_step(numeric::norm(chord), numeric::norm(gap)).curvature());
  }
  return kappas;
}

double menger_sequence_curvature(const TrajectoryView& view) {
  return numeric::mean(local_menger_curvatures(view));
}

std::vector<double> covariance_spectrum(const PointMatrix& points,
                                        SpectrumRoute route) {
  if (points.rows() < 2) {
    throw GeometryError("spectrum needs at least 2 points");
  }
  const PointMatrix x = centered(points);
  const Eigen::MatrixXd m = use_gram(points, route) ? gram_matrix(x)
                                                    : scatter_matrix(x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw GeometryError("eigendecomposition did not converge");
  }
  const double scale = 1.0 / static_cast<double>(points.rows() - 1);
  // Eigenvalues below the solver's backward error are rank deficiency, not
  // variance: a collinear cloud must give exactly one nonzero eigenvalue.
  const auto& values = solver.eigenvalues();
  const double floor = static_cast<double>(m.rows()) *
                       std::numeric_limits<double>::epsilon() *
                       values.cwiseAbs().maxCoeff();
  std::vector<double> spectrum(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    spectrum[static_cast<std::size_t>(i)] =
        values(i) > floor ? values(i) * scale : 0.0;
  }
  std::sort(spectrum.begin(), spectrum.end(), std::greater<>());
  return spectrum;
}

double effective_dimensionality(std::span<const double> spectrum) {
  numeric::CompensatedSum total;
  numeric::CompensatedSum squares;
  for (double l : spectrum) {
    total.add(l);
    squares.add(l * l);
  }
  if (!(total.value() > 0.0)) {
    throw GeometryError("zero total variance: all points identical");
  }
  return total.value() * total.value() / squares.value();
}

double effective_dimensionality(const PointMatrix& points,
                                SpectrumRoute route) {
  return effective_dimensionality(covariance_spectrum(points, route));
}

double elongation(std::span<const double> spectrum) {
  if (spectrum.empty() || !(spectrum[0] > 0.0)) {
    throw GeometryError("zero total variance: elongation undefined");
  }
  const double second = spectrum.size() > 1 ? spectrum[1] : 0.0;
  return 1.0 - second / spectrum[0];
}

double elongation(const PointMatrix& points, SpectrumRoute route) {
  if (points.rows() < 3) {
    throw GeometryError("elongation needs at least 3 points");
  }
  return elongation(covariance_spectrum(points, route));
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::kCurvature: return "curvature";
    case Measure::kStraightening: return "straightening";
    case Measure::kMengerCurvature: return "menger_curvature";
    case Measure::kMengerStraightening: return "menger_straightening";
    case Measure::kEffectiveDimensionality: return "effective_dimensionality";
    case Measure::kElongation: return "elongation";
  }
  return "unknown";
}

Measure parse_measure(std::string_view text) {
  for (Measure m : kAllMeasures) {
    if (to_string(m) == text) {
      return m;
    }
  }
  throw ParseError("unknown measure '" + std::string(text) + "'");
}

const std::vector<double>& CurvatureProfile::values(Measure m) const {
  switch (m) {
    case Measure::kCurvature: return curvature;
    case Measure::kStraightening: return straightening;
    case Measure::kMengerCurvature: return menger_curvature;
    case Measure::kMengerStraightening: return menger_straightening;
    case Measure::kEffectiveDimensionality: return effective_dimensionality;
    case Measure::kElongation: return elongation;
  }
  return curvature;
}

CurvatureProfile layer_profile(const store::ActivationTensor& window) {
  if (window.n_tokens() < 3) {
    throw GeometryError("window needs at least 3 tokens, got " +
                        std::to_string(window.n_tokens()));
  }
  CurvatureProfile p;
  const std::size_t layers = window.n_layers();
  for (std::size_t layer = 0; layer < layers; ++layer) {
    const TrajectoryView view(layer_points(window, layer));
    p.curvature.push_back(sequence_curvature(view));
    p.menger_curvature.push_back(menger_sequence_curvature(view));
    const auto spectrum = covariance_spectrum(view.points());
    p.effective_dimensionality.push_back(effective_dimensionality(spectrum));
    p.elongation.push_back(elongation(spectrum));
  }
  for (std::size_t layer = 0; layer < layers; ++layer) {
    p.straightening.push_back(straightening(p.curvature[0], p.curvature[layer]));
    p.menger_straightening.push_back(
        straightening(p.menger_curvature[0], p.menger_curvature[layer]));
  }
  return p;
}

CurvatureProfile layer_profile(const store::TrajectoryBundle& bundle,
                               std::string_view sequence_id,
                               store::TokenRange window) {
  if (window.size() < 3) {
    throw GeometryError("window needs at least 3 tokens, got " +
                        std::to_string(window.size()));
  }
  return layer_profile(store::slice_window(bundle, sequence_id, window));
}

double band_mean(const CurvatureProfile& profile, LayerBand band, Measure m) {
  if (band.lo > band.hi) {
    throw GeometryError("empty layer band");
  }
  const auto& values = profile.values(m);
  if (band.hi >= values.size()) {
    throw GeometryError("layer band [" + std::to_string(band.lo) + "," +
                        std::to_string(band.hi) + "] outside " +
                        std::to_string(values.size()) + " stored layers");
  }
  return numeric::mean(std::span<const double>(values).subspan(
      band.lo, band.hi - band.lo + 1));
}

std::vector<double> band_aggregate(std::span<const CurvatureProfile> profiles,
                                   LayerBand band, Measure m) {
  std::vector<double> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) {
    out.push_back(band_mean(p, band, m));
  }
  return out;
}

void project_node_means(const PointMatrix& node_means,
                        std::vector<std::array<double, 2>>& coords,
                        std::array<double, 2>& explained) {
  const Eigen::Index m = node_means.rows();
  if (m < 2) {
    throw GeometryError("node map needs at least 2 nodes");
  }
  const PointMatrix x = centered(node_means);
  const bool gram = m <= node_means.cols();
  const Eigen::MatrixXd mat = gram ? gram_matrix(x) : scatter_matrix(x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(mat);
  if (solver.info() != Eigen::Success) {
    throw GeometryError("eigendecomposition did not converge");
  }
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::Index top = values.size() - 1;
  numeric::CompensatedSum total;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    total.add(std::max(0.0, values(i)));
  }
  if (!(total.value() > 0.0)) {
    throw GeometryError("zero variance across node means");
  }

  coords.assign(static_cast<std::size_t>(m), {0.0, 0.0});
  for (int comp = 0; comp < 2; ++comp) {
    const Eigen::Index idx = top - comp;
    const double lambda = idx >= 0 ? std::max(0.0, values(idx)) : 0.0;
    explained[comp] = lambda / total.value();
    if (idx < 0) {
      continue;
    }
    Eigen::VectorXd c;
    if (gram) {
      c = solver.eigenvectors().col(idx) * std::sqrt(lambda);
    } else {
      c = x * solver.eigenvectors().col(idx);
    }
    Eigen::Index arg = 0;
    c.cwiseAbs().maxCoeff(&arg);
    const double sign = c(arg) < 0.0 ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      coords[static_cast<std::size_t>(i)][comp] = sign * c(i);
    }
  }
}

NodeMap node_map(const store::TrajectoryBundle& bundle, std::size_t layer,
                 std::span<const std::int64_t> node_token_ids,
                 std::span<const std::size_t> sequences) {
  const auto& manifest = bundle.manifest();
  if (layer >= manifest.n_layers_stored) {
    throw GeometryError("layer " + std::to_string(layer) + " not stored");
  }
  const std::size_t n_nodes = node_token_ids.size();
  const std::size_t dim = manifest.hidden_dim;
  std::vector<std::vector<numeric::CompensatedSum>> sums(
      n_nodes, std::vector<numeric::CompensatedSum>(dim));
  std::vector<std::size_t> counts(n_nodes, 0);

  auto accumulate = [&](std::size_t seq_index) {
    const auto& record = bundle.record(seq_index);
    const auto test = record.first_span(store::SpanLabel::kTestWindow);
    if (!test) {
      return;
    }
    const auto& act = bundle.tensors(seq_index).activations;
    for (std::size_t t = test->start; t < test->end; ++t) {
      const auto it = std::find(node_token_ids.begin(), node_token_ids.end(),
                                record.token_ids[t]);
      if (it == node_token_ids.end()) {
        continue;
      }
      const auto node = static_cast<std::size_t>(it - node_token_ids.begin());
      const auto row = act.row(layer, t);
      for (std::size_t d = 0; d < dim; ++d) {
        sums[node][d].add(row[d]);
      }
      ++counts[node];
    }
  };
  if (sequences.empty()) {
    for (std::size_t i = 0; i < bundle.size(); ++i) {
      accumulate(i);
    }
  } else {
    for (std::size_t i : sequences) {
      accumulate(i);
    }
  }

  NodeMap out;
  out.layer = layer;
  for (std::size_t node = 0; node < n_nodes; ++node) {
    if (counts[node] == 0) {
      out.missing.push_back(node);
      continue;
    }
    std::vector<double> mean(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      mean[d] = sums[node][d].value() / static_cast<double>(counts[node]);
    }
    out.nodes.push_back(node);
    out.counts.push_back(counts[node]);
    out.means.push_back(std::move(mean));
  }
  PointMatrix means(static_cast<Eigen::Index>(out.nodes.size()),
                    static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < out.means.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
          out.means[i][d];
    }
  }
  project_node_means(means, out.coords, out.explained);
  return out;
}

}  // namespace trajgeom::geometry
