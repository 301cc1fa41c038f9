#pragma once

// Discrete varifolds: finite sums of weighted (point, m-plane) atoms.

#include "maxprin/core.hpp"
#include "maxprin/geometry.hpp"
#include "maxprin/mesh.hpp"
#include "maxprin/parallel.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace maxprin::varifold {

using mesh::SimplicialSurface;

struct Atom {
  Vec x;
  Mat frame;  // n x m, orthonormal in g(x)
  double weight = 0.0;
  int simplex = -1;
};

struct DiscreteVarifold {
  int m = 0;
  int n = 0;
  std::vector<Atom> atoms;
  std::shared_ptr<const SimplicialSurface> source;

  bool empty() const { return atoms.empty(); }

  double total_weight() const {
    std::vector<double> w(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) w[i] = atoms[i].weight;
    return pairwise_sum(w);
  }

  /// Throws Error if a weight is not positive or a frame is not orthonormal.
  void check(const geom::MetricField& metric, double tol = 1e-10) const {
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const Atom& a = atoms[i];
      if (!(a.weight > 0.0)) throw Error("atom " + std::to_string(i) + " has a nonpositive weight");
      const Mat G = a.frame.transpose() * metric.at(a.x) * a.frame;
      if ((G - Mat::Identity(m, m)).cwiseAbs().maxCoeff() > tol) {
        throw Error("atom " + std::to_string(i) + " frame is not orthonormal");
      }
    }
  }
};

inline DiscreteVarifold operator+(const DiscreteVarifold& a, const DiscreteVarifold& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.m != b.m || a.n != b.n) throw Error("cannot add varifolds of different dimensions");
  DiscreteVarifold out = a;
  out.source.reset();
  out.atoms.insert(out.atoms.end(), b.atoms.begin(), b.atoms.end());
  return out;
}

/// Columns of E made orthonormal in g: E L^{-T} where E^T g E = L L^T.
inline Mat orthonormalize(const Mat& E, const Mat& g) {
  const Mat M = E.transpose() * g * E;
  const Eigen::LLT<Mat> llt(M);
  if (llt.info() != Eigen::Success) throw GeometryError("tangent vectors are linearly dependent");
  const Mat L = llt.matrixL();
  return L.triangularView<Eigen::Lower>().solve(E.transpose()).transpose();
}

inline DiscreteVarifold varifold_from_mesh(const SimplicialSurface& surface, const geom::MetricField& metric, int order = 2) {
  mesh::validate(surface);
  DiscreteVarifold V;
  V.m = surface.m;
  V.n = surface.n;
  V.source = std::make_shared<SimplicialSurface>(surface);
  const mesh::Quadrature q = mesh::simplex_quadrature(surface.m, order);
  const double floor = mesh::min_volume(surface);
  for (std::size_t s = 0; s < surface.simplices.size(); ++s) {
    const Mat E = mesh::edge_matrix(surface, s);
    if (mesh::euclidean_volume(surface, s) <= floor) throw MeshError("simplex " + std::to_string(s) + " is degenerate");
    for (std::size_t k = 0; k < q.weights.size(); ++k) {
      Atom a;
      a.x = mesh::bary_point(surface, s, q.bary.col(static_cast<Eigen::Index>(k)));
      const Mat g = metric.at(a.x);
      a.frame = orthonormalize(E, g);
      a.weight = surface.multiplicity[s] * q.weights[k] * mesh::gram_volume(E, g, surface.m);
      a.simplex = static_cast<int>(s);
      V.atoms.push_back(std::move(a));
    }
  }
  return V;
}

/// trace(nabla X | P) for the plane spanned by the g-orthonormal frame U:
/// sum_i <u_i, nabla_{u_i} X>.
inline double plane_trace(const Vec& value, const Mat& jacobian, const Vec& x, const Mat& U, const geom::MetricField& metric) {
  const geom::MetricSample s = geom::sample_metric(metric, x);
  const Mat A = geom::covariant_gradient(value, jacobian, geom::christoffel(s));
  return (U.transpose() * s.g * A * U).trace();
}

template <class F>
double atom_sum(const DiscreteVarifold& V, int threads, F&& term) {
  std::vector<double> terms(V.atoms.size());
  parallel_for(terms.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) terms[i] = term(V.atoms[i]);
  });
  return pairwise_sum(terms);
}

/// delta V(X) = sum over atoms of weight * trace(nabla X | P).
inline double first_variation(const DiscreteVarifold& V, const geom::VectorField& X, const geom::MetricField& metric,
                              int threads = 1) {
  return atom_sum(V, threads, [&](const Atom& a) {
    return a.weight * plane_trace(X.value(a.x), X.jacobian(a.x), a.x, a.frame, metric);
  });
}

inline double weight_integral(const DiscreteVarifold& V, const std::function<double(const Vec&)>& f, int threads = 1) {
  return atom_sum(V, threads, [&](const Atom& a) { return a.weight * f(a.x); });
}

/// The integral of |X|_g against the weight measure.
inline double norm_integral(const DiscreteVarifold& V, const geom::VectorField& X, const geom::MetricField& metric,
                            int threads = 1) {
  return weight_integral(
      V, [&](const Vec& x) { return geom::sample_metric(metric, x).norm(X.value(x)); }, threads);
}

// ---------------------------------------------------------------------------
// Flows

namespace detail {

inline Vec rk4_step(const geom::VectorField& X, const Vec& x, double h) {
  const Vec k1 = X.value(x);
  const Vec k2 = X.value(x + 0.5 * h * k1);
  const Vec k3 = X.value(x + 0.5 * h * k2);
  const Vec k4 = X.value(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Advances every vertex along X for time t with `steps` RK4 steps. When a
/// chart is given, a vertex leaving it raises MeshError.
inline SimplicialSurface flow_mesh(const SimplicialSurface& surface, const geom::VectorField& X, double t, int steps,
                                   const geom::Box* chart = nullptr) {
  if (steps < 1) throw Error("flow needs at least one step");
  SimplicialSurface out = surface;
  const double h = t / steps;
  for (std::size_t v = 0; v < out.vertices.size(); ++v) {
    Vec x = out.vertices[v];
    for (int k = 0; k < steps; ++k) {
      x = detail::rk4_step(X, x, h);
      if (chart && !chart->contains(x)) throw MeshError("vertex " + std::to_string(v) + " left the chart during the flow");
    }
    out.vertices[v] = x;
  }
  return out;
}

/// Push-forward of V by the time-t flow of X: atom points move along X, frame
/// vectors along the linearized flow dE/dt = DX E, and each weight picks up
/// the Jacobian sqrt(det(E^T g E)) of the plane map. The total weight of the
/// result is area(phi_t(V)) with no discretization of the surface.
inline DiscreteVarifold flow_varifold(const DiscreteVarifold& V, const geom::VectorField& X, const geom::MetricField& metric,
                                      double t, int steps) {
  if (steps < 1) throw Error("flow needs at least one step");
  DiscreteVarifold out = V;
  out.source.reset();
  const double h = t / steps;
  for (Atom& a : out.atoms) {
    Vec x = a.x;
    Mat E = a.frame;
    for (int k = 0; k < steps; ++k) {
      const Vec k1 = X.value(x);
      const Mat L1 = X.jacobian(x) * E;
      const Vec x2 = x + 0.5 * h * k1;
      const Vec k2 = X.value(x2);
      const Mat L2 = X.jacobian(x2) * (E + 0.5 * h * L1);
      const Vec x3 = x + 0.5 * h * k2;
      const Vec k3 = X.value(x3);
      const Mat L3 = X.jacobian(x3) * (E + 0.5 * h * L2);
      const Vec x4 = x + h * k3;
      const Vec k4 = X.value(x4);
      const Mat L4 = X.jacobian(x4) * (E + h * L3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      E += (h / 6.0) * (L1 + 2.0 * L2 + 2.0 * L3 + L4);
    }
    const Mat g = metric.at(x);
    a.weight *= std::sqrt((E.transpose() * g * E).determinant());
    a.frame = orthonormalize(E, g);
    a.x = x;
  }
  return out;
}

/// X = (1 - |x - c|^2 / r^2)^3 d inside the ball of radius r about c, 0 outside.
inline std::shared_ptr<geom::VectorField> bump_field(const Vec& center, double radius, const Vec& direction) {
  const int n = static_cast<int>(center.size());
  auto weight = [=](const Vec& x) { return 1.0 - (x - center).squaredNorm() / (radius * radius); };
  return std::make_shared<geom::FunctionVectorField>(
      n,
      [=](const Vec& x) {
        const double w = weight(x);
        return Vec(w > 0.0 ? Vec(w * w * w * direction) : Vec(Vec::Zero(n)));
      },
      [=](const Vec& x) {
        const double w = weight(x);
        if (w <= 0.0) return Mat(Mat::Zero(n, n));
        const Vec grad = (-6.0 * w * w / (radius * radius)) * (x - center);
        return Mat(direction * grad.transpose());
      });
}

// ---------------------------------------------------------------------------
// Variational checks

struct FieldResult {
  std::string name;
  double first_variation = 0.0;
  double sup_norm = 0.0;  // max |X|_g over atoms
};

struct MinimizingReport {
  std::vector<FieldResult> fields;
  double min_first_variation = std::numeric_limits<double>::infinity();
  double total_area = 0.0;
  double tolerance = 0.0;
  int boundary_samples = 0;
  bool passed = true;
};

struct NamedField {
  std::string name;
  std::shared_ptr<const geom::VectorField> field;
};

/// Boundary points used to test X . nu_N >= 0: feet of the atoms and of seeded
/// chart samples on the boundary, kept when the projection lands in the chart.
inline std::vector<Vec> admissibility_samples(const DiscreteVarifold& V, const geom::Domain& domain, int chart_samples = 512,
                                              std::uint64_t seed = 7, int max_atoms = 4000) {
  std::vector<Vec> starts;
  const std::size_t stride = std::max<std::size_t>(1, V.atoms.size() / static_cast<std::size_t>(max_atoms));
  for (std::size_t i = 0; i < V.atoms.size(); i += stride) starts.push_back(V.atoms[i].x);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const geom::Box& box = domain.chart();
  for (int k = 0; k < chart_samples; ++k) {
    Vec x(domain.dim());
    for (int i = 0; i < domain.dim(); ++i) x(i) = box.lo(i) + unit(rng) * (box.hi(i) - box.lo(i));
    starts.push_back(x);
  }
  std::vector<Vec> out;
  for (const Vec& x : starts) {
    try {
      const Vec y = domain.project_to_boundary(x);
      if (box.contains(y)) out.push_back(y);
    } catch (const Error&) {
    }
  }
  return out;
}

/// Throws AdmissibilityError if <X, nu_N>_g < 0 at a sample on the boundary.
inline void require_admissible(const NamedField& f, const std::vector<Vec>& boundary, const geom::Domain& domain) {
  for (const Vec& y : boundary) {
    const Vec X = f.field->value(y);
    const geom::MetricSample s = geom::sample_metric(domain.metric(), y);
    const double normal = s.inner(X, domain.inward_normal(y));
    if (normal < -1e-12 * std::max(1.0, s.norm(X))) {
      std::ostringstream msg;
      msg << "test field '" << f.name << "' points out of the domain at (";
      for (int i = 0; i < y.size(); ++i) msg << (i ? ", " : "") << y(i);
      msg << "): X . nu_N = " << normal;
      throw AdmissibilityError(msg.str());
    }
  }
}

/// delta V(X) for each field after checking X . nu_N >= 0 on the boundary;
/// passes when every value is at least -1e-6 * area * |X|_inf.
inline MinimizingReport check_first_order_minimizing(const DiscreteVarifold& V, const geom::Domain& domain,
                                                     const std::vector<NamedField>& fields, int threads = 1) {
  MinimizingReport r;
  const std::vector<Vec> boundary = admissibility_samples(V, domain);
  r.boundary_samples = static_cast<int>(boundary.size());
  for (const NamedField& f : fields) require_admissible(f, boundary, domain);
  r.total_area = V.total_weight();
  for (const NamedField& f : fields) {
    FieldResult fr;
    fr.name = f.name;
    fr.first_variation = first_variation(V, *f.field, domain.metric(), threads);
    for (const Atom& a : V.atoms) fr.sup_norm = std::max(fr.sup_norm, geom::sample_metric(domain.metric(), a.x).norm(f.field->value(a.x)));
    const double tol = 1e-6 * r.total_area * fr.sup_norm;
    r.tolerance = std::max(r.tolerance, tol);
    if (fr.first_variation < -tol) r.passed = false;
    r.min_first_variation = std::min(r.min_first_variation, fr.first_variation);
    r.fields.push_back(fr);
  }
  return r;
}

struct BoundedMcReport {
  double first_variation = 0.0;
  double norm_integral = 0.0;
  double h = 0.0;
  double quantity = 0.0;  // delta V(X) + h * int |X|
  double tolerance = 0.0;
  bool passed = true;
};

/// delta V(X) + h int |X| d mu_V, compared with -1e-6 * area * |X|_inf.
inline BoundedMcReport check_bounded_mc(const DiscreteVarifold& V, const geom::VectorField& X, double h,
                                        const geom::MetricField& metric, int threads = 1) {
  if (h < 0.0) throw Error("mean curvature bound h must be nonnegative");
  BoundedMcReport r;
  r.h = h;
  r.first_variation = first_variation(V, X, metric, threads);
  r.norm_integral = norm_integral(V, X, metric, threads);
  r.quantity = r.first_variation + h * r.norm_integral;
  double sup = 0.0;
  for (const Atom& a : V.atoms) sup = std::max(sup, geom::sample_metric(metric, a.x).norm(X.value(a.x)));
  r.tolerance = 1e-6 * V.total_weight() * sup;
  r.passed = r.quantity >= -r.tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// Mean curvature

struct MeanCurvature {
  std::vector<Vec> H;             // per vertex, -grad area / vertex area
  std::vector<bool> boundary;     // vertex lies on the mesh boundary
  std::vector<double> vertex_area;
};

/// Area-gradient mean-curvature vector in the euclidean metric.
inline MeanCurvature mesh_mean_curvature(const SimplicialSurface& surface, const geom::MetricField& metric) {
  if (metric.describe() != "euclidean") throw Error("mesh mean curvature is only available in the euclidean metric");
  mesh::validate(surface);
  MeanCurvature out;
  out.boundary = mesh::boundary_vertices(surface);
  out.vertex_area = mesh::vertex_areas(surface);
  const std::vector<Vec> grad = mesh::area_gradient(surface, metric, 1);
  out.H.resize(grad.size());
  for (std::size_t v = 0; v < grad.size(); ++v) {
    out.H[v] = out.vertex_area[v] > 0.0 ? Vec(-grad[v] / out.vertex_area[v]) : Vec::Zero(surface.n);
  }
  return out;
}

struct McInterpretation {
  int interior_vertices = 0;
  int contact_vertices = 0;            // vertices on the domain boundary
  double max_interior_excess = -std::numeric_limits<double>::infinity();  // max |H| - h
  double max_contact_excess = -std::numeric_limits<double>::infinity();   // max min_b |H + b nu_N| - h over b >= 0
  bool passed = true;
};

/// Tests the two-part reading of delta V(X) + h int |X| >= 0 for inward X on
/// a smooth mesh: away from the domain boundary |H| <= h; at a point q on the
/// boundary, H = w - b nu_N with |w| <= h and b >= 0. Mesh-boundary vertices
/// not on the domain boundary are skipped. `rel_tol` is relative to h.
inline McInterpretation mean_curvature_interpretation(const SimplicialSurface& surface, const geom::Domain& domain, double h,
                                                      double rel_tol) {
  const MeanCurvature mc = mesh_mean_curvature(surface, domain.metric());
  McInterpretation r;
  const double slack = rel_tol * std::max(h, 1e-12);
  for (std::size_t v = 0; v < surface.vertices.size(); ++v) {
    const Vec& x = surface.vertices[v];
    if (domain.on_boundary(x)) {
      const Vec nu = domain.inward_normal(x);
      const double b = std::max(0.0, -mc.H[v].dot(nu));
      const double excess = (mc.H[v] + b * nu).norm() - h;
      ++r.contact_vertices;
      r.max_contact_excess = std::max(r.max_contact_excess, excess);
      if (excess > slack) r.passed = false;
    } else if (!mc.boundary[v]) {
      const double excess = mc.H[v].norm() - h;
      ++r.interior_vertices;
      r.max_interior_excess = std::max(r.max_interior_excess, excess);
      if (excess > slack) r.passed = false;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Integral decomposition

struct Decomposition {
  int d = 0;
  SimplicialSurface W;       // d copies of the boundary mesh
  SimplicialSurface Wprime;  // V - W
  int matched_simplices = 0;
};

namespace detail {

/// For each vertex of A, the index of a vertex of B within tol, or -1.
inline std::vector<int> match_vertices(const SimplicialSurface& A, const SimplicialSurface& B, double tol) {
  std::vector<int> out(A.vertices.size(), -1);
  std::vector<std::size_t> order(B.vertices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return B.vertices[a](0) < B.vertices[b](0); });
  std::vector<double> keys(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) keys[i] = B.vertices[order[i]](0);
  for (std::size_t v = 0; v < A.vertices.size(); ++v) {
    const Vec& x = A.vertices[v];
    auto it = std::lower_bound(keys.begin(), keys.end(), x(0) - tol);
    for (; it != keys.end() && *it <= x(0) + tol; ++it) {
      const std::size_t j = order[static_cast<std::size_t>(it - keys.begin())];
      if ((B.vertices[j] - x).norm() <= tol) {
        out[v] = static_cast<int>(j);
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Splits an integral mesh varifold V into W = d * boundary and W' = V - W,
/// where d is the least multiplicity with which V covers the boundary mesh.
/// V's boundary part must use the boundary mesh's triangulation (vertices are
/// matched within 1e-9 of the mesh scale). Multiplicities act as densities.
inline Decomposition decompose_integral(const SimplicialSurface& V, const SimplicialSurface& boundary) {
  mesh::validate(V);
  mesh::validate(boundary);
  if (V.m != boundary.m || V.n != boundary.n) throw MeshError("boundary mesh dimension does not match the varifold");
  for (std::size_t s = 0; s < V.multiplicity.size(); ++s) {
    const double w = V.multiplicity[s];
    if (w < 1.0 || std::abs(w - std::round(w)) > 1e-12) {
      throw HypothesisError("varifold is not integral: simplex " + std::to_string(s) + " has multiplicity " +
                            expr::detail::format_number(w));
    }
  }
  const double tol = 1e-9 * std::max(V.scale(), boundary.scale());
  const std::vector<int> vmap = detail::match_vertices(V, boundary, tol);

  std::map<mesh::Face, std::size_t> bsimplex;
  for (std::size_t s = 0; s < boundary.simplices.size(); ++s) {
    mesh::Face f = boundary.simplices[s];
    std::sort(f.begin(), f.end());
    bsimplex[f] = s;
  }
  std::vector<std::vector<std::size_t>> covering(boundary.simplices.size());
  for (std::size_t s = 0; s < V.simplices.size(); ++s) {
    mesh::Face f;
    bool all = true;
    for (int v : V.simplices[s]) {
      const int j = vmap[static_cast<std::size_t>(v)];
      if (j < 0) {
        all = false;
        break;
      }
      f.push_back(j);
    }
    if (!all) continue;
    std::sort(f.begin(), f.end());
    if (auto it = bsimplex.find(f); it != bsimplex.end()) covering[it->second].push_back(s);
  }

  Decomposition out;
  long d = std::numeric_limits<long>::max();
  for (const auto& c : covering) {
    long total = 0;
    for (std::size_t s : c) total += std::lround(V.multiplicity[s]);
    d = std::min(d, total);
  }
  out.d = boundary.simplices.empty() ? 0 : static_cast<int>(d);

  std::vector<double> remaining = V.multiplicity;
  for (const auto& c : covering) {
    double need = out.d;
    for (std::size_t s : c) {
      const double take = std::min(need, remaining[s]);
      remaining[s] -= take;
      need -= take;
      ++out.matched_simplices;
    }
    if (need > 0.0) throw HypothesisError("decomposition leaves a negative multiplicity");
  }
  out.Wprime.m = V.m;
  out.Wprime.n = V.n;
  std::vector<int> used(V.vertices.size(), -1);
  for (std::size_t s = 0; s < V.simplices.size(); ++s) {
    if (remaining[s] < 0.0) throw HypothesisError("decomposition leaves a negative multiplicity");
    if (remaining[s] == 0.0) continue;
    std::vector<int> idx;
    for (int v : V.simplices[s]) {
      int& u = used[static_cast<std::size_t>(v)];
      if (u < 0) {
        u = static_cast<int>(out.Wprime.vertices.size());
        out.Wprime.vertices.push_back(V.vertices[static_cast<std::size_t>(v)]);
      }
      idx.push_back(u);
    }
    out.Wprime.add_simplex(std::move(idx), remaining[s]);
  }
  out.W.m = V.m;
  out.W.n = V.n;
  if (out.d > 0) {
    out.W = boundary;
    for (double& w : out.W.multiplicity) w = out.d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Support distance

/// Distance from p to the nearest atom. Exact for constant metrics
/// (sqrt((x-p)^T G (x-p))); for varying metrics the g-length of the straight
/// segment, integrated with 16-point Gauss-Legendre, which bounds the geodesic
/// distance from above.
inline double support_distance(const DiscreteVarifold& V, const Vec& p, const geom::MetricField& metric) {
  if (V.empty()) throw Error("support distance of an empty varifold");
  double best = std::numeric_limits<double>::infinity();
  if (metric.is_constant()) {
    const Mat G = metric.at(p);
    for (const Atom& a : V.atoms) {
      const Vec d = a.x - p;
      best = std::min(best, std::sqrt(std::max(0.0, d.dot(G * d))));
    }
    return best;
  }
  static const double nodes[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
                                  0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
  static const double weights[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
                                    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};
  for (const Atom& a : V.atoms) {
    const Vec d = a.x - p;
    double len = 0.0;
    for (int k = 0; k < 8; ++k)
      for (int sgn : {-1, 1}) {
        const double s = 0.5 * (1.0 + sgn * nodes[k]);
        len += 0.5 * weights[k] * std::sqrt(std::max(0.0, d.dot(metric.at(p + s * d) * d)));
      }
    best = std::min(best, len);
  }
  return best;
}

inline std::vector<Vec> support_points(const DiscreteVarifold& V) {
  std::vector<Vec> out;
  out.reserve(V.atoms.size());
  for (const Atom& a : V.atoms) out.push_back(a.x);
  return out;
}

}  // namespace maxprin::varifold
