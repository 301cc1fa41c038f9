#pragma once

// Simplicial meshes, the SVMESH text format, quadrature, metric area and its
// vertex gradient, and a few standard mesh generators.

#include "maxprin/core.hpp"
#include "maxprin/geometry.hpp"
#include "maxprin/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace maxprin::mesh {

/// m-dimensional simplicial mesh in R^n with a positive multiplicity per simplex.
struct SimplicialSurface {
  int m = 0;
  int n = 0;
  std::vector<Vec> vertices;
  std::vector<std::vector<int>> simplices;
  std::vector<double> multiplicity;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_simplices() const { return simplices.size(); }

  void add_simplex(std::vector<int> s, double mult = 1.0) {
    simplices.push_back(std::move(s));
    multiplicity.push_back(mult);
  }

  /// Bounding-box diameter; the length scale for degeneracy tests.
  double scale() const {
    if (vertices.empty()) return 0.0;
    Vec lo = vertices.front(), hi = vertices.front();
    for (const Vec& v : vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
  }

  bool integral() const {
    return std::all_of(multiplicity.begin(), multiplicity.end(),
                       [](double w) { return w >= 1.0 && std::abs(w - std::round(w)) <= 1e-12; });
  }

  SimplicialSurface scaled_multiplicity(double c) const {
    SimplicialSurface out = *this;
    for (double& w : out.multiplicity) w *= c;
    return out;
  }
};

inline double factorial(int m) {
  double f = 1.0;
  for (int i = 2; i <= m; ++i) f *= i;
  return f;
}

/// Columns v_j - v_0 of simplex s.
inline Mat edge_matrix(const SimplicialSurface& mesh, std::size_t s) {
  const auto& idx = mesh.simplices[s];
  Mat E(mesh.n, mesh.m);
  const Vec& v0 = mesh.vertices[static_cast<std::size_t>(idx[0])];
  for (int j = 0; j < mesh.m; ++j) E.col(j) = mesh.vertices[static_cast<std::size_t>(idx[static_cast<std::size_t>(j + 1)])] - v0;
  return E;
}

inline double gram_volume(const Mat& E, const Mat& g, int m) {
  if (m == 0) return 1.0;
  const Mat M = E.transpose() * g * E;
  const double det = M.determinant();
  return det > 0.0 ? std::sqrt(det) / factorial(m) : 0.0;
}

inline double euclidean_volume(const SimplicialSurface& mesh, std::size_t s) {
  const Mat E = edge_matrix(mesh, s);
  return gram_volume(E, Mat::Identity(mesh.n, mesh.n), mesh.m);
}

inline double min_volume(const SimplicialSurface& mesh) { return 1e-12 * std::pow(mesh.scale(), mesh.m); }

/// Throws MeshError on bad indices, repeated vertices or degenerate simplices.
inline void validate(const SimplicialSurface& mesh) {
  require_dim(mesh.n);
  if (mesh.m < 1 || mesh.m > mesh.n) {
    throw MeshError("simplex dimension " + std::to_string(mesh.m) + " must lie in [1, " + std::to_string(mesh.n) + "]");
  }
  if (mesh.multiplicity.size() != mesh.simplices.size()) throw MeshError("multiplicity count does not match simplex count");
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (mesh.vertices[v].size() != mesh.n) throw MeshError("vertex " + std::to_string(v) + " has the wrong dimension");
    if (!mesh.vertices[v].allFinite()) throw MeshError("vertex " + std::to_string(v) + " is not finite");
  }
  const double floor = min_volume(mesh);
  const int nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t s = 0; s < mesh.simplices.size(); ++s) {
    const auto& idx = mesh.simplices[s];
    const std::string where = "simplex " + std::to_string(s);
    if (static_cast<int>(idx.size()) != mesh.m + 1) throw MeshError(where + " needs " + std::to_string(mesh.m + 1) + " vertices");
    for (std::size_t a = 0; a < idx.size(); ++a) {
      if (idx[a] < 0 || idx[a] >= nv) throw MeshError(where + ": vertex index " + std::to_string(idx[a]) + " out of range");
      for (std::size_t b = 0; b < a; ++b)
        if (idx[a] == idx[b]) throw MeshError(where + ": repeated vertex " + std::to_string(idx[a]));
    }
    if (!(mesh.multiplicity[s] > 0.0) || !std::isfinite(mesh.multiplicity[s])) {
      throw MeshError(where + ": multiplicity must be positive");
    }
    if (euclidean_volume(mesh, s) <= floor) throw MeshError(where + " is degenerate");
  }
}

// ---------------------------------------------------------------------------
// SVMESH

namespace detail {

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T parse_token(std::string_view tok, int line, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw MeshError("line " + std::to_string(line) + ": expected " + what + ", got '" + std::string(tok) + "'");
  }
  return value;
}

}  // namespace detail

/// Strict SVMESH reader: header "SVMESH m n", counts "V F", V vertex lines of
/// n floats, F simplex lines of m+1 zero-based indices and an optional
/// multiplicity. Only trailing blank lines are tolerated.
inline SimplicialSurface read_svmesh(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  while (!lines.empty() && detail::split_tokens(lines.back()).empty()) lines.pop_back();

  auto tokens_at = [&](std::size_t i) {
    if (i >= lines.size()) throw MeshError("line " + std::to_string(i + 1) + ": unexpected end of file");
    return detail::split_tokens(lines[i]);
  };
  SimplicialSurface mesh;
  auto header = tokens_at(0);
  if (header.size() != 3 || header[0] != "SVMESH") throw MeshError("line 1: expected 'SVMESH m n'");
  mesh.m = detail::parse_token<int>(header[1], 1, "integer m");
  mesh.n = detail::parse_token<int>(header[2], 1, "integer n");
  if (mesh.n < 1 || mesh.n > kMaxDim) throw MeshError("line 1: n must lie in [1, " + std::to_string(kMaxDim) + "]");
  if (mesh.m < 1 || mesh.m > mesh.n) throw MeshError("line 1: m must lie in [1, n]");

  auto counts = tokens_at(1);
  if (counts.size() != 2) throw MeshError("line 2: expected 'V F'");
  const long nv = detail::parse_token<long>(counts[0], 2, "vertex count");
  const long nf = detail::parse_token<long>(counts[1], 2, "simplex count");
  if (nv < 0 || nf < 0) throw MeshError("line 2: counts must be nonnegative");
  if (lines.size() != static_cast<std::size_t>(2 + nv + nf)) {
    throw MeshError("expected " + std::to_string(2 + nv + nf) + " lines, found " + std::to_string(lines.size()));
  }
  for (long v = 0; v < nv; ++v) {
    const int ln = static_cast<int>(v + 3);
    auto t = tokens_at(static_cast<std::size_t>(v + 2));
    if (static_cast<int>(t.size()) != mesh.n) {
      throw MeshError("line " + std::to_string(ln) + ": expected " + std::to_string(mesh.n) + " coordinates");
    }
    Vec x(mesh.n);
    for (int i = 0; i < mesh.n; ++i) x(i) = detail::parse_token<double>(t[static_cast<std::size_t>(i)], ln, "a number");
    mesh.vertices.push_back(x);
  }
  for (long f = 0; f < nf; ++f) {
    const int ln = static_cast<int>(nv + f + 3);
    auto t = tokens_at(static_cast<std::size_t>(nv + f + 2));
    if (static_cast<int>(t.size()) != mesh.m + 1 && static_cast<int>(t.size()) != mesh.m + 2) {
      throw MeshError("line " + std::to_string(ln) + ": expected " + std::to_string(mesh.m + 1) +
                      " indices and an optional multiplicity");
    }
    std::vector<int> idx(static_cast<std::size_t>(mesh.m + 1));
    for (int a = 0; a <= mesh.m; ++a) idx[static_cast<std::size_t>(a)] = detail::parse_token<int>(t[static_cast<std::size_t>(a)], ln, "an index");
    const double mult = static_cast<int>(t.size()) == mesh.m + 2 ? detail::parse_token<double>(t.back(), ln, "a multiplicity") : 1.0;
    mesh.add_simplex(std::move(idx), mult);
  }
  validate(mesh);
  return mesh;
}

inline SimplicialSurface read_svmesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path + "'");
  try {
    return read_svmesh(in);
  } catch (const MeshError& e) {
    throw MeshError(path + ": " + e.what());
  }
}

inline void write_svmesh(std::ostream& out, const SimplicialSurface& mesh) {
  const bool weighted = std::any_of(mesh.multiplicity.begin(), mesh.multiplicity.end(), [](double w) { return w != 1.0; });
  out << "SVMESH " << mesh.m << ' ' << mesh.n << '\n' << mesh.vertices.size() << ' ' << mesh.simplices.size() << '\n';
  for (const Vec& v : mesh.vertices) {
    for (int i = 0; i < mesh.n; ++i) out << (i ? " " : "") << expr::detail::format_number(v(i));
    out << '\n';
  }
  for (std::size_t s = 0; s < mesh.simplices.size(); ++s) {
    for (std::size_t a = 0; a < mesh.simplices[s].size(); ++a) out << (a ? " " : "") << mesh.simplices[s][a];
    if (weighted) out << ' ' << expr::detail::format_number(mesh.multiplicity[s]);
    out << '\n';
  }
}

inline void write_svmesh_file(const std::string& path, const SimplicialSurface& mesh) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file '" + path + "'");
  write_svmesh(out, mesh);
}

// ---------------------------------------------------------------------------
// Quadrature

/// Barycentric nodes (one column per node, m+1 rows) and weights summing to 1.
struct Quadrature {
  Eigen::MatrixXd bary;
  std::vector<double> weights;
};

/// Order 1 is the centroid. Order 2 is the symmetric (m+1)-point rule with
/// nodes at barycentric (a, b, .., b), b = (m+2-sqrt(m+2))/((m+1)(m+2)),
/// exact for quadratics: two Gauss points on a segment, (1/6, 1/6, 2/3) on a
/// triangle.
inline Quadrature simplex_quadrature(int m, int order) {
  Quadrature q;
  if (order == 1) {
    q.bary = Eigen::MatrixXd::Constant(m + 1, 1, 1.0 / (m + 1));
    q.weights = {1.0};
    return q;
  }
  if (order != 2) throw Error("quadrature order must be 1 or 2");
  const double b = (m + 2 - std::sqrt(double(m + 2))) / ((m + 1.0) * (m + 2.0));
  const double a = 1.0 - m * b;
  q.bary = Eigen::MatrixXd::Constant(m + 1, m + 1, b);
  for (int k = 0; k <= m; ++k) q.bary(k, k) = a;
  q.weights.assign(static_cast<std::size_t>(m + 1), 1.0 / (m + 1));
  return q;
}

inline Vec bary_point(const SimplicialSurface& mesh, std::size_t s, const Eigen::VectorXd& bary) {
  Vec x = Vec::Zero(mesh.n);
  const auto& idx = mesh.simplices[s];
  for (int a = 0; a <= mesh.m; ++a) x += bary(a) * mesh.vertices[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
  return x;
}

// ---------------------------------------------------------------------------
// Area and its gradient

/// Metric m-volume of one simplex (without multiplicity).
inline double simplex_area(const SimplicialSurface& mesh, std::size_t s, const geom::MetricField& metric, int order = 2) {
  const Mat E = edge_matrix(mesh, s);
  if (metric.is_constant()) return gram_volume(E, metric.at(mesh.vertices[static_cast<std::size_t>(mesh.simplices[s][0])]), mesh.m);
  const Quadrature q = simplex_quadrature(mesh.m, order);
  double a = 0.0;
  for (std::size_t k = 0; k < q.weights.size(); ++k) {
    a += q.weights[k] * gram_volume(E, metric.at(bary_point(mesh, s, q.bary.col(static_cast<Eigen::Index>(k)))), mesh.m);
  }
  return a;
}

/// Sum over simplices of multiplicity times metric m-volume.
inline double area(const SimplicialSurface& mesh, const geom::MetricField& metric, int order = 2, int threads = 1) {
  std::vector<double> terms(mesh.simplices.size());
  parallel_for(terms.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) terms[s] = mesh.multiplicity[s] * simplex_area(mesh, s, metric, order);
  });
  return pairwise_sum(terms);
}

inline double area(const SimplicialSurface& mesh) { return area(mesh, *geom::euclidean(mesh.n)); }

/// d area / d vertex. Each quadrature term J = sqrt(det(E^T g E))/m! has
/// dJ/dE = J g E M^{-1} and dJ/dx_k = J/2 tr(M^{-1} E^T d_k g E); these are
/// scattered to vertices through the edge and barycentric maps. Per-simplex
/// contributions are gathered in simplex order, so the result does not depend
/// on the thread count.
inline std::vector<Vec> area_gradient(const SimplicialSurface& mesh, const geom::MetricField& metric, int order = 2,
                                      int threads = 1) {
  const int m = mesh.m, n = mesh.n;
  const bool constant = metric.is_constant();
  const Quadrature q = simplex_quadrature(m, constant ? 1 : order);
  std::vector<std::vector<Vec>> local(mesh.simplices.size());
  parallel_for(local.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const Mat E = edge_matrix(mesh, s);
      std::vector<Vec> grads(static_cast<std::size_t>(m + 1), Vec::Zero(n));
      for (std::size_t k = 0; k < q.weights.size(); ++k) {
        const Eigen::VectorXd bary = q.bary.col(static_cast<Eigen::Index>(k));
        const Vec x = bary_point(mesh, s, bary);
        const Mat g = metric.at(x);
        const Mat M = E.transpose() * g * E;
        const double det = M.determinant();
        if (!(det > 0.0)) throw MeshError("simplex " + std::to_string(s) + " is degenerate");
        const double c = mesh.multiplicity[s] * q.weights[k] * std::sqrt(det) / factorial(m);
        const Mat Minv = M.inverse();
        const Mat dE = c * g * E * Minv;
        for (int j = 0; j < m; ++j) {
          grads[static_cast<std::size_t>(j + 1)] += dE.col(j);
          grads[0] -= dE.col(j);
        }
        if (!constant) {
          const geom::MetricDerivatives dg = metric.derivatives(x);
          Vec dx(n);
          for (int kk = 0; kk < n; ++kk) {
            dx(kk) = 0.5 * c * (Minv * E.transpose() * dg[static_cast<std::size_t>(kk)] * E).trace();
          }
          for (int a = 0; a <= m; ++a) grads[static_cast<std::size_t>(a)] += bary(a) * dx;
        }
      }
      local[s] = std::move(grads);
    }
  });
  std::vector<Vec> out(mesh.vertices.size(), Vec::Zero(n));
  for (std::size_t s = 0; s < local.size(); ++s)
    for (int a = 0; a <= m; ++a) out[static_cast<std::size_t>(mesh.simplices[s][static_cast<std::size_t>(a)])] += local[s][static_cast<std::size_t>(a)];
  return out;
}

// ---------------------------------------------------------------------------
// Topology

using Face = std::vector<int>;

/// Codimension-one faces with the simplices containing them.
inline std::map<Face, std::vector<std::size_t>> face_map(const SimplicialSurface& mesh) {
  std::map<Face, std::vector<std::size_t>> faces;
  for (std::size_t s = 0; s < mesh.simplices.size(); ++s) {
    const auto& idx = mesh.simplices[s];
    for (int skip = 0; skip <= mesh.m; ++skip) {
      Face f;
      for (int a = 0; a <= mesh.m; ++a)
        if (a != skip) f.push_back(idx[static_cast<std::size_t>(a)]);
      std::sort(f.begin(), f.end());
      faces[f].push_back(s);
    }
  }
  return faces;
}

/// Flags vertices on the mesh boundary; throws MeshError when a face is shared
/// by more than two simplices.
inline std::vector<bool> boundary_vertices(const SimplicialSurface& mesh) {
  std::vector<bool> flags(mesh.vertices.size(), false);
  for (const auto& [face, owners] : face_map(mesh)) {
    if (owners.size() > 2) throw MeshError("non-manifold mesh: face at vertex " + std::to_string(face.front()) + " has " +
                                           std::to_string(owners.size()) + " simplices");
    if (owners.size() == 1)
      for (int v : face) flags[static_cast<std::size_t>(v)] = true;
  }
  return flags;
}

inline double max_edge_length(const SimplicialSurface& mesh) {
  double best = 0.0;
  for (const auto& idx : mesh.simplices)
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < a; ++b)
        best = std::max(best, (mesh.vertices[static_cast<std::size_t>(idx[a])] - mesh.vertices[static_cast<std::size_t>(idx[b])]).norm());
  return best;
}

inline double min_edge_length(const SimplicialSurface& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& idx : mesh.simplices)
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < a; ++b)
        best = std::min(best, (mesh.vertices[static_cast<std::size_t>(idx[a])] - mesh.vertices[static_cast<std::size_t>(idx[b])]).norm());
  return best;
}

/// Each vertex's share of the area. Triangles use the mixed Voronoi split
/// (Voronoi cells, with the obtuse-triangle fallback of half the area at the
/// obtuse corner and a quarter at the others); other dimensions split each
/// simplex evenly among its vertices.
inline std::vector<double> vertex_areas(const SimplicialSurface& mesh) {
  std::vector<double> out(mesh.vertices.size(), 0.0);
  for (std::size_t s = 0; s < mesh.simplices.size(); ++s) {
    const auto& idx = mesh.simplices[s];
    const double w = mesh.multiplicity[s];
    const double vol = euclidean_volume(mesh, s);
    if (mesh.m != 2) {
      for (int v : idx) out[static_cast<std::size_t>(v)] += w * vol / (mesh.m + 1);
      continue;
    }
    const Vec* P[3];
    for (int a = 0; a < 3; ++a) P[a] = &mesh.vertices[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
    double cot[3];
    int obtuse = -1;
    for (int a = 0; a < 3; ++a) {
      const Vec u = *P[(a + 1) % 3] - *P[a], v = *P[(a + 2) % 3] - *P[a];
      const double d = u.dot(v);
      if (d < 0.0) obtuse = a;
      cot[a] = d / (2.0 * vol);  // |u x v| = 2 * area
    }
    for (int a = 0; a < 3; ++a) {
      double share;
      if (obtuse < 0) {
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        share = ((*P[b] - *P[a]).squaredNorm() * cot[c] + (*P[c] - *P[a]).squaredNorm() * cot[b]) / 8.0;
      } else {
        share = (a == obtuse ? 0.5 : 0.25) * vol;
      }
      out[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])] += w * share;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators

inline Vec axis_vec(int n, std::initializer_list<double> head) {
  Vec v = Vec::Zero(n);
  int i = 0;
  for (double x : head) v(i++) = x;
  return v;
}

/// Unit square [0,1]^2 in the first two coordinates of R^n, two triangles.
inline SimplicialSurface unit_square(int n = 3) {
  SimplicialSurface mesh;
  mesh.m = 2;
  mesh.n = n;
  mesh.vertices = {axis_vec(n, {0, 0}), axis_vec(n, {1, 0}), axis_vec(n, {1, 1}), axis_vec(n, {0, 1})};
  mesh.add_simplex({0, 1, 2});
  mesh.add_simplex({0, 2, 3});
  return mesh;
}

/// Square grid patch: origin + s*a + t*b for s, t in [0, 1], k cells per side.
inline SimplicialSurface grid_patch(const Vec& origin, const Vec& a, const Vec& b, int k) {
  SimplicialSurface mesh;
  mesh.m = 2;
  mesh.n = static_cast<int>(origin.size());
  for (int j = 0; j <= k; ++j)
    for (int i = 0; i <= k; ++i) mesh.vertices.push_back(origin + (double(i) / k) * a + (double(j) / k) * b);
  auto id = [k](int i, int j) { return j * (k + 1) + i; };
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) {
      mesh.add_simplex({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.add_simplex({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return mesh;
}

/// Disk of the given radius in the plane through center spanned by the
/// orthonormal pair (a, b): a center vertex and `rings` rings, ring j holding
/// 6j vertices, so triangles stay close to equilateral.
inline SimplicialSurface disk(const Vec& center, const Vec& a, const Vec& b, double radius, int rings) {
  SimplicialSurface mesh;
  mesh.m = 2;
  mesh.n = static_cast<int>(center.size());
  mesh.vertices.push_back(center);
  std::vector<int> start = {0};
  for (int j = 1; j <= rings; ++j) {
    start.push_back(static_cast<int>(mesh.vertices.size()));
    const double r = radius * j / rings;
    for (int k = 0; k < 6 * j; ++k) {
      const double th = 2.0 * std::numbers::pi * k / (6 * j);
      mesh.vertices.push_back(center + r * (std::cos(th) * a + std::sin(th) * b));
    }
  }
  for (int j = 1; j <= rings; ++j) {
    const int outer = 6 * j, inner = 6 * (j - 1);
    auto O = [&](int k) { return start[static_cast<std::size_t>(j)] + (k % outer); };
    auto I = [&](int k) { return j == 1 ? 0 : start[static_cast<std::size_t>(j - 1)] + (k % inner); };
    // Walk the outer ring; each sextant of ring j has j outer edges facing
    // j-1 inner edges.
    for (int sext = 0; sext < 6; ++sext) {
      for (int t = 0; t < j; ++t) {
        const int ko = sext * j + t;
        const int ki = sext * (j - 1) + t;
        mesh.add_simplex({I(ki), O(ko), O(ko + 1)});
        if (t < j - 1) mesh.add_simplex({I(ki), O(ko + 1), I(ki + 1)});
      }
    }
  }
  return mesh;
}

inline SimplicialSurface disk(double radius, int rings) {
  return disk(Vec::Zero(3), axis_vec(3, {1, 0, 0}), axis_vec(3, {0, 1, 0}), radius, rings);
}

/// Indices of the outer ring of a disk() mesh.
inline std::vector<int> disk_rim(int rings) {
  std::vector<int> out;
  const int first = 1 + 3 * rings * (rings - 1);
  for (int k = 0; k < 6 * rings; ++k) out.push_back(first + k);
  return out;
}

/// Latitude-longitude sphere with nlat bands and nlon meridians.
inline SimplicialSurface uv_sphere(double radius, int nlat, int nlon, const Vec& center = Vec::Zero(3)) {
  SimplicialSurface mesh;
  mesh.m = 2;
  mesh.n = 3;
  mesh.vertices.push_back(center + axis_vec(3, {0, 0, radius}));
  for (int i = 1; i < nlat; ++i) {
    const double th = std::numbers::pi * i / nlat;
    for (int j = 0; j < nlon; ++j) {
      const double ph = 2.0 * std::numbers::pi * j / nlon;
      mesh.vertices.push_back(center + radius * axis_vec(3, {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)}));
    }
  }
  mesh.vertices.push_back(center + axis_vec(3, {0, 0, -radius}));
  const int south = static_cast<int>(mesh.vertices.size()) - 1;
  auto id = [nlon](int i, int j) { return 1 + (i - 1) * nlon + ((j % nlon) + nlon) % nlon; };
  for (int j = 0; j < nlon; ++j) mesh.add_simplex({0, id(1, j), id(1, j + 1)});
  for (int i = 1; i < nlat - 1; ++i)
    for (int j = 0; j < nlon; ++j) {
      mesh.add_simplex({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.add_simplex({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  for (int j = 0; j < nlon; ++j) mesh.add_simplex({id(nlat - 1, j), south, id(nlat - 1, j + 1)});
  return mesh;
}

/// Subdivided icosahedron projected to the sphere; 20 * 4^level triangles.
inline SimplicialSurface icosphere(double radius, int level, const Vec& center = Vec::Zero(3)) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec> v = {axis_vec(3, {-1, t, 0}), axis_vec(3, {1, t, 0}), axis_vec(3, {-1, -t, 0}), axis_vec(3, {1, -t, 0}),
                        axis_vec(3, {0, -1, t}), axis_vec(3, {0, 1, t}), axis_vec(3, {0, -1, -t}), axis_vec(3, {0, 1, -t}),
                        axis_vec(3, {t, 0, -1}), axis_vec(3, {t, 0, 1}), axis_vec(3, {-t, 0, -1}), axis_vec(3, {-t, 0, 1})};
  for (Vec& x : v) x.normalize();
  std::vector<std::vector<int>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                                     {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                                     {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      Vec x = (v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized();
      v.push_back(x);
      const int id = static_cast<int>(v.size()) - 1;
      mid[key] = id;
      return id;
    };
    std::vector<std::vector<int>> next;
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  SimplicialSurface mesh;
  mesh.m = 2;
  mesh.n = 3;
  for (const Vec& x : v) mesh.vertices.push_back(center + radius * x);
  for (auto& tri : f) mesh.add_simplex(tri);
  return mesh;
}

/// Open cylinder x1^2 + x2^2 = R^2, x3 in [0, height].
inline SimplicialSurface cylinder(double radius, double height, int around, int along) {
  SimplicialSurface mesh;
  mesh.m = 2;
  mesh.n = 3;
  for (int i = 0; i <= along; ++i)
    for (int j = 0; j < around; ++j) {
      // Alternate rows are staggered by half a cell to keep triangles even.
      const double ph = 2.0 * std::numbers::pi * (j + 0.5 * (i % 2)) / around;
      mesh.vertices.push_back(axis_vec(3, {radius * std::cos(ph), radius * std::sin(ph), height * i / along}));
    }
  auto id = [around](int i, int j) { return i * around + ((j % around) + around) % around; };
  for (int i = 0; i < along; ++i)
    for (int j = 0; j < around; ++j) {
      if (i % 2 == 0) {
        mesh.add_simplex({id(i, j), id(i, j + 1), id(i + 1, j)});
        mesh.add_simplex({id(i, j + 1), id(i + 1, j + 1), id(i + 1, j)});
      } else {
        mesh.add_simplex({id(i, j), id(i, j + 1), id(i + 1, j + 1)});
        mesh.add_simplex({id(i, j), id(i + 1, j + 1), id(i + 1, j)});
      }
    }
  return mesh;
}

/// Cap of the sphere |x - center| = R around the unit direction axis, with
/// angular radius theta; the ring layout of disk() mapped by the exponential
/// map, so the rim is the last ring.
inline SimplicialSurface sphere_cap(const Vec& center, double R, const Vec& axis, double theta, int rings) {
  Vec a = Vec::Zero(3), b;
  a((std::abs(axis(0)) < 0.9) ? 0 : 1) = 1.0;
  a = (a - a.dot(axis) * axis).normalized();
  b = Vec(3);
  b << axis(1) * a(2) - axis(2) * a(1), axis(2) * a(0) - axis(0) * a(2), axis(0) * a(1) - axis(1) * a(0);
  SimplicialSurface mesh = disk(Vec::Zero(3), a, b, theta, rings);
  for (Vec& x : mesh.vertices) {
    const double ang = x.norm();
    const Vec dir = ang > 0.0 ? Vec(x / ang) : a;
    x = center + R * (std::cos(ang) * axis + std::sin(ang) * dir);
  }
  return mesh;
}

/// Closed polygon with k segments on the circle of the given radius in the
/// first two coordinates of R^n.
inline SimplicialSurface circle_polygon(double radius, int k, int n = 2) {
  SimplicialSurface mesh;
  mesh.m = 1;
  mesh.n = n;
  for (int j = 0; j < k; ++j) {
    const double th = 2.0 * std::numbers::pi * j / k;
    mesh.vertices.push_back(axis_vec(n, {radius * std::cos(th), radius * std::sin(th)}));
  }
  for (int j = 0; j < k; ++j) mesh.add_simplex({j, (j + 1) % k});
  return mesh;
}

/// Straight polyline from a to b with k segments.
inline SimplicialSurface segment(const Vec& a, const Vec& b, int k) {
  SimplicialSurface mesh;
  mesh.m = 1;
  mesh.n = static_cast<int>(a.size());
  for (int j = 0; j <= k; ++j) mesh.vertices.push_back(a + (double(j) / k) * (b - a));
  for (int j = 0; j < k; ++j) mesh.add_simplex({j, j + 1});
  return mesh;
}

/// Concatenation; vertices are not merged.
inline SimplicialSurface merge(const SimplicialSurface& A, const SimplicialSurface& B) {
  if (A.vertices.empty()) return B;
  if (B.vertices.empty()) return A;
  if (A.m != B.m || A.n != B.n) throw MeshError("cannot merge meshes of different dimensions");
  SimplicialSurface out = A;
  const int off = static_cast<int>(A.vertices.size());
  out.vertices.insert(out.vertices.end(), B.vertices.begin(), B.vertices.end());
  for (std::size_t s = 0; s < B.simplices.size(); ++s) {
    std::vector<int> idx = B.simplices[s];
    for (int& v : idx) v += off;
    out.add_simplex(std::move(idx), B.multiplicity[s]);
  }
  return out;
}

}  // namespace maxprin::mesh
