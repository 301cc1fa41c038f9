#pragma once

// Projected gradient descent on mesh vertex positions under u0 >= 0 with a
// fixed anchor set.

#include "maxprin/core.hpp"
#include "maxprin/geometry.hpp"
#include "maxprin/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace maxprin::minimizer {

using geom::Domain;
using mesh::SimplicialSurface;

/// x itself when u0(x) >= 0; otherwise the boundary point reached by damped
/// Newton along grad u0. Throws ConvergenceError after 50 iterations.
inline Vec project_to_domain(const Vec& x, const Domain& domain) {
  if (domain.u0(x) >= 0.0) return x;
  return domain.project_to_boundary(x, 50);
}

struct MinimizeOptions {
  double tolerance = 1e-6;  // on the projected gradient norm
  int max_iterations = 5000;
  double armijo = 1e-4;
  int threads = 1;
  bool remesh = true;
  double max_aspect = 20.0;
  int remesh_every = 10;
  std::optional<double> initial_step;
  int battery_size = 64;
  std::uint64_t seed = 1;
};

struct MinimizeProblem {
  std::shared_ptr<const Domain> domain;
  SimplicialSurface mesh;
  std::vector<int> anchors;
  MinimizeOptions options;
};

struct IterationRecord {
  int iteration = 0;
  double area = 0.0;
  double residual = 0.0;
  double boundary_distance = 0.0;
  double step = 0.0;
  bool remeshed = false;  // produced by remesh_slivers, not a descent step
};

struct MinimizeResult {
  SimplicialSurface mesh;
  std::vector<int> anchors;
  std::vector<IterationRecord> history;
  bool converged = false;
  std::string stop_reason;
  int iterations = 0;
  double residual = 0.0;
  double area = 0.0;
  double battery_residual = 0.0;
  int flips = 0;
  int splits = 0;
};

/// Distance from the nearest vertex to the boundary, via projection.
inline double boundary_distance(const SimplicialSurface& s, const Domain& domain) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec& v : s.vertices) {
    try {
      best = std::min(best, (domain.project_to_boundary(v) - v).norm());
    } catch (const Error&) {
    }
  }
  return best;
}

/// Descent direction -grad area with anchors frozen and, on the boundary,
/// the outward normal part removed.
inline std::vector<Vec> projected_direction(const SimplicialSurface& s, const std::vector<Vec>& grad,
                                            const std::vector<bool>& anchored, const Domain& domain) {
  std::vector<Vec> d(grad.size());
  const double tol = domain.boundary_tolerance();
  for (std::size_t v = 0; v < grad.size(); ++v) {
    d[v] = anchored[v] ? Vec(Vec::Zero(s.n)) : Vec(-grad[v]);
    if (anchored[v]) continue;
    if (domain.u0(s.vertices[v]) <= tol) {
      const Vec n = domain.u0_jet(s.vertices[v]).grad.normalized();
      const double out = d[v].dot(n);
      if (out < 0.0) d[v] -= out * n;
    }
  }
  return d;
}

inline double norm_of(const std::vector<Vec>& d) {
  double acc = 0.0;
  for (const Vec& x : d) acc += x.squaredNorm();
  return std::sqrt(acc);
}

/// Worst aspect ratio L^2 / (2 A) of a triangle (longest edge over its altitude).
inline double triangle_aspect(const SimplicialSurface& s, std::size_t t) {
  const auto& idx = s.simplices[t];
  double L2 = 0.0;
  for (int a = 0; a < 3; ++a)
    L2 = std::max(L2, (s.vertices[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])] -
                       s.vertices[static_cast<std::size_t>(idx[static_cast<std::size_t>((a + 1) % 3)])])
                          .squaredNorm());
  return L2 / (2.0 * mesh::euclidean_volume(s, t));
}

namespace detail {

inline Vec tri_normal(const SimplicialSurface& s, int a, int b, int c) {
  const Vec& A = s.vertices[static_cast<std::size_t>(a)];
  const Vec u = s.vertices[static_cast<std::size_t>(b)] - A, v = s.vertices[static_cast<std::size_t>(c)] - A;
  Vec n(3);
  n << u(1) * v(2) - u(2) * v(1), u(2) * v(0) - u(0) * v(2), u(0) * v(1) - u(1) * v(0);
  return n;
}

}  // namespace detail

/// One pass over triangles with aspect ratio above the limit: flip the
/// longest edge when that lowers the worst aspect of the pair without folding,
/// else split it at its (projected) midpoint when that helps. Mesh-boundary
/// edges are left alone. Returns {flips, splits}.
inline std::pair<int, int> remesh_slivers(SimplicialSurface& s, std::vector<bool>& anchored, const Domain& domain,
                                          double max_aspect) {
  if (s.m != 2 || s.n != 3) return {0, 0};
  int flips = 0, splits = 0;
  for (std::size_t t = 0; t < s.simplices.size(); ++t) {
    if (triangle_aspect(s, t) <= max_aspect) continue;
    auto idx = s.simplices[t];
    int la = 0;
    double L2 = -1.0;
    for (int a = 0; a < 3; ++a) {
      const double l = (s.vertices[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])] -
                        s.vertices[static_cast<std::size_t>(idx[static_cast<std::size_t>((a + 1) % 3)])])
                           .squaredNorm();
      if (l > L2) {
        L2 = l;
        la = a;
      }
    }
    const int p = idx[static_cast<std::size_t>(la)], q = idx[static_cast<std::size_t>((la + 1) % 3)];
    const int r = idx[static_cast<std::size_t>((la + 2) % 3)];
    std::size_t other = s.simplices.size();
    int o = -1;
    for (std::size_t u = 0; u < s.simplices.size() && o < 0; ++u) {
      if (u == t) continue;
      const auto& w = s.simplices[u];
      const bool hp = std::find(w.begin(), w.end(), p) != w.end(), hq = std::find(w.begin(), w.end(), q) != w.end();
      if (hp && hq) {
        other = u;
        for (int v : w)
          if (v != p && v != q) o = v;
      }
    }
    if (o < 0) continue;
    const SimplicialSurface before = s;
    const Vec n0 = detail::tri_normal(s, p, q, r) + detail::tri_normal(s, q, p, o);
    const double worst_before = std::max(triangle_aspect(s, t), triangle_aspect(s, other));
    // Flip pq -> ro.
    bool exists = false;
    for (const auto& w : s.simplices)
      if (std::find(w.begin(), w.end(), r) != w.end() && std::find(w.begin(), w.end(), o) != w.end()) exists = true;
    if (!exists) {
      s.simplices[t] = {p, o, r};
      s.simplices[other] = {q, r, o};
      const bool fold = detail::tri_normal(s, p, o, r).dot(n0) <= 0.0 || detail::tri_normal(s, q, r, o).dot(n0) <= 0.0;
      if (!fold && mesh::euclidean_volume(s, t) > mesh::min_volume(s) && mesh::euclidean_volume(s, other) > mesh::min_volume(s) &&
          std::max(triangle_aspect(s, t), triangle_aspect(s, other)) < worst_before) {
        ++flips;
        continue;
      }
      s = before;
    }
    // Split pq at its midpoint.
    const Vec mid = project_to_domain(0.5 * (s.vertices[static_cast<std::size_t>(p)] + s.vertices[static_cast<std::size_t>(q)]), domain);
    const int m = static_cast<int>(s.vertices.size());
    s.vertices.push_back(mid);
    anchored.push_back(false);
    const double wt = s.multiplicity[t], wo = s.multiplicity[other];
    s.simplices[t] = {p, m, r};
    s.simplices[other] = {q, m, o};
    s.add_simplex({m, q, r}, wt);
    s.add_simplex({m, p, o}, wo);
    double worst_after = 0.0;
    for (std::size_t u : {t, other, s.simplices.size() - 2, s.simplices.size() - 1}) {
      const double vol = mesh::euclidean_volume(s, u);
      worst_after = std::max(worst_after, vol > mesh::min_volume(s) ? triangle_aspect(s, u) : std::numeric_limits<double>::infinity());
    }
    if (worst_after < worst_before) {
      ++splits;
    } else {
      s = before;
      anchored.pop_back();
    }
  }
  return {flips, splits};
}

/// Residual of the first-order minimizing condition over a seeded battery of
/// admissible test fields, each given by its vertex values: a bump of random
/// direction around a random free vertex, radius limited by the distance to
/// the anchors, reflected at vertices on the boundary where it points out.
/// The pairing sum_v grad_v(area) . X_v is the exact first variation of the
/// piecewise-linear surface along the interpolated field. Returns
/// max(0, -min pairing / |X|_2).
inline double stationarity_residual(const SimplicialSurface& s, const Domain& domain, const std::vector<int>& anchors,
                                    int battery_size, std::uint64_t seed = 1, int threads = 1) {
  const std::vector<Vec> grad = mesh::area_gradient(s, domain.metric(), 2, threads);
  std::vector<bool> anchored(s.vertices.size(), false);
  for (int a : anchors) anchored[static_cast<std::size_t>(a)] = true;
  std::vector<std::size_t> free;
  for (std::size_t v = 0; v < s.vertices.size(); ++v)
    if (!anchored[v]) free.push_back(v);
  if (free.empty()) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N01;
  std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
  const double scale = s.scale();
  const double tol = domain.boundary_tolerance();
  double worst = 0.0;
  for (int k = 0; k < battery_size; ++k) {
    const Vec c = s.vertices[free[pick(rng)]];
    double r = 0.5 * scale;
    for (int a : anchors) r = std::min(r, (s.vertices[static_cast<std::size_t>(a)] - c).norm());
    Vec dir(s.n);
    for (int i = 0; i < s.n; ++i) dir(i) = N01(rng);
    dir.normalize();
    double pairing = 0.0, norm2 = 0.0;
    for (std::size_t v = 0; v < s.vertices.size(); ++v) {
      if (anchored[v]) continue;
      const double w = 1.0 - (s.vertices[v] - c).squaredNorm() / (r * r);
      if (w <= 0.0) continue;
      Vec X = w * w * w * dir;
      if (domain.u0(s.vertices[v]) <= tol) {
        const Vec n = domain.u0_jet(s.vertices[v]).grad.normalized();
        const double out = X.dot(n);
        if (out < 0.0) X -= 2.0 * out * n;
      }
      pairing += grad[v].dot(X);
      norm2 += X.squaredNorm();
    }
    if (norm2 > 0.0) worst = std::max(worst, -pairing / std::sqrt(norm2));
  }
  return worst;
}

/// Projected gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking. The first trial step is 0.5 h_min^2 / max vertex area, the
/// stable explicit step of the lumped-mass curvature flow.
inline MinimizeResult minimize(const MinimizeProblem& problem) {
  if (!problem.domain) throw Error("minimize needs a domain");
  const Domain& domain = *problem.domain;
  const MinimizeOptions& opt = problem.options;
  const geom::MetricField& metric = domain.metric();
  MinimizeResult res;
  SimplicialSurface s = problem.mesh;
  mesh::validate(s);
  std::vector<bool> anchored(s.vertices.size(), false);
  for (int a : problem.anchors) {
    if (a < 0 || a >= static_cast<int>(s.vertices.size())) throw Error("anchor index " + std::to_string(a) + " out of range");
    if (!(domain.u0(s.vertices[static_cast<std::size_t>(a)]) > domain.boundary_tolerance())) {
      throw Error("anchor vertex " + std::to_string(a) + " does not lie strictly inside the domain");
    }
    anchored[static_cast<std::size_t>(a)] = true;
  }
  for (std::size_t v = 0; v < s.vertices.size(); ++v)
    if (!anchored[v]) s.vertices[v] = project_to_domain(s.vertices[v], domain);
  mesh::validate(s);

  auto initial_step = [&] {
    if (opt.initial_step) return *opt.initial_step;
    const auto va = mesh::vertex_areas(s);
    const double amax = *std::max_element(va.begin(), va.end());
    const double h = mesh::min_edge_length(s);
    return 0.5 * h * h / amax;
  };
  double step = initial_step();
  const double floor = mesh::min_volume(s);
  double A = mesh::area(s, metric, 2, opt.threads);
  std::vector<Vec> grad = mesh::area_gradient(s, metric, 2, opt.threads);
  std::vector<Vec> d = projected_direction(s, grad, anchored, domain);
  double residual = norm_of(d);
  int increases = 0;
  std::vector<Vec> prev_x, prev_g;

  auto record = [&](int it, double st, bool remeshed = false) {
    res.history.push_back({it, A, residual, boundary_distance(s, domain), st, remeshed});
  };
  record(0, 0.0);
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (residual <= opt.tolerance) {
      res.converged = true;
      res.stop_reason = "tolerance";
      break;
    }
    if (opt.remesh && s.m == 2 && it > 0 && it % opt.remesh_every == 0) {
      const auto [f, sp] = remesh_slivers(s, anchored, domain, opt.max_aspect);
      if (f + sp > 0) {
        res.flips += f;
        res.splits += sp;
        A = mesh::area(s, metric, 2, opt.threads);
        grad = mesh::area_gradient(s, metric, 2, opt.threads);
        d = projected_direction(s, grad, anchored, domain);
        residual = norm_of(d);
        prev_x.clear();
        record(it, 0.0, true);
        continue;
      }
    }
    // Barzilai-Borwein step from the last accepted move.
    if (!prev_x.empty()) {
      double sy = 0.0, ss = 0.0;
      for (std::size_t v = 0; v < s.vertices.size(); ++v) {
        if (anchored[v]) continue;
        const Vec dx = s.vertices[v] - prev_x[v];
        ss += dx.squaredNorm();
        sy += dx.dot(grad[v] - prev_g[v]);
      }
      if (sy > 0.0 && std::isfinite(ss / sy)) step = ss / sy;
    }
    bool accepted = false;
    SimplicialSurface trial = s;
    double Anew = A;
    for (int h = 0; h < 60 && !accepted; ++h, step *= 0.5) {
      double decrease = 0.0;
      bool ok = true;
      for (std::size_t v = 0; v < s.vertices.size(); ++v) {
        if (anchored[v]) continue;
        try {
          trial.vertices[v] = project_to_domain(s.vertices[v] + step * d[v], domain);
        } catch (const Error&) {
          ok = false;
          break;
        }
        decrease += grad[v].dot(trial.vertices[v] - s.vertices[v]);
      }
      if (!ok) continue;
      bool degenerate = false;
      for (std::size_t t = 0; t < trial.simplices.size() && !degenerate; ++t)
        degenerate = mesh::euclidean_volume(trial, t) <= floor;
      if (degenerate) continue;
      Anew = mesh::area(trial, metric, 2, opt.threads);
      if (Anew <= A + opt.armijo * std::min(decrease, 0.0)) accepted = true;
      if (accepted) break;
    }
    if (!accepted) {
      res.stop_reason = "line search stalled";
      break;
    }
    increases = Anew > A * (1.0 + 1e-12) ? increases + 1 : 0;
    if (increases >= 10) throw ConvergenceError("area increased over 10 consecutive accepted steps");
    prev_x = s.vertices;
    prev_g = grad;
    s = std::move(trial);
    A = Anew;
    grad = mesh::area_gradient(s, metric, 2, opt.threads);
    d = projected_direction(s, grad, anchored, domain);
    residual = norm_of(d);
    record(it + 1, step);
  }
  if (res.stop_reason.empty()) {
    if (residual <= opt.tolerance) {
      res.converged = true;
      res.stop_reason = "tolerance";
    } else {
      res.stop_reason = "iteration cap";
    }
  }
  res.iterations = it;
  res.residual = residual;
  res.area = A;
  res.anchors.clear();
  for (std::size_t v = 0; v < anchored.size(); ++v)
    if (anchored[v]) res.anchors.push_back(static_cast<int>(v));
  res.battery_residual = stationarity_residual(s, domain, res.anchors, opt.battery_size, opt.seed, opt.threads);
  res.mesh = std::move(s);
  return res;
}

inline void write_convergence_csv(std::ostream& out, const std::vector<IterationRecord>& history) {
  out << "iteration,area,residual,min_boundary_distance\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << expr::detail::format_number(r.area) << ',' << expr::detail::format_number(r.residual) << ','
        << expr::detail::format_number(r.boundary_distance) << '\n';
  }
}

}  // namespace maxprin::minimizer
