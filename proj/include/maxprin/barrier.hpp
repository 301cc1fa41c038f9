#pragma once

// Barrier vectorfield X = phi(u) nu near a strongly m-convex boundary point.

#include "maxprin/core.hpp"
#include "maxprin/geometry.hpp"
#include "maxprin/parallel.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace maxprin::barrier {

using geom::Domain;
using geom::MetricSample;
using geom::ScalarJet;

// ---------------------------------------------------------------------------
// Cutoff

/// phi(t) = exp(1/(t - eps)) on [0, eps), 0 for t >= eps.
inline double cutoff(double t, double eps) {
  if (t < 0.0) throw DomainError("cutoff is undefined for t < 0");
  if (t >= eps) return 0.0;
  return std::exp(1.0 / (t - eps));
}

inline double cutoff_derivative(double t, double eps) {
  if (t < 0.0) throw DomainError("cutoff is undefined for t < 0");
  if (t >= eps) return 0.0;
  const double d = t - eps;
  return -std::exp(1.0 / d) / (d * d);
}

/// eps = min(K^{-1/2}, chart_bound). K = 0 imposes no curvature limit.
inline double select_epsilon(double K, double chart_bound) {
  if (!(K >= 0.0) || !std::isfinite(K)) throw GeometryError("curvature bound must be finite and nonnegative");
  if (!(chart_bound > 0.0)) throw GeometryError("no positive epsilon fits the chart");
  const double eps = K > 0.0 ? std::min(1.0 / std::sqrt(K), chart_bound) : chart_bound;
  return eps;
}

// ---------------------------------------------------------------------------
// Contact surface and signed distance

/// Signed distance to Sigma at a point with its first two derivatives and the
/// principal curvatures of the level set through the point.
struct Projection {
  Vec foot;
  double u = 0.0;
  Vec du;          // covector
  Vec nu;          // g-unit vector, grad u
  Mat hess_coord;  // d_i d_j u
  Mat hess_cov;    // covariant Hessian
  Vec curvatures;  // ascending, w.r.t. nu
  Mat directions;  // g-orthonormal principal directions
};

/// Sigma = {F = 0} with F(x) = u0(x)/|du0(p)|_g + |x - p|_{g(p)}^4, which lies
/// outside N except at p and agrees with the boundary to second order there.
/// In flat test mode the quartic term is dropped and Sigma is the boundary.
class SigmaSurface {
 public:
  // force_shooting selects the geodesic route even for a constant metric.
  SigmaSurface(std::shared_ptr<const Domain> domain, Vec p, bool flat_test_mode = false, double shooting_step = 1e-3,
               bool force_shooting = false)
      : domain_(std::move(domain)), p_(std::move(p)), flat_(flat_test_mode), step_(shooting_step) {
    const int n = domain_->dim();
    if (p_.size() != n) throw Error("base point has the wrong dimension");
    if (!domain_->on_boundary(p_)) throw GeometryError("base point is not on the boundary");
    const MetricSample s = geom::sample_metric(domain_->metric(), p_);
    Gp_ = s.g;
    const Vec du0 = domain_->u0_jet(p_).grad;
    scale_ = std::sqrt(du0.dot(s.ginv * du0));
    if (!(scale_ > 0.0)) throw GeometryError("boundary function has vanishing gradient at the base point");
    constant_ = domain_->metric().is_constant() && !force_shooting;
    if (constant_) {
      G_ = Gp_;
      Ginv_ = s.ginv;
    }
  }

  const Domain& domain() const { return *domain_; }
  std::shared_ptr<const Domain> domain_ptr() const { return domain_; }
  const Vec& base_point() const { return p_; }
  const Mat& base_metric() const { return Gp_; }
  bool flat_test_mode() const { return flat_; }
  bool constant_metric() const { return constant_; }
  double shooting_step() const { return step_; }
  int dim() const { return domain_->dim(); }

  double base_distance(const Vec& x) const {
    const Vec d = x - p_;
    return std::sqrt(d.dot(Gp_ * d));
  }

  double value(const Vec& x) const {
    double F = domain_->u0(x) / scale_;
    if (!flat_) {
      const Vec d = x - p_;
      const double q = d.dot(Gp_ * d);
      F += q * q;
    }
    return F;
  }

  ScalarJet jet(const Vec& x) const {
    ScalarJet j = domain_->u0_jet(x);
    j.value /= scale_;
    j.grad /= scale_;
    j.hess /= scale_;
    if (!flat_) {
      const Vec d = x - p_;
      const Vec Gd = Gp_ * d;
      const double q = d.dot(Gd);
      j.value += q * q;
      j.grad += 4.0 * q * Gd;
      j.hess += 4.0 * q * Gp_ + 8.0 * Gd * Gd.transpose();
    }
    return j;
  }

  /// Signed distance u and its derivatives at x, nonnegative on N.
  Projection project(const Vec& x) const {
    if (constant_) return project_flat(x, G_, Ginv_);
    return project_shooting(x);
  }

 private:
  struct FlatFoot {
    Vec y;
    double t = 0.0;
  };

  // Closest point of Sigma in the constant inner product G: solves
  // y - x + t G^{-1} dF(y) = 0, F(y) = 0 by damped Newton.
  FlatFoot flat_foot(const Vec& x, const Mat& G, const Mat& Ginv) const {
    const int n = dim();
    Vec y = x;
    double t = 0.0;
    auto residual = [&](const Vec& yy, double tt, const ScalarJet& j) {
      Eigen::VectorXd r(n + 1);
      r.head(n) = yy - x + tt * (Ginv * j.grad);
      r(n) = j.value;
      return r;
    };
    const double scale = 1.0 + x.cwiseAbs().maxCoeff();
    ScalarJet j = jet(y);
    Eigen::VectorXd R = residual(y, t, j);
    for (int it = 0; it < 100; ++it) {
      if (R.norm() <= 1e-15 * scale) return {y, t};
      Eigen::MatrixXd Jac = Eigen::MatrixXd::Zero(n + 1, n + 1);
      Jac.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n) + t * Eigen::MatrixXd(Ginv * j.hess);
      Jac.topRightCorner(n, 1) = Ginv * j.grad;
      Jac.bottomLeftCorner(1, n) = j.grad.transpose();
      const Eigen::VectorXd delta = Jac.fullPivLu().solve(-R);
      if (!delta.allFinite()) break;
      double step = 1.0;
      bool accepted = false;
      for (int h = 0; h < 40; ++h, step *= 0.5) {
        const Vec yy = y + step * Vec(delta.head(n));
        const double tt = t + step * delta(n);
        try {
          const ScalarJet jj = jet(yy);
          const Eigen::VectorXd RR = residual(yy, tt, jj);
          if (RR.norm() < (1.0 - 1e-4 * step) * R.norm()) {
            y = yy;
            t = tt;
            j = jj;
            R = RR;
            accepted = true;
            break;
          }
        } catch (const DomainError&) {
        }
      }
      if (!accepted) break;
      if (step * delta.norm() <= 1e-16 * scale) break;
    }
    if (R.norm() <= 1e-11 * scale) return {y, t};
    throw ConvergenceError("closest-point projection onto the contact surface did not converge");
  }

  Projection project_flat(const Vec& x, const Mat& G, const Mat& Ginv) const {
    const int n = dim();
    const FlatFoot f = flat_foot(x, G, Ginv);
    const ScalarJet j = jet(f.y);
    MetricSample s;
    s.n = n;
    s.g = G;
    s.ginv = Ginv;
    const double sn = std::sqrt(j.grad.dot(Ginv * j.grad));
    if (!(sn > 0.0)) throw GeometryError("contact surface has a singular point");
    Projection out;
    out.foot = f.y;
    out.u = f.t * sn;
    out.du = j.grad / sn;
    out.nu = Ginv * j.grad / sn;
    if (n == 1) {
      out.hess_coord = out.hess_cov = Mat::Zero(1, 1);
      out.curvatures = Vec(0);
      out.directions = Mat(1, 0);
      return out;
    }
    const Mat E = geom::tangent_frame(j.grad, s);
    Mat W = E.transpose() * j.hess * E / sn;
    W = (0.5 * (W + W.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Mat> eig(W);
    const Vec w = eig.eigenvalues();
    Vec mdiag(n - 1);
    for (int i = 0; i < n - 1; ++i) {
      const double den = 1.0 + out.u * w(i);
      if (!(den > 1e-12)) throw GeometryError("point lies beyond a focal point of the contact surface");
      mdiag(i) = w(i) / den;
    }
    Mat Phi(n, n);
    Phi.leftCols(n - 1) = E * eig.eigenvectors();
    Phi.col(n - 1) = out.nu;
    Mat M = Mat::Zero(n, n);
    M.topLeftCorner(n - 1, n - 1) = mdiag.asDiagonal();
    out.hess_cov = G * Phi * M * Phi.transpose() * G;
    out.hess_cov = (0.5 * (out.hess_cov + out.hess_cov.transpose())).eval();
    out.hess_coord = out.hess_cov;
    // k_i = -w_i / (1 + u w_i) decreases in w_i, so reverse for ascending order.
    out.curvatures.resize(n - 1);
    out.directions.resize(n, n - 1);
    for (int i = 0; i < n - 1; ++i) {
      out.curvatures(i) = -mdiag(n - 2 - i);
      out.directions.col(i) = Phi.col(n - 2 - i);
    }
    geom::normalize_signs(out.directions);
    return out;
  }

  struct GeodesicEnd {
    Vec x;
    Vec v;
  };

  GeodesicEnd geodesic(const Vec& y, const Vec& v0, int steps) const {
    const auto& g = domain_->metric();
    auto accel = [&](const Vec& x, const Vec& v) { return Vec(-geom::christoffel(g, x).contract(v, v)); };
    Vec x = y, v = v0;
    const double h = 1.0 / steps;
    for (int s = 0; s < steps; ++s) {
      const Vec k1x = v, k1v = accel(x, v);
      const Vec k2x = v + 0.5 * h * k1v, k2v = accel(x + 0.5 * h * k1x, k2x);
      const Vec k3x = v + 0.5 * h * k2v, k3v = accel(x + 0.5 * h * k2x, k3x);
      const Vec k4x = v + h * k3v, k4v = accel(x + h * k3x, k4x);
      x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    return {x, v};
  }

  Vec unit_normal(const Vec& y) const {
    const ScalarJet j = jet(y);
    const Mat ginv = geom::sample_metric(domain_->metric(), y).ginv;
    const double s = std::sqrt(j.grad.dot(ginv * j.grad));
    if (!(s > 0.0)) throw GeometryError("contact surface has a singular point");
    return ginv * j.grad / s;
  }

  struct Shot {
    Vec y;
    double t = 0.0;
    Vec velocity;
  };

  // Foot y on Sigma and signed length t with exp_y(t n(y)) = x. Chord Newton:
  // the finite-difference Jacobian is refreshed only when progress stalls, and
  // a caller may pass one from a nearby solve.
  Shot shoot(const Vec& x, Vec y, double t, Eigen::MatrixXd* jacobian = nullptr) const {
    const int n = dim();
    const int steps = std::max(8, static_cast<int>(std::ceil(std::abs(t) / step_)));
    auto residual = [&](const Vec& yy, double tt) {
      Eigen::VectorXd r(n + 1);
      r.head(n) = geodesic(yy, tt * unit_normal(yy), steps).x - x;
      r(n) = value(yy);
      return r;
    };
    const double scale = 1.0 + x.cwiseAbs().maxCoeff();
    Eigen::VectorXd R = residual(y, t);
    auto fd_jacobian = [&] {
      Eigen::MatrixXd Jac(n + 1, n + 1);
      for (int k = 0; k <= n; ++k) {
        const double h = 1e-7 * (k < n ? std::max(1.0, std::abs(y(k))) : 1.0);
        Vec yp = y;
        double tp = t;
        if (k < n)
          yp(k) += h;
        else
          tp += h;
        Jac.col(k) = (residual(yp, tp) - R) / h;
      }
      return Jac;
    };
    Eigen::MatrixXd local;
    Eigen::MatrixXd& Jac = jacobian ? *jacobian : local;
    if (Jac.rows() != n + 1) Jac = fd_jacobian();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Jac);
    bool fresh = !jacobian || jacobian->rows() != n + 1;
    for (int it = 0; it < 60 && R.norm() > 1e-14 * scale; ++it) {
      const Eigen::VectorXd delta = lu.solve(-R);
      bool accepted = false;
      double step = 1.0;
      for (int h = 0; h < 20; ++h, step *= 0.5) {
        const Vec yy = y + step * Vec(delta.head(n));
        const double tt = t + step * delta(n);
        try {
          const Eigen::VectorXd RR = residual(yy, tt);
          if (RR.norm() < R.norm()) {
            const bool slow = RR.norm() > 0.25 * R.norm();
            y = yy;
            t = tt;
            R = RR;
            accepted = true;
            if (slow && !fresh) {
              Jac = fd_jacobian();
              lu.compute(Jac);
              fresh = true;
            }
            break;
          }
        } catch (const DomainError&) {
        }
      }
      if (!accepted) {
        if (fresh) break;
        Jac = fd_jacobian();
        lu.compute(Jac);
        fresh = true;
      }
    }
    if (R.norm() > 1e-11 * scale) throw ConvergenceError("geodesic shooting to the contact surface did not converge");
    const Vec n0 = unit_normal(y);
    const GeodesicEnd end = geodesic(y, t * n0, steps);
    return {y, t, std::abs(t) > 1e-300 ? Vec(end.v / t) : n0};
  }

  Projection project_shooting(const Vec& x) const {
    const int n = dim();
    const MetricSample sx = geom::sample_metric(domain_->metric(), x);
    // Frozen-metric projection as the initial guess.
    const FlatFoot guess = flat_foot(x, sx.g, sx.ginv);
    const double sn = std::sqrt(jet(guess.y).grad.dot(sx.ginv * jet(guess.y).grad));
    Eigen::MatrixXd jac;
    const Shot c = shoot(x, guess.y, guess.t * sn, &jac);
    Projection out;
    out.foot = c.y;
    out.u = c.t;
    out.nu = c.velocity;
    out.du = sx.g * c.velocity;
    const double delta = 0.1 * step_;
    Mat J(n, n);
    for (int k = 0; k < n; ++k) {
      Vec xp = x, xm = x;
      xp(k) += delta;
      xm(k) -= delta;
      Eigen::MatrixXd jp = jac, jm = jac;
      const Shot cp = shoot(xp, c.y, c.t, &jp);
      const Shot cm = shoot(xm, c.y, c.t, &jm);
      J.col(k) = (geom::sample_metric(domain_->metric(), xp).g * cp.velocity -
                  geom::sample_metric(domain_->metric(), xm).g * cm.velocity) /
                 (2.0 * delta);
    }
    out.hess_coord = 0.5 * (J + J.transpose());
    const geom::Christoffel gamma = geom::christoffel(sx);
    out.hess_cov = geom::covariant_hessian({out.u, out.du, out.hess_coord}, gamma);
    const geom::LevelSetShape shape = geom::levelset_shape({out.u, out.du, out.hess_coord}, sx, gamma);
    out.curvatures = shape.curvatures;
    out.directions = shape.directions;
    return out;
  }

  std::shared_ptr<const Domain> domain_;
  Vec p_;
  bool flat_ = false;
  double step_ = 1e-3;
  Mat Gp_;
  double scale_ = 1.0;
  bool constant_ = true;
  Mat G_;
  Mat Ginv_;
};

// ---------------------------------------------------------------------------
// Bundle

struct BarrierOptions {
  int m = 1;
  std::optional<double> eta;
  // Mean-curvature bound; when set, eta must lie strictly between h and the
  // curvature sum at p.
  std::optional<double> h;
  bool flat_test_mode = false;
  // When false, a failed curvature hypothesis is recorded instead of refused
  // and the tube convexity check is skipped.
  bool enforce_hypothesis = true;
  int sample_budget = 1000;
  std::uint64_t seed = 1;
  std::optional<double> epsilon;
  std::optional<double> tube_radius;
  double curvature_cap = 1e8;
};

struct TubeStats {
  int tube_samples = 0;
  int boundary_samples = 0;
  int rim_samples = 0;
  double max_abs_curvature = 0.0;
  double min_convexity_margin = std::numeric_limits<double>::infinity();  // min (k_1+..+k_m) - eta
  double min_normal_alignment = std::numeric_limits<double>::infinity();  // min <nu, nu_N>
  double min_rim_distance = std::numeric_limits<double>::infinity();      // min u on N and the tube rim
  int halvings = 0;
};

struct BarrierBundle {
  std::shared_ptr<const SigmaSurface> sigma;
  int m = 1;
  double eta = 0.0;
  std::optional<double> h;
  double kappa_sum = 0.0;  // at p, w.r.t. the inward normal
  Vec boundary_curvatures;
  bool hypothesis_holds = true;
  double tube_radius = 0.0;
  double K = 0.0;
  double chart_bound = 0.0;
  double epsilon = 0.0;
  TubeStats stats;

  const Domain& domain() const { return sigma->domain(); }
  const Vec& base_point() const { return sigma->base_point(); }
  int dim() const { return sigma->dim(); }
  bool in_tube(const Vec& x) const { return sigma->base_distance(x) < tube_radius; }
  // Normalized-margin threshold for verification.
  double verification_tolerance() const { return sigma->constant_metric() ? 1e-7 : 1e-4; }
  std::string route() const { return sigma->constant_metric() ? "closest-point" : "geodesic-shooting"; }
};

inline double signed_distance(const BarrierBundle& b, const Vec& x) {
  if (!b.in_tube(x)) throw GeometryError("point lies outside the tube");
  return b.sigma->project(x).u;
}

namespace detail {

inline Mat sqrt_inverse_transpose(const Mat& G) {
  const Eigen::LLT<Mat> llt(G);
  const Mat L = llt.matrixL();
  return L.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(G.rows(), G.cols()));
}

// Uniform samples of the g(p)-ball of radius r around p (or of its sphere).
inline std::vector<Vec> ball_samples(const Vec& p, const Mat& Gp, double r, int count, bool sphere,
                                     std::mt19937_64& rng) {
  const int n = static_cast<int>(p.size());
  const Mat T = sqrt_inverse_transpose(Gp);
  std::normal_distribution<double> N01;
  std::uniform_real_distribution<double> U01;
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vec z(n);
    for (int k = 0; k < n; ++k) z(k) = N01(rng);
    z.normalize();
    if (!sphere) z *= std::pow(U01(rng), 1.0 / n);
    out.push_back(p + r * (T * z));
  }
  return out;
}

struct TubeCheck {
  bool ok = true;
  std::string reason;
  TubeStats stats;
};

inline TubeCheck check_tube(const SigmaSurface& sigma, double r, int m, double eta, bool check_convexity, int budget,
                            std::uint64_t seed) {
  TubeCheck tc;
  const Domain& dom = sigma.domain();
  std::mt19937_64 rng(seed);
  const Vec& p = sigma.base_point();
  auto fail = [&](std::string why) {
    tc.ok = false;
    tc.reason = std::move(why);
    return tc;
  };
  // Interior of the tube, restricted to N.
  for (const Vec& x : ball_samples(p, sigma.base_metric(), r, budget, false, rng)) {
    if (dom.u0(x) < 0.0) continue;
    Projection pr;
    try {
      pr = sigma.project(x);
    } catch (const Error& e) {
      return fail(std::string("projection failed: ") + e.what());
    }
    if (pr.u < -1e-12) return fail("signed distance negative inside N");
    if (sigma.base_distance(pr.foot) > 2.0 * r) return fail("nearest point leaves the tube");
    ++tc.stats.tube_samples;
    if (pr.curvatures.size() > 0) tc.stats.max_abs_curvature = std::max(tc.stats.max_abs_curvature, pr.curvatures.cwiseAbs().maxCoeff());
    const double margin = pr.curvatures.head(m).sum() - eta;
    tc.stats.min_convexity_margin = std::min(tc.stats.min_convexity_margin, margin);
    if (check_convexity && !(margin > 0.0)) return fail("curvature sum drops to eta inside the tube");
  }
  // Boundary points of N inside the tube.
  for (const Vec& x : ball_samples(p, sigma.base_metric(), r, budget, false, rng)) {
    Vec b;
    try {
      b = dom.project_to_boundary(x);
    } catch (const Error&) {
      continue;
    }
    if (sigma.base_distance(b) >= r) continue;
    try {
      const Projection pr = sigma.project(b);
      const Vec nuN = dom.inward_normal(b);
      const double align = pr.nu.dot(dom.metric().at(b) * nuN);
      tc.stats.min_normal_alignment = std::min(tc.stats.min_normal_alignment, align);
      ++tc.stats.boundary_samples;
      if (!(align > 0.0)) return fail("normal of the distance field is not inward on the boundary");
    } catch (const Error& e) {
      return fail(std::string("projection failed: ") + e.what());
    }
  }
  // Rim of the tube, restricted to N.
  for (const Vec& x : ball_samples(p, sigma.base_metric(), r, budget, true, rng)) {
    if (dom.u0(x) < 0.0) continue;
    try {
      tc.stats.min_rim_distance = std::min(tc.stats.min_rim_distance, sigma.project(x).u);
      ++tc.stats.rim_samples;
    } catch (const Error& e) {
      return fail(std::string("projection failed on the rim: ") + e.what());
    }
  }
  if (tc.stats.tube_samples == 0) return fail("no tube samples inside N");
  return tc;
}

}  // namespace detail

/// K = 1.25 max |k_i| over tube samples.
inline double curvature_bound(const SigmaSurface& sigma, double tube_radius, int budget, std::uint64_t seed,
                              double cap = 1e8) {
  if (budget < 1) throw Error("sample budget must be positive");
  const detail::TubeCheck tc = detail::check_tube(sigma, tube_radius, 1, -std::numeric_limits<double>::infinity(),
                                                  false, budget, seed);
  if (!tc.ok) throw GeometryError(tc.reason);
  const double K = 1.25 * tc.stats.max_abs_curvature;
  if (!(K <= cap)) throw GeometryError("curvature blow-up: K exceeds the cap");
  return K;
}

inline BarrierBundle build_barrier(std::shared_ptr<const Domain> domain, const Vec& p, const BarrierOptions& opt) {
  const int n = domain->dim();
  if (opt.m < 1 || opt.m > n - 1) throw Error("m must lie in [1, n-1]");
  const geom::ConvexityReport conv = geom::m_convexity(*domain, p, opt.m);
  BarrierBundle b;
  b.m = opt.m;
  b.h = opt.h;
  b.kappa_sum = conv.kappa_sum;
  b.boundary_curvatures = conv.curvatures;
  if (opt.h && *opt.h < 0.0) throw Error("h must be nonnegative");
  b.eta = opt.eta.value_or(opt.h ? 0.5 * (*opt.h + conv.kappa_sum) : 0.5 * conv.kappa_sum);
  b.hypothesis_holds = conv.kappa_sum > b.eta && (!opt.h || b.eta > *opt.h);
  if (!b.hypothesis_holds && opt.enforce_hypothesis) {
    if (opt.h)
      throw HypothesisError("hypothesis not satisfied: need h < eta < kappa_1 + ... + kappa_m; kappa_sum = " +
                            expr::detail::format_number(conv.kappa_sum) + ", h = " + expr::detail::format_number(*opt.h) +
                            ", eta = " + expr::detail::format_number(b.eta));
    throw HypothesisError("hypothesis not satisfied: kappa_1 + ... + kappa_m = " +
                          expr::detail::format_number(conv.kappa_sum) + " <= eta = " +
                          expr::detail::format_number(b.eta));
  }

  const Mat Gp = domain->metric().at(p);
  const double lam_min = Eigen::SelfAdjointEigenSolver<Mat>(Gp).eigenvalues()(0);
  const double r0 = opt.tube_radius.value_or(0.5 * domain->chart().distance_to_boundary(p) * std::sqrt(lam_min));
  if (!(r0 > 0.0)) throw GeometryError("base point lies on the chart boundary");
  double r = r0;
  std::string last_reason;
  for (int halving = 0;; ++halving) {
    if (r < r0 * std::ldexp(1.0, -10))
      throw GeometryError("tube radius collapses (" + last_reason + ")");
    auto sigma = std::make_shared<SigmaSurface>(domain, p, opt.flat_test_mode, 1e-3 * r);
    const detail::TubeCheck tc =
        detail::check_tube(*sigma, r, opt.m, b.eta, opt.enforce_hypothesis, opt.sample_budget, opt.seed);
    if (!tc.ok) {
      last_reason = tc.reason;
      r *= 0.5;
      continue;
    }
    b.sigma = sigma;
    b.tube_radius = r;
    b.stats = tc.stats;
    b.stats.halvings = halving;
    break;
  }
  b.K = 1.25 * b.stats.max_abs_curvature;
  if (!(b.K <= opt.curvature_cap)) throw GeometryError("curvature blow-up: K exceeds the cap");
  b.chart_bound = 0.5 * b.stats.min_rim_distance;
  b.epsilon = select_epsilon(b.K, b.chart_bound);
  if (opt.epsilon) {
    if (!(*opt.epsilon > 0.0) || *opt.epsilon > b.epsilon)
      throw GeometryError("epsilon override must lie in (0, " + expr::detail::format_number(b.epsilon) + "]");
    b.epsilon = *opt.epsilon;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Barrier field

/// X = a phi(u) nu on the tube, 0 elsewhere. The positive amplitude a is kept
/// as a logarithm so that rescaled fields stay representable when phi is tiny.
/// Since phi(0) = exp(-1/eps) is far below the square root of the smallest
/// double for small eps, every pointwise quantity is also available divided by
/// a phi(u) ("unit" values), which is exact because Psi and |X| are positively
/// homogeneous in (X, DX) at a point.
class BarrierField final : public geom::VectorField {
 public:
  explicit BarrierField(BarrierBundle bundle, double log_amplitude = 0.0)
      : b_(std::move(bundle)), log_amp_(log_amplitude) {}

  /// Amplitude making the field's Lipschitz constant about 1: eps^2 / phi(0).
  static double unit_lipschitz_log_amplitude(const BarrierBundle& b) {
    return 2.0 * std::log(b.epsilon) + 1.0 / b.epsilon;
  }

  struct Eval {
    bool active = false;  // inside the support region u < eps
    double u = 0.0;
    double log_phi = -std::numeric_limits<double>::infinity();  // amplitude included
    double phi = 0.0;                                            // amplitude included
    double dphi_over_phi = 0.0;
    Projection proj;
    Vec unit_value;     // X / (a phi)
    Mat unit_jacobian;  // DX / (a phi)
    Vec value;
    Mat jacobian;
  };

  Eval evaluate(const Vec& x) const {
    const int n = dim();
    Eval e;
    e.unit_value = e.value = Vec::Zero(n);
    e.unit_jacobian = e.jacobian = Mat::Zero(n, n);
    if (!b_.in_tube(x)) return e;
    e.proj = b_.sigma->project(x);
    e.u = e.proj.u;
    double u = e.u;
    if (u < 0.0) {
      if (u < -1e-12) throw DomainError("barrier field evaluated beyond the contact surface");
      u = 0.0;
    }
    if (u >= b_.epsilon) return e;
    e.active = true;
    const double d = u - b_.epsilon;
    e.log_phi = log_amp_ + 1.0 / d;
    e.phi = std::exp(e.log_phi);
    e.dphi_over_phi = -1.0 / (d * d);
    const MetricSample s = geom::sample_metric(b_.domain().metric(), x);
    // d_j X^i = phi' d_j u nu^i + phi (d_j g^{ik} du_k + g^{ik} d_j du_k)
    Mat dnu = s.ginv * e.proj.hess_coord;
    for (int j = 0; j < n; ++j) dnu.col(j) -= s.ginv * s.dg[static_cast<std::size_t>(j)] * s.ginv * e.proj.du;
    e.unit_value = e.proj.nu;
    e.unit_jacobian = e.dphi_over_phi * e.proj.nu * e.proj.du.transpose() + dnu;
    e.value = e.phi * e.unit_value;
    e.jacobian = e.phi * e.unit_jacobian;
    return e;
  }

  int dim() const override { return b_.dim(); }
  Vec value(const Vec& x) const override { return evaluate(x).value; }
  Mat jacobian(const Vec& x) const override { return evaluate(x).jacobian; }

  const BarrierBundle& bundle() const { return b_; }
  double log_amplitude() const { return log_amp_; }
  double amplitude() const { return std::exp(log_amp_); }

 private:
  BarrierBundle b_;
  double log_amp_ = 0.0;
};

/// Psi_X(x): the largest trace of Q(u, v) = <u, nabla_v X> over m-planes.
inline double psi(const Vec& value, const Mat& jacobian, const Vec& x, int m, const geom::MetricField& metric) {
  const MetricSample s = geom::sample_metric(metric, x);
  const Mat A = geom::covariant_gradient(value, jacobian, geom::christoffel(s));
  return geom::top_m_eigensum(s.g * A, s.g, m);
}

inline double psi(const geom::VectorField& X, const Vec& x, int m, const geom::MetricField& metric) {
  return psi(X.value(x), X.jacobian(x), x, m, metric);
}

/// Q / phi(u) in the g-orthonormal frame (e_1, ..., e_{n-1}, nu) of principal
/// directions: diagonal (-k_1, ..., -k_{n-1}, phi'/phi) up to rounding.
inline Mat adapted_frame_Q_normalized(const BarrierBundle& b, const Vec& q) {
  const BarrierField X(b);
  const BarrierField::Eval e = X.evaluate(q);
  if (!e.active) throw GeometryError("point lies outside the support of the barrier field");
  const int n = b.dim();
  const MetricSample s = geom::sample_metric(b.domain().metric(), q);
  const Mat A = geom::covariant_gradient(e.unit_value, e.unit_jacobian, geom::christoffel(s));
  Mat Phi(n, n);
  Phi.leftCols(n - 1) = e.proj.directions;
  Phi.col(n - 1) = e.proj.nu;
  return Phi.transpose() * s.g * A * Phi;
}

/// Matrix of Q(u, v) = <u, nabla_v X> for the unit-amplitude field in the
/// frame (e_1, ..., e_{n-1}, nu).
inline Mat adapted_frame_Q(const BarrierBundle& b, const Vec& q) {
  const double u = std::max(b.sigma->project(q).u, 0.0);
  return cutoff(u, b.epsilon) * adapted_frame_Q_normalized(b, q);
}

// ---------------------------------------------------------------------------
// Verification

struct GridPoint {
  Vec x;
  double u = 0.0;
  double psi = 0.0;
  double norm_x = 0.0;
  double margin = 0.0;             // Psi + eta |X|
  double normalized_margin = 0.0;  // margin / (a phi (1 + K)), computed without underflow
  bool active = false;
};

struct VerifyReport {
  int grid_per_axis = 0;
  long grid_points = 0;
  long evaluated = 0;  // in N and the tube
  long active = 0;     // u < eps
  double worst_margin = -std::numeric_limits<double>::infinity();
  double worst_normalized = -std::numeric_limits<double>::infinity();
  Vec worst_point;
  // Largest normalized margin among points where X is nonzero.
  double worst_active_normalized = -std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  bool passed = false;
  std::vector<GridPoint> points;
};

/// Samples Psi_X + eta |X| on a regular grid over the bounding box of the
/// tube, restricted to N and the tube.
inline VerifyReport verify_barrier(const BarrierField& X, int m, double eta, int grid_per_axis, int threads = 1,
                                   bool keep_points = false) {
  const BarrierBundle& b = X.bundle();
  const int n = b.dim();
  if (grid_per_axis < 2) throw Error("grid needs at least 2 points per axis");
  const Mat Gp = b.sigma->base_metric();
  const Mat Ginv = Gp.inverse();
  const Vec half = b.tube_radius * Ginv.diagonal().cwiseSqrt();
  const Vec lo = b.base_point() - half;
  const Vec hi = b.base_point() + half;
  long total = 1;
  for (int k = 0; k < n; ++k) total *= grid_per_axis;
  VerifyReport rep;
  rep.grid_per_axis = grid_per_axis;
  rep.grid_points = total;
  rep.tolerance = b.verification_tolerance();
  std::vector<GridPoint> pts(static_cast<std::size_t>(total));
  std::vector<char> used(static_cast<std::size_t>(total), 0);
  const auto& metric = b.domain().metric();
  parallel_for(static_cast<std::size_t>(total), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t idx = begin; idx < end; ++idx) {
      Vec x(n);
      std::size_t rem = idx;
      for (int k = 0; k < n; ++k) {
        const std::size_t i = rem % static_cast<std::size_t>(grid_per_axis);
        rem /= static_cast<std::size_t>(grid_per_axis);
        x(k) = lo(k) + (hi(k) - lo(k)) * static_cast<double>(i) / (grid_per_axis - 1);
      }
      if (!b.in_tube(x) || b.domain().u0(x) < 0.0) continue;
      GridPoint gp;
      gp.x = x;
      BarrierField::Eval e;
      try {
        e = X.evaluate(x);
      } catch (const Error& err) {
        throw Error(std::string("barrier evaluation failed at a grid point: ") + err.what());
      }
      gp.u = e.u;
      gp.active = e.active;
      if (e.active) {
        const MetricSample s = geom::sample_metric(metric, x);
        const double unit_psi = psi(e.unit_value, e.unit_jacobian, x, m, metric);
        const double unit_norm = s.norm(e.unit_value);
        gp.psi = e.phi * unit_psi;
        gp.norm_x = e.phi * unit_norm;
        gp.margin = gp.psi + eta * gp.norm_x;
        gp.normalized_margin = (unit_psi + eta * unit_norm) / (1.0 + b.K);
      }
      pts[idx] = gp;
      used[idx] = 1;
    }
  });
  for (std::size_t idx = 0; idx < pts.size(); ++idx) {
    if (!used[idx]) continue;
    const GridPoint& gp = pts[idx];
    ++rep.evaluated;
    if (gp.active) {
      ++rep.active;
      rep.worst_active_normalized = std::max(rep.worst_active_normalized, gp.normalized_margin);
    }
    if (gp.normalized_margin > rep.worst_normalized) {
      rep.worst_normalized = gp.normalized_margin;
      rep.worst_margin = gp.margin;
      rep.worst_point = gp.x;
    }
    if (keep_points) rep.points.push_back(gp);
  }
  if (rep.evaluated == 0) throw GeometryError("verification grid does not meet the tube");
  rep.passed = rep.worst_normalized <= rep.tolerance;
  return rep;
}

}  // namespace maxprin::barrier
