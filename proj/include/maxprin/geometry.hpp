#pragma once

// Riemannian geometry on a single coordinate chart of R^n.

#include "maxprin/core.hpp"
#include "maxprin/expr.hpp"
#include "maxprin/jet.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace maxprin::geom {

using expr::Expression;

/// Value, coordinate gradient and coordinate Hessian of a scalar field.
struct ScalarJet {
  double value = 0.0;
  Vec grad;
  Mat hess;
};

inline ScalarJet to_scalar_jet(const Jet2& j) { return {j.v, j.gradient(), j.hessian()}; }

class ScalarField {
 public:
  virtual ~ScalarField() = default;
  virtual int dim() const = 0;
  virtual double value(const Vec& x) const = 0;
  virtual ScalarJet jet(const Vec& x) const = 0;
};

class ExprScalarField final : public ScalarField {
 public:
  ExprScalarField(Expression e, int n) : e_(std::move(e)), n_(n) { require_dim(n); }
  int dim() const override { return n_; }
  double value(const Vec& x) const override { return e_(x); }
  ScalarJet jet(const Vec& x) const override { return to_scalar_jet(e_.jet<2>(x)); }
  const Expression& expression() const { return e_; }

 private:
  Expression e_;
  int n_;
};

/// Tangent vectorfield with coordinate Jacobian J(i, j) = d_j X^i.
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual int dim() const = 0;
  virtual Vec value(const Vec& x) const = 0;
  virtual Mat jacobian(const Vec& x) const = 0;
};

class ExprVectorField final : public VectorField {
 public:
  ExprVectorField(std::vector<Expression> components, int n) : c_(std::move(components)), n_(n) {
    require_dim(n);
    if (static_cast<int>(c_.size()) != n)
      throw Error("vectorfield has " + std::to_string(c_.size()) + " components, expected " + std::to_string(n));
  }
  static ExprVectorField parse(std::string_view source, int n) { return {expr::parse_list(source, n), n}; }

  int dim() const override { return n_; }
  Vec value(const Vec& x) const override {
    Vec v(n_);
    for (int i = 0; i < n_; ++i) v(i) = c_[static_cast<std::size_t>(i)](x);
    return v;
  }
  Mat jacobian(const Vec& x) const override {
    Mat J(n_, n_);
    for (int i = 0; i < n_; ++i) {
      const Jet1 j = c_[static_cast<std::size_t>(i)].jet<1>(x);
      for (int k = 0; k < n_; ++k) J(i, k) = j.g[static_cast<std::size_t>(k)];
    }
    return J;
  }

 private:
  std::vector<Expression> c_;
  int n_;
};

class FunctionVectorField final : public VectorField {
 public:
  using ValueFn = std::function<Vec(const Vec&)>;
  using JacobianFn = std::function<Mat(const Vec&)>;
  FunctionVectorField(int n, ValueFn value, JacobianFn jacobian)
      : n_(n), value_(std::move(value)), jacobian_(std::move(jacobian)) {}
  int dim() const override { return n_; }
  Vec value(const Vec& x) const override { return value_(x); }
  Mat jacobian(const Vec& x) const override { return jacobian_(x); }

 private:
  int n_;
  ValueFn value_;
  JacobianFn jacobian_;
};

inline std::shared_ptr<VectorField> zero_field(int n) {
  return std::make_shared<FunctionVectorField>(
      n, [n](const Vec&) { return Vec(Vec::Zero(n)); }, [n](const Vec&) { return Mat(Mat::Zero(n, n)); });
}

inline std::shared_ptr<VectorField> linear_combination(double a, std::shared_ptr<const VectorField> X, double b,
                                                       std::shared_ptr<const VectorField> Y) {
  return std::make_shared<FunctionVectorField>(
      X->dim(), [=](const Vec& x) { return Vec(a * X->value(x) + b * Y->value(x)); },
      [=](const Vec& x) { return Mat(a * X->jacobian(x) + b * Y->jacobian(x)); });
}

// ---------------------------------------------------------------------------
// Metrics

using MetricDerivatives = std::array<Mat, kMaxDim>;  // [k](i, j) = d_k g_ij

class MetricField {
 public:
  virtual ~MetricField() = default;
  virtual int dim() const = 0;
  virtual Mat at(const Vec& x) const = 0;
  virtual MetricDerivatives derivatives(const Vec& x) const = 0;
  // True when the coefficients do not depend on the point.
  virtual bool is_constant() const = 0;
  virtual std::string describe() const = 0;
};

class EuclideanMetric final : public MetricField {
 public:
  explicit EuclideanMetric(int n) : n_(n) { require_dim(n); }
  int dim() const override { return n_; }
  Mat at(const Vec&) const override { return Mat::Identity(n_, n_); }
  MetricDerivatives derivatives(const Vec&) const override {
    MetricDerivatives d;
    for (int k = 0; k < n_; ++k) d[static_cast<std::size_t>(k)] = Mat::Zero(n_, n_);
    return d;
  }
  bool is_constant() const override { return true; }
  std::string describe() const override { return "euclidean"; }

 private:
  int n_;
};

/// g = exp(2 f) * identity.
class ConformalMetric final : public MetricField {
 public:
  ConformalMetric(Expression f, int n) : f_(std::move(f)), n_(n) { require_dim(n); }
  int dim() const override { return n_; }
  Mat at(const Vec& x) const override { return std::exp(2.0 * f_(x)) * Mat::Identity(n_, n_); }
  MetricDerivatives derivatives(const Vec& x) const override {
    const Jet1 j = f_.jet<1>(x);
    const double s = std::exp(2.0 * j.v);
    MetricDerivatives d;
    for (int k = 0; k < n_; ++k)
      d[static_cast<std::size_t>(k)] = 2.0 * j.g[static_cast<std::size_t>(k)] * s * Mat::Identity(n_, n_);
    return d;
  }
  bool is_constant() const override { return f_.is_constant(); }
  std::string describe() const override { return "conformal:" + f_.to_string(); }

 private:
  Expression f_;
  int n_;
};

/// Entries given row-major for the upper triangle; g_ji mirrors g_ij.
class MatrixMetric final : public MetricField {
 public:
  MatrixMetric(std::vector<Expression> upper, int n) : n_(n) {
    require_dim(n);
    if (static_cast<int>(upper.size()) != n * (n + 1) / 2)
      throw Error("matrix metric needs n(n+1)/2 = " + std::to_string(n * (n + 1) / 2) + " upper-triangle entries");
    entries_.resize(static_cast<std::size_t>(n * n));
    std::size_t c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        entries_[static_cast<std::size_t>(i * n + j)] = upper[c];
        entries_[static_cast<std::size_t>(j * n + i)] = upper[c];
        ++c;
      }
  }
  int dim() const override { return n_; }
  Mat at(const Vec& x) const override {
    Mat g(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) g(i, j) = g(j, i) = entry(i, j)(x);
    return g;
  }
  MetricDerivatives derivatives(const Vec& x) const override {
    MetricDerivatives d;
    for (int k = 0; k < n_; ++k) d[static_cast<std::size_t>(k)] = Mat::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) {
        const Jet1 jt = entry(i, j).jet<1>(x);
        for (int k = 0; k < n_; ++k) {
          d[static_cast<std::size_t>(k)](i, j) = jt.g[static_cast<std::size_t>(k)];
          d[static_cast<std::size_t>(k)](j, i) = jt.g[static_cast<std::size_t>(k)];
        }
      }
    return d;
  }
  bool is_constant() const override {
    return std::all_of(entries_.begin(), entries_.end(), [](const Expression& e) { return e.is_constant(); });
  }
  std::string describe() const override {
    std::string s = "matrix:";
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) s += (i + j == 0 ? "" : ";") + entry(i, j).to_string();
    return s;
  }

 private:
  const Expression& entry(int i, int j) const { return entries_[static_cast<std::size_t>(i * n_ + j)]; }
  std::vector<Expression> entries_;
  int n_;
};

/// c * base, used for metric families converging to a limit.
class ScaledMetric final : public MetricField {
 public:
  ScaledMetric(double c, std::shared_ptr<const MetricField> base) : c_(c), base_(std::move(base)) {
    if (!(c_ > 0.0)) throw GeometryError("metric scale must be positive");
  }
  int dim() const override { return base_->dim(); }
  Mat at(const Vec& x) const override { return c_ * base_->at(x); }
  MetricDerivatives derivatives(const Vec& x) const override {
    MetricDerivatives d = base_->derivatives(x);
    for (int k = 0; k < dim(); ++k) d[static_cast<std::size_t>(k)] *= c_;
    return d;
  }
  bool is_constant() const override { return base_->is_constant(); }
  std::string describe() const override { return expr::detail::format_number(c_) + "*" + base_->describe(); }
  double scale() const { return c_; }

 private:
  double c_;
  std::shared_ptr<const MetricField> base_;
};

/// Metric at a point with its inverse and first derivatives, positive
/// definiteness verified.
struct MetricSample {
  int n = 0;
  Mat g;
  Mat ginv;
  MetricDerivatives dg;

  double inner(const Vec& a, const Vec& b) const { return a.dot(g * b); }
  // Scaled so that vectors near the underflow threshold keep their length.
  double norm(const Vec& a) const {
    const double m = a.cwiseAbs().maxCoeff();
    if (!(m > 0.0)) return 0.0;
    const Vec b = a / m;
    return m * std::sqrt(inner(b, b));
  }
};

inline MetricSample sample_metric(const MetricField& metric, const Vec& x) {
  MetricSample s;
  s.n = metric.dim();
  s.g = metric.at(x);
  Eigen::LLT<Mat> llt(s.g);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0))
    throw GeometryError("metric is not positive definite at the queried point");
  s.ginv = llt.solve(Mat::Identity(s.n, s.n));
  s.ginv = 0.5 * (s.ginv + s.ginv.transpose()).eval();
  s.dg = metric.derivatives(x);
  return s;
}

/// Connection coefficients; gamma[k](i, j) = Gamma^k_ij.
struct Christoffel {
  int n = 0;
  std::array<Mat, kMaxDim> gamma;

  double operator()(int k, int i, int j) const { return gamma[static_cast<std::size_t>(k)](i, j); }

  // Gamma(a, b)^k = Gamma^k_ij a^i b^j
  Vec contract(const Vec& a, const Vec& b) const {
    Vec out(n);
    for (int k = 0; k < n; ++k) out(k) = a.dot(gamma[static_cast<std::size_t>(k)] * b);
    return out;
  }
};

inline Christoffel christoffel(const MetricSample& s) {
  const int n = s.n;
  Christoffel c;
  c.n = n;
  // first kind: [l](i, j) = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
  std::array<Mat, kMaxDim> first;
  for (int l = 0; l < n; ++l) {
    Mat f(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        f(i, j) = 0.5 * (s.dg[static_cast<std::size_t>(i)](j, l) + s.dg[static_cast<std::size_t>(j)](i, l) -
                         s.dg[static_cast<std::size_t>(l)](i, j));
    first[static_cast<std::size_t>(l)] = f;
  }
  for (int k = 0; k < n; ++k) {
    Mat gk = Mat::Zero(n, n);
    for (int l = 0; l < n; ++l) gk += s.ginv(k, l) * first[static_cast<std::size_t>(l)];
    c.gamma[static_cast<std::size_t>(k)] = gk;
  }
  return c;
}

inline Christoffel christoffel(const MetricField& metric, const Vec& x) { return christoffel(sample_metric(metric, x)); }

/// Matrix A with A(i, j) = (nabla_j X)^i, so nabla_v X = A v.
inline Mat covariant_gradient(const Vec& value, const Mat& jacobian, const Christoffel& gamma) {
  const int n = gamma.n;
  Mat A = jacobian;
  for (int i = 0; i < n; ++i) A.row(i) += (gamma.gamma[static_cast<std::size_t>(i)] * value).transpose();
  return A;
}

inline Mat covariant_gradient(const VectorField& X, const Vec& x, const MetricField& metric) {
  return covariant_gradient(X.value(x), X.jacobian(x), christoffel(metric, x));
}

inline Vec metric_gradient(const Vec& differential, const MetricSample& s) { return s.ginv * differential; }

inline Vec metric_gradient(const ScalarField& f, const Vec& x, const MetricField& metric) {
  return metric_gradient(f.jet(x).grad, sample_metric(metric, x));
}

/// Covariant Hessian d_i d_j f - Gamma^k_ij d_k f.
inline Mat covariant_hessian(const ScalarJet& f, const Christoffel& gamma) {
  Mat H = f.hess;
  for (int k = 0; k < gamma.n; ++k) H -= f.grad(k) * gamma.gamma[static_cast<std::size_t>(k)];
  return 0.5 * (H + H.transpose());
}

// Flip each column so its first clearly nonzero component is positive.
inline void normalize_signs(Mat& columns) {
  for (Eigen::Index c = 0; c < columns.cols(); ++c) {
    for (Eigen::Index r = 0; r < columns.rows(); ++r) {
      if (std::abs(columns(r, c)) > 1e-12) {
        if (columns(r, c) < 0.0) columns.col(c) *= -1.0;
        break;
      }
    }
  }
}

/// g-orthonormal basis (as columns) of the hyperplane annihilated by the
/// covector `normal_form`.
inline Mat tangent_frame(const Vec& normal_form, const MetricSample& s) {
  const int n = s.n;
  const Vec nu = s.ginv * normal_form;
  const double nn = normal_form.dot(nu);
  if (!(nn > 0.0)) throw GeometryError("degenerate normal");
  // Project coordinate axes, least normal-aligned first.
  std::array<int, kMaxDim> order{};
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.begin() + n, [&](int a, int b) {
    return std::abs(nu(a)) / std::sqrt(s.g(a, a)) * std::sqrt(s.ginv(a, a)) <
           std::abs(nu(b)) / std::sqrt(s.g(b, b)) * std::sqrt(s.ginv(b, b));
  });
  Mat E(n, n - 1);
  int found = 0;
  for (int t = 0; t < n && found < n - 1; ++t) {
    Vec v = Vec::Zero(n);
    v(order[static_cast<std::size_t>(t)]) = 1.0;
    v -= (normal_form.dot(v) / nn) * nu;
    for (int pass = 0; pass < 2; ++pass)
      for (int c = 0; c < found; ++c) v -= s.inner(E.col(c), v) * Vec(E.col(c));
    const double len = s.norm(v);
    if (len < 1e-8) continue;
    E.col(found++) = v / len;
  }
  if (found != n - 1) throw GeometryError("could not build a tangent frame");
  return E;
}

/// Principal curvatures of the level set {f = f(x)} with respect to the unit
/// normal grad f / |grad f|, in ascending order, with the matching
/// g-orthonormal principal directions. A round sphere bounding a ball has
/// positive curvatures with respect to the inward normal.
struct LevelSetShape {
  Vec curvatures;
  Mat directions;
  Vec normal;
  double grad_norm = 0.0;
  Mat covariant_hessian;
};

inline LevelSetShape levelset_shape(const ScalarJet& f, const MetricSample& s, const Christoffel& gamma) {
  const int n = s.n;
  LevelSetShape out;
  const double g2 = f.grad.dot(s.ginv * f.grad);
  if (!(g2 > 0.0) || std::sqrt(g2) < 1e-13 * (1.0 + std::abs(f.value)))
    throw GeometryError("level set gradient vanishes");
  out.grad_norm = std::sqrt(g2);
  out.normal = s.ginv * f.grad / out.grad_norm;
  out.covariant_hessian = covariant_hessian(f, gamma);
  if (n == 1) {
    out.curvatures = Vec(0);
    out.directions = Mat(1, 0);
    return out;
  }
  const Mat E = tangent_frame(f.grad, s);
  Mat B = -(E.transpose() * out.covariant_hessian * E) / out.grad_norm;
  B = 0.5 * (B + B.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> eig(B);
  out.curvatures = eig.eigenvalues();
  out.directions = E * eig.eigenvectors();
  normalize_signs(out.directions);
  return out;
}

inline LevelSetShape levelset_shape(const ScalarJet& f, const Vec& x, const MetricField& metric) {
  const MetricSample s = sample_metric(metric, x);
  return levelset_shape(f, s, christoffel(s));
}

inline LevelSetShape levelset_shape(const ScalarField& f, const Vec& x, const MetricField& metric) {
  return levelset_shape(f.jet(x), x, metric);
}

/// Sum of the m largest eigenvalues of the symmetric form S relative to the
/// inner product G; equals the maximum of trace(S|P) over m-planes P.
inline double top_m_eigensum(const Mat& S, const Mat& G, int m) {
  const int n = static_cast<int>(S.rows());
  if (m < 1 || m > n) throw Error("top_m_eigensum: m = " + std::to_string(m) + " outside [1, " + std::to_string(n) + "]");
  const Mat sym = 0.5 * (S + S.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> eig(sym, G, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw GeometryError("eigen-decomposition failed");
  double sum = 0.0;
  for (int i = n - m; i < n; ++i) sum += eig.eigenvalues()(i);
  return sum;
}

inline double top_m_eigensum(const Mat& S, int m) {
  return top_m_eigensum(S, Mat::Identity(S.rows(), S.cols()), m);
}

// ---------------------------------------------------------------------------
// Domains

struct Box {
  Vec lo;
  Vec hi;

  static Box cube(int n, double half_width) {
    return {Vec::Constant(n, -half_width), Vec::Constant(n, half_width)};
  }
  double diameter() const { return (hi - lo).norm(); }
  bool contains(const Vec& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
  double distance_to_boundary(const Vec& x) const {
    return std::min((x - lo).minCoeff(), (hi - x).minCoeff());
  }
};

/// N = {u0 >= 0} inside a chart box, with boundary {u0 = 0}.
class Domain {
 public:
  Domain(std::string kind, Expression u0, std::shared_ptr<const MetricField> metric, Box chart)
      : kind_(std::move(kind)), u0_(std::move(u0)), metric_(std::move(metric)), chart_(std::move(chart)) {
    n_ = metric_->dim();
    if (chart_.lo.size() != n_ || chart_.hi.size() != n_) throw Error("chart box dimension mismatch");
    if (u0_.variables_used() > n_) throw Error("boundary function uses variables beyond x" + std::to_string(n_));
    for (int k = 0; k < n_; ++k) du0_.push_back(u0_.derivative(k));
  }

  int dim() const { return n_; }
  const std::string& kind() const { return kind_; }
  const MetricField& metric() const { return *metric_; }
  std::shared_ptr<const MetricField> metric_ptr() const { return metric_; }
  const Box& chart() const { return chart_; }
  const Expression& boundary_function() const { return u0_; }
  const std::vector<Expression>& boundary_gradient() const { return du0_; }

  double u0(const Vec& x) const { return u0_(x); }
  ScalarJet u0_jet(const Vec& x) const { return to_scalar_jet(u0_.jet<2>(x)); }
  bool contains(const Vec& x) const { return u0(x) >= 0.0; }

  double boundary_tolerance() const { return 1e-9 * chart_.diameter(); }
  bool on_boundary(const Vec& x) const { return std::abs(u0(x)) < boundary_tolerance(); }

  /// Unit normal to the level set of u0 through x pointing into N.
  Vec inward_normal(const Vec& x) const {
    const MetricSample s = sample_metric(*metric_, x);
    const Vec du = u0_.jet<1>(x).gradient();
    const double len = std::sqrt(du.dot(s.ginv * du));
    if (!(len > 0.0)) throw GeometryError("boundary function has vanishing gradient");
    return s.ginv * du / len;
  }

  /// Nearest point of {u0 = 0} along the gradient flow of u0 (damped Newton).
  Vec project_to_boundary(const Vec& x, int max_iter = 50) const {
    Vec y = x;
    for (int it = 0; it < max_iter; ++it) {
      const Jet1 j = u0_.jet<1>(y);
      if (std::abs(j.v) <= 1e-12) return y;
      const Vec grad = j.gradient();
      const double g2 = grad.squaredNorm();
      if (!(g2 > 0.0)) break;
      double step = 1.0;
      for (int h = 0; h < 30; ++h, step *= 0.5) {
        const Vec trial = y - step * (j.v / g2) * grad;
        try {
          if (std::abs(u0_(trial)) < std::abs(j.v)) {
            y = trial;
            break;
          }
        } catch (const DomainError&) {
        }
      }
    }
    if (std::abs(u0_(y)) <= 1e-10) return y;
    throw ConvergenceError("projection onto the boundary did not converge");
  }

  std::string describe() const { return kind_; }

 private:
  std::string kind_;
  Expression u0_;
  std::vector<Expression> du0_;
  std::shared_ptr<const MetricField> metric_;
  Box chart_;
  int n_ = 0;
};

inline std::shared_ptr<const MetricField> euclidean(int n) { return std::make_shared<EuclideanMetric>(n); }

inline std::string sum_of_squares(int first, int last) {
  std::string s;
  for (int i = first; i <= last; ++i) s += (i == first ? "" : " + ") + ("x" + std::to_string(i) + "^2");
  return s;
}

inline std::shared_ptr<const Domain> make_halfspace(int n, std::shared_ptr<const MetricField> metric = nullptr) {
  if (!metric) metric = euclidean(n);
  return std::make_shared<Domain>("halfspace", Expression::parse("x" + std::to_string(n), n), metric,
                                  Box::cube(n, 2.0));
}

inline std::shared_ptr<const Domain> make_ball(int n, double R, std::shared_ptr<const MetricField> metric = nullptr) {
  if (!(R > 0.0)) throw Error("ball radius must be positive");
  if (!metric) metric = euclidean(n);
  const std::string src = expr::detail::format_number(R) + " - sqrt(" + sum_of_squares(1, n) + ")";
  return std::make_shared<Domain>("ball:" + expr::detail::format_number(R), Expression::parse(src, n), metric,
                                  Box::cube(n, 2.0 * R));
}

// Solid cylinder {x1^2 + x2^2 <= R^2}.
inline std::shared_ptr<const Domain> make_cylinder(int n, double R,
                                                   std::shared_ptr<const MetricField> metric = nullptr) {
  if (n < 2) throw Error("cylinder needs n >= 2");
  if (!(R > 0.0)) throw Error("cylinder radius must be positive");
  if (!metric) metric = euclidean(n);
  const std::string src = expr::detail::format_number(R) + " - sqrt(x1^2 + x2^2)";
  return std::make_shared<Domain>("cylinder:" + expr::detail::format_number(R), Expression::parse(src, n), metric,
                                  Box::cube(n, 2.0 * R));
}

inline std::shared_ptr<const Domain> make_levelset(int n, std::string_view source,
                                                   std::shared_ptr<const MetricField> metric = nullptr,
                                                   double chart_half_width = 2.0) {
  if (!metric) metric = euclidean(n);
  return std::make_shared<Domain>("levelset:" + std::string(source), Expression::parse(source, n), metric,
                                  Box::cube(n, chart_half_width));
}

inline std::shared_ptr<const Domain> with_metric(const Domain& d, std::shared_ptr<const MetricField> metric) {
  return std::make_shared<Domain>(d.kind(), d.boundary_function(), std::move(metric), d.chart());
}

/// Parses "euclidean", "conformal:<f>" or "matrix:<g11>;<g12>;...".
inline std::shared_ptr<const MetricField> parse_metric(std::string_view spec, int n) {
  if (spec.empty() || spec == "euclidean") return euclidean(n);
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  if (kind == "conformal") return std::make_shared<ConformalMetric>(Expression::parse(rest, n), n);
  if (kind == "matrix") {
    std::vector<Expression> entries;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= rest.size(); ++i) {
      if (i == rest.size() || rest[i] == ';') {
        entries.push_back(Expression::parse(rest.substr(start, i - start), n));
        start = i + 1;
      }
    }
    return std::make_shared<MatrixMetric>(std::move(entries), n);
  }
  throw Error("unknown metric '" + std::string(spec) + "' (expected euclidean, conformal:<f>, matrix:<entries>)");
}

/// Parses "halfspace", "ball:R", "cylinder:R" or "levelset:<expression>".
inline std::shared_ptr<const Domain> parse_domain(std::string_view spec, int n,
                                                  std::shared_ptr<const MetricField> metric = nullptr) {
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  const std::string rest(colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1));
  auto number = [&](double fallback) {
    if (rest.empty()) return fallback;
    std::size_t used = 0;
    const double v = std::stod(rest, &used);
    if (used != rest.size()) throw Error("malformed number in domain spec '" + std::string(spec) + "'");
    return v;
  };
  if (kind == "halfspace") return make_halfspace(n, metric);
  if (kind == "ball") return make_ball(n, number(1.0), metric);
  if (kind == "cylinder") return make_cylinder(n, number(1.0), metric);
  if (kind == "levelset") {
    if (rest.empty()) throw Error("levelset domain needs an expression");
    return make_levelset(n, rest, metric);
  }
  throw Error("unknown domain '" + std::string(spec) + "' (expected halfspace, ball:R, cylinder:R, levelset:<expr>)");
}

enum class Convexity { Strong, Weak, Neither };

inline const char* to_string(Convexity c) {
  switch (c) {
    case Convexity::Strong: return "strongly m-convex";
    case Convexity::Weak: return "m-convex";
    case Convexity::Neither: return "not m-convex";
  }
  return "";
}

struct ConvexityReport {
  double kappa_sum = 0.0;
  Convexity classification = Convexity::Neither;
  Vec curvatures;
  Vec inward_normal;
};

/// Sum of the m smallest principal curvatures of the boundary at p with
/// respect to the inward normal, and the resulting m-convexity class.
inline ConvexityReport m_convexity(const Domain& domain, const Vec& p, int m) {
  const int n = domain.dim();
  if (p.size() != n) throw Error("boundary point has the wrong dimension");
  if (m < 1 || m > n - 1) throw Error("m must lie in [1, n-1]");
  if (!domain.on_boundary(p))
    throw GeometryError("point is not on the boundary (|u0| = " + expr::detail::format_number(std::abs(domain.u0(p))) + ")");
  const LevelSetShape shape = levelset_shape(domain.u0_jet(p), p, domain.metric());
  ConvexityReport r;
  r.curvatures = shape.curvatures;
  r.inward_normal = shape.normal;
  r.kappa_sum = shape.curvatures.head(m).sum();
  const double tol = 1e-9 * std::max(1.0, shape.curvatures.cwiseAbs().maxCoeff());
  r.classification = r.kappa_sum > tol ? Convexity::Strong : (r.kappa_sum >= -tol ? Convexity::Weak : Convexity::Neither);
  return r;
}

}  // namespace maxprin::geom
