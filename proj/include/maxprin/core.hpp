#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace maxprin {

// Largest ambient dimension supported by the fixed-capacity vector types.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed expression text; offset is the byte position of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error("syntax error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Evaluation left the domain of a function (sqrt of a negative, log of zero,
// a singular derivative). Never reported as NaN.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Degenerate geometric input: singular metric, vanishing gradient, point off
// the boundary, projection outside its tube.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// A theorem's hypothesis is not satisfied, so the construction refuses to run.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A test vectorfield violates the inward condition on the boundary.
class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

inline void require_dim(int n) {
  if (n < 1 || n > kMaxDim) {
    throw Error("dimension " + std::to_string(n) + " outside [1, " + std::to_string(kMaxDim) + "]");
  }
}

// Pairwise summation; the reduction tree depends only on the length, so the
// result is reproducible regardless of how the terms were produced.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline Vec to_vec(const std::vector<double>& values) {
  require_dim(static_cast<int>(values.size()));
  Vec v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace maxprin
