#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dsmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Global feasibility tolerance used by solvers, membership tests and the
// verification passes.
inline constexpr double kFeasTol = 1e-6;

// Violations of operation preconditions (bad dimensions, ids out of range).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or failed numerical procedures.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent runtime state (stale buffers, missing previous solve).
struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid scenario or solver configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

// sqrt(z' M z), the weighted root norm.
inline double weighted_norm(const Vec& z, const Mat& M) {
  return std::sqrt(std::max(0.0, z.dot(M * z)));
}

inline bool in_box(const Vec& v, const Vec& lo, const Vec& hi, double tol = 0.0) {
  return (v.array() >= lo.array() - tol).all() && (v.array() <= hi.array() + tol).all();
}

inline Vec clip_to_box(Vec v, const Vec& lo, const Vec& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace dsmpc
