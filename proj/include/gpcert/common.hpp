#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace gpcert {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Precondition violations: bad dimensions, empty inputs, mismatched caches.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Gram factorization failed even after the jitter escalation ladder.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No scale on the confidence grid reaches the requested coverage.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A quality metric is undefined at the query (zero direction / degenerate point).
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Offline setup failed (e.g. Riccati solve did not produce a stabilizing solution).
class SetupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure inside an optimizer; deliberately distinct from infeasibility.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpcert
