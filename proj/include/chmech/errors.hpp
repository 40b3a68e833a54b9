#pragma once

// Failure taxonomy for the chmech library.  Every throwing path uses one of
// these types; failure_class() gives a stable machine-readable tag that the
// CLI maps to exit codes and embeds in report.json.

#include <array>
#include <stdexcept>
#include <string>

namespace chmech {

class Error : public std::runtime_error {
public:
  Error(std::string cls, const std::string& what)
      : std::runtime_error(what), cls_(std::move(cls)) {}

  // Stable identifier, e.g. "DeterminantFloorViolated".
  const std::string& failure_class() const noexcept { return cls_; }

private:
  std::string cls_;
};

// --- configuration / input errors (CLI exit code 2) ---

class ConfigError : public Error {
  using Error::Error;
};

class ParseError : public ConfigError {
public:
  explicit ParseError(const std::string& what) : ConfigError("ParseError", what) {}
};

class ValidationError : public ConfigError {
public:
  explicit ValidationError(const std::string& what)
      : ConfigError("ValidationError", what) {}
};

class InvalidConfig : public ConfigError {
public:
  explicit InvalidConfig(const std::string& what)
      : ConfigError("InvalidConfig", what) {}
};

// --- evaluation errors ---

class SingularDeformation : public Error {
public:
  explicit SingularDeformation(double det)
      : Error("SingularDeformation",
              "deformation gradient is singular or orientation-reversing (det = " +
                  std::to_string(det) + ")"),
        det_(det) {}
  double det() const noexcept { return det_; }

private:
  double det_;
};

class OutOfDomain : public Error {
public:
  explicit OutOfDomain(const std::string& what) : Error("OutOfDomain", what) {}
};

class NonFiniteEvaluation : public Error {
public:
  explicit NonFiniteEvaluation(const std::string& what)
      : Error("NonFiniteEvaluation", what) {}
};

// --- solver errors (CLI exit code 3) ---

class SolverError : public Error {
  using Error::Error;
};

// Carries the worst quadrature point so failure reports can localize the
// near-interpenetration that stopped the solve.
class DeterminantFloorViolated : public SolverError {
public:
  DeterminantFloorViolated(double det, const std::array<double, 3>& point, int dim)
      : SolverError("DeterminantFloorViolated", describe(det, point, dim)),
        det_(det), point_(point), dim_(dim) {}

  double det() const noexcept { return det_; }
  const std::array<double, 3>& point() const noexcept { return point_; }
  int dim() const noexcept { return dim_; }

private:
  static std::string describe(double det, const std::array<double, 3>& p, int dim) {
    std::string s = "determinant floor violated: det = " + std::to_string(det) + " at x = (";
    for (int i = 0; i < dim; ++i) s += (i ? ", " : "") + std::to_string(p[i]);
    return s + ")";
  }
  double det_;
  std::array<double, 3> point_;
  int dim_;
};

class InfeasibleStart : public SolverError {
public:
  explicit InfeasibleStart(const std::string& what)
      : SolverError("InfeasibleStart", what) {}
};

class LineSearchStalled : public SolverError {
public:
  explicit LineSearchStalled(const std::string& what)
      : SolverError("LineSearchStalled", what) {}
};

class MaxIterations : public SolverError {
public:
  explicit MaxIterations(const std::string& what)
      : SolverError("MaxIterations", what) {}
};

class NewtonDiverged : public SolverError {
public:
  explicit NewtonDiverged(const std::string& what)
      : SolverError("NewtonDiverged", what) {}
};

class LinearSolveFailed : public SolverError {
public:
  explicit LinearSolveFailed(const std::string& what)
      : SolverError("LinearSolveFailed", what) {}
};

class ResolutionInsufficient : public SolverError {
public:
  explicit ResolutionInsufficient(const std::string& what)
      : SolverError("ResolutionInsufficient", what) {}
};

// --- output errors (CLI exit code 4) ---

class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error("IoError", what) {}
};

}  // namespace chmech
