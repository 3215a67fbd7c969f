#pragma once

#include <stdexcept>
#include <string>

namespace conicscat {

/// Argument outside the domain of an operation (chart, parameter range, energy).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative or adaptive procedure failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Zero Wronskian between the regular and Jost solutions.
class ResonanceError : public std::runtime_error {
 public:
  ResonanceError(const std::string& what, double wronskian)
      : std::runtime_error(what), wronskian_(wronskian) {}
  double wronskian() const noexcept { return wronskian_; }

 private:
  double wronskian_;
};

}  // namespace conicscat
