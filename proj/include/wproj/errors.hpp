#pragma once

#include <stdexcept>
#include <string>

namespace wproj {

// Bad user input: malformed config, non-dividing grids, missing coefficients.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Iterative solver did not reach its tolerance within the iteration cap.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        last_residual(residual) {}
  double last_residual;
};

} // namespace wproj
