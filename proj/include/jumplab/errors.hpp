#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace jumplab {

// Base class so callers can catch everything thrown by this library at once.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// A documented precondition of an operation was violated (bad parameter
// range, non-commuting inputs, ...).
class precondition_error : public error {
 public:
  using error::error;
};

// A matrix expected to be PSD (up to the clip tolerance) has an eigenvalue
// below -clip_tol.
class not_psd_error : public precondition_error {
 public:
  not_psd_error(const std::string& what, double eigenvalue)
      : precondition_error(what), eigenvalue(eigenvalue) {}
  double eigenvalue;
};

// x == y where a coupling direction u = (x-y)/|x-y| is required.
class degenerate_direction_error : public precondition_error {
 public:
  using precondition_error::precondition_error;
};

// sigma(x) numerically singular where invertibility is required.
class nondegeneracy_error : public error {
 public:
  using error::error;
};

// Simulated state became non-finite (diagnostic; reports the time).
class blow_up_error : public error {
 public:
  blow_up_error(const std::string& what, double time) : error(what), time(time) {}
  double time;
};

// API misuse that is checkable at runtime (grid mismatch, t not a checkpoint).
class usage_error : public error {
 public:
  using error::error;
};

// A coefficient returned a non-finite value at a sampled point.
class evaluation_error : public error {
 public:
  using error::error;
};

// Not enough usable data points for a fit.
class insufficient_signal_error : public error {
 public:
  using error::error;
};

// Config parsing/validation failure; carries every issue found, not just the first.
class config_error : public error {
 public:
  config_error(const std::string& what, std::vector<std::string> issues)
      : error(what), issues(std::move(issues)) {}
  std::vector<std::string> issues;
};

}  // namespace jumplab
