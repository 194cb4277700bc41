#pragma once

#include <stdexcept>
#include <string>

namespace peakopt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite right-hand side or argument outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A state became non-finite while integrating.
class IntegrationDiverged : public Error {
 public:
  IntegrationDiverged(double time, const std::string& what)
      : Error("integration diverged at t=" + std::to_string(time) + ": " + what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Invalid or unsupported combination of problem, reformulation and solver options.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Operation is not defined for the given input (e.g. vector-valued control).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A problem does not belong to the class an oracle requires.
class ClassViolation : public Error {
 public:
  using Error::Error;
};

/// Lower and upper bound reports contradict each other.
class InconsistencyError : public Error {
 public:
  InconsistencyError(double lower, double upper)
      : Error("crossed bracket: lower bound " + std::to_string(lower) + " exceeds upper bound " +
              std::to_string(upper)),
        lower_(lower),
        upper_(upper) {}
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }

 private:
  double lower_;
  double upper_;
};

}  // namespace peakopt
