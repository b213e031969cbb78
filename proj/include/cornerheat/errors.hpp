#pragma once

#include <stdexcept>
#include <string>

namespace cornerheat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

/// A point was evaluated outside the region where a function is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  [[nodiscard]] int iterations() const { return iterations_; }
  [[nodiscard]] double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// Explicit time stepping blew up (non-finite state or runaway growth).
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, long step) : Error(what), step_(step) {}
  [[nodiscard]] long step() const { return step_; }

 private:
  long step_;
};

/// Root search for the correction parameter failed.
class SearchError : public Error {
 public:
  using Error::Error;
};

}  // namespace cornerheat
