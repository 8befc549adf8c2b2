#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace nlpca {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (shape mismatch, bad config).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read, parsed, or written.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Optimization failed numerically. Carries the offending iterate.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, Eigen::VectorXd iterate)
      : Error(what), iterate_(std::move(iterate)) {}

  const Eigen::VectorXd& iterate() const { return iterate_; }

 private:
  Eigen::VectorXd iterate_;
};

}  // namespace nlpca
