#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace disco {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Label or row index outside the valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Input that makes an operation ill-defined (e.g. a zero row to normalize).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Global batch not divisible by the world size, or a rank outside [0, N).
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// Ranks disagreed on the collective being issued or on buffer shapes.
class CollectiveContractError : public Error {
 public:
  using Error::Error;
};

class CollectiveTimeoutError : public Error {
 public:
  CollectiveTimeoutError(const std::string& what, std::vector<int> missing)
      : Error(what), missing_ranks_(std::move(missing)) {}
  const std::vector<int>& missing_ranks() const noexcept { return missing_ranks_; }

 private:
  std::vector<int> missing_ranks_;
};

/// Raised inside a waiting rank when another rank of the group failed.
class CollectiveAbortedError : public Error {
 public:
  using Error::Error;
};

/// Lockstep scheduler found every unfinished rank blocked.
class DeadlockError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergenceError : public Error {
 public:
  TrainingDivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace disco
