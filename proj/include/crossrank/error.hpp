#pragma once

#include <stdexcept>
#include <string>

namespace crossrank {

// Base for every error raised by the library. Callers that only care about
// "something in crossrank failed" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A mean over zero tokens was requested.
class EmptySequenceError : public Error {
 public:
  using Error::Error;
};

// A value or argument violated a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Every off-diagonal entry of a candidate's row is absent.
class NoScorersError : public Error {
 public:
  NoScorersError(std::size_t candidate_id)
      : Error("candidate " + std::to_string(candidate_id) +
              " has no scoring models"),
        candidate_id_(candidate_id) {}

  std::size_t candidate_id() const noexcept { return candidate_id_; }

 private:
  std::size_t candidate_id_;
};

// Malformed persisted data (model files, configs, scenarios).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace crossrank
