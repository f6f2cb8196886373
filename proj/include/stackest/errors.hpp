#pragma once

#include <stdexcept>
#include <string>

namespace stackest {

class StackestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Newton iterations ended with the mean estimating equation above tolerance.
class NonConvergence : public StackestError {
 public:
  using StackestError::StackestError;
};

class SingularJacobian : public StackestError {
 public:
  using StackestError::StackestError;
};

class SingularBread : public StackestError {
 public:
  using StackestError::StackestError;
};

class UnknownColumn : public StackestError {
 public:
  explicit UnknownColumn(const std::string& name)
      : StackestError("unknown column '" + name + "'"), column_(name) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class MissingValueRead : public StackestError {
 public:
  using StackestError::StackestError;
};

// A score contribution needed an outcome that is not observed.
class MissingOutcomeRead : public MissingValueRead {
 public:
  using MissingValueRead::MissingValueRead;
};

// Positivity failure: a treatment arm has no usable rows.
class EmptyArm : public StackestError {
 public:
  using StackestError::StackestError;
};

class ParseError : public StackestError {
 public:
  using StackestError::StackestError;
};

}  // namespace stackest
