#pragma once

#include <stdexcept>
#include <string>

namespace mixaudit {

// Invalid input data or a failed numerical precondition. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Wraps an error raised inside a named pipeline stage.
class StageError : public DataError {
 public:
  StageError(std::string stage, const std::string& what)
      : DataError("stage '" + stage + "': " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace mixaudit
