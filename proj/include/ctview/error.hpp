#pragma once

#include <stdexcept>
#include <string>

namespace ctview {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A label or mask that was required to be present is absent.
class EmptyRegionError : public Error {
 public:
  using Error::Error;
};

// An error tagged with the pipeline stage that produced it ("ingest",
// "segment", "classify", ...). Used by the CLI and service to report where a
// case failed.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& detail)
      : Error(detail), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace ctview
