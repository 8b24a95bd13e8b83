#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lvg {

// All library failures derive from Error so callers (the CLI) can map them
// to a single exit status.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class PreconditionError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class LookupError : public Error {
public:
  using Error::Error;
};

class IndexError : public Error {
public:
  using Error::Error;
};

class TrainingError : public Error {
public:
  TrainingError(const std::string& what, std::size_t step)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

}  // namespace lvg
