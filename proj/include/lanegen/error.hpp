#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lanegen {

// Base of every exception the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad shape, bad range, bad config).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

// Malformed input text or file.
class ParseError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// A sampler trajectory produced NaN/Inf.
class NonFiniteError : public Error {
public:
  NonFiniteError(std::size_t step, const std::string& what)
      : Error("non-finite value at step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

// Failure talking to, or reported by, a generation backend.
class BackendError : public Error {
public:
  BackendError(std::string code, const std::string& message)
      : Error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

}  // namespace lanegen
