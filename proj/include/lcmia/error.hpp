#pragma once

#include <stdexcept>
#include <string>

namespace lcmia {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Gateway errors. Attacks catch the specific types to decide on fallbacks.
class GatewayError : public Error {
 public:
  using Error::Error;
};

class EndpointUnreachable : public GatewayError {
 public:
  EndpointUnreachable(const std::string& what, int attempts)
      : GatewayError(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class ContextOverflow : public GatewayError {
 public:
  ContextOverflow(const std::string& what, long requested, long limit)
      : GatewayError(what), requested_(requested), limit_(limit) {}
  long requested_tokens() const noexcept { return requested_; }
  long limit_tokens() const noexcept { return limit_; }

 private:
  long requested_;
  long limit_;
};

class LogprobsUnsupported : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class EchoUnsupported : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class UnrecognizedPrompt : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

// Raised when the Logits attack runs against a text-only backend.
class AttackDowngrade : public Error {
 public:
  using Error::Error;
};

}  // namespace lcmia
