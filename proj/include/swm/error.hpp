#pragma once

#include <stdexcept>
#include <string>

namespace swm {

enum class ErrorCode {
  kInvalidArgument = 1,
  kDomain,
  kParse,
  kVersion,
  kConfig,
  kContract,
  kFitting,
  kScoring,
  kState,
  kBudget,
  kNumeric,
  kIo,
  kNotFound,
  kTimeout,
  kInternal,
};

/// Stable machine-readable name for an error code ("domain_error", ...).
const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::kDomain, what) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::kParse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(ErrorCode::kParse, what), line_(0) {}
  std::size_t line() const noexcept { return line_; }  // 0 when not line-oriented

 private:
  std::size_t line_;
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorCode::kVersion, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::kConfig, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCode::kContract, what) {}
};

class FittingError : public Error {
 public:
  explicit FittingError(const std::string& what) : Error(ErrorCode::kFitting, what) {}
};

class ScoringError : public Error {
 public:
  explicit ScoringError(const std::string& what) : Error(ErrorCode::kScoring, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorCode::kState, what) {}
};

class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& what) : Error(ErrorCode::kBudget, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCode::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

}  // namespace swm
