#pragma once

#include <stdexcept>
#include <string>

namespace f1rank {

/// Coarse failure class; the CLI maps each onto a distinct exit code.
enum class ErrorKind { config, data, model, convergence, analysis };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Missing column or unreadable header.
struct SchemaError : DataError {
  explicit SchemaError(const std::string& what) : DataError(what) {}
};

struct ModelError : Error {
  explicit ModelError(const std::string& what) : Error(ErrorKind::model, what) {}
};

/// Log density or gradient produced a non-finite value.
struct NonFiniteError : ModelError {
  NonFiniteError(const std::string& parameter, const std::string& what)
      : ModelError(what + " (parameter " + parameter + ")"), parameter_(parameter) {}

  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

struct SamplerError : Error {
  explicit SamplerError(const std::string& what) : Error(ErrorKind::convergence, what) {}
};

struct AnalysisError : Error {
  explicit AnalysisError(const std::string& what) : Error(ErrorKind::analysis, what) {}
};

}  // namespace f1rank
