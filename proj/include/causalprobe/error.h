// Exception hierarchy shared by every causalprobe module.

#ifndef CAUSALPROBE_ERROR_H_
#define CAUSALPROBE_ERROR_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace causalprobe {

// Base class. kind() is a stable machine-readable tag used in CLI error records.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &message) : std::runtime_error(message) {}
  virtual const char *kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char *kind() const noexcept override { return "config"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char *kind() const noexcept override { return "dimension"; }
};

class InvalidTreeError : public Error {
 public:
  using Error::Error;
  const char *kind() const noexcept override { return "invalid_tree"; }
};

// Malformed corpus input. line() is 1-based; 0 when unknown.
class CorpusError : public Error {
 public:
  CorpusError(std::size_t line, const std::string &message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char *kind() const noexcept override { return "corpus"; }

 private:
  std::size_t line_;
};

// Non-finite loss or gradient during counterfactual descent.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string &message)
      : Error("diverged at step " + std::to_string(step) + ": " + message),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }
  const char *kind() const noexcept override { return "divergence"; }

 private:
  std::size_t step_;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
  const char *kind() const noexcept override { return "not_found"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char *kind() const noexcept override { return "format"; }
};

// An outcome measure that is undefined for the given output.
class MetricError : public Error {
 public:
  using Error::Error;
  const char *kind() const noexcept override { return "metric"; }
};

class ModelError : public Error {
 public:
  using Error::Error;
  const char *kind() const noexcept override { return "model"; }
};

}  // namespace causalprobe

#endif  // CAUSALPROBE_ERROR_H_
