#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ltv {

// Every error carries a short machine-readable kind so that the CLI can emit
// a single parseable line ("error: <kind>: <message>").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

struct DataError : Error {
  explicit DataError(const std::string& m) : Error("data", m) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error("usage", m) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

struct OracleError : Error {
  explicit OracleError(const std::string& m) : Error("oracle", m) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& m, std::ptrdiff_t index = -1)
      : Error("training", m), index_(index) {}
  // Offending parameter index for non-finite gradients, or -1.
  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

}  // namespace ltv
