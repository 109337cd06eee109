#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bayesft {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed NetworkSpec; layer is the index of the offending entry.
class SpecError : public Error {
 public:
  SpecError(std::size_t layer, const std::string& what)
      : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside its mathematical domain (dropout rate >= 1, negative sigma, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf appeared in a forward or backward pass.
class NumericError : public Error {
 public:
  NumericError(std::size_t layer, const std::string& what)
      : Error("non-finite value at layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch)
      : Error("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class LinalgError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// IDX / binary format problems. kind() distinguishes the failure so callers can
// tell a wrong file apart from a damaged one.
class FormatError : public Error {
 public:
  enum class Kind { magic_mismatch, truncated, count_mismatch, bad_header };

  FormatError(Kind kind, const std::string& file, const std::string& what)
      : Error(file + ": " + what), kind_(kind), file_(file) {}
  Kind kind() const { return kind_; }
  const std::string& file() const { return file_; }

 private:
  Kind kind_;
  std::string file_;
};

}  // namespace bayesft
