#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hndh {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration, detected before any work is done.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class LoadErrorKind {
  bad_magic,
  unsupported_version,
  truncated,
  dimension_mismatch,
  invariant_violation,
  parse,
};

const char* to_string(LoadErrorKind kind);

// A file exists but its contents do not conform to the expected format.
class LoadError : public Error {
 public:
  LoadError(LoadErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  LoadErrorKind kind() const noexcept { return kind_; }

 private:
  LoadErrorKind kind_;
};

class EmptyClassError : public Error {
 public:
  explicit EmptyClassError(std::size_t class_index)
      : Error("class " + std::to_string(class_index) + " has no samples"),
        class_index_(class_index) {}

  std::size_t class_index() const noexcept { return class_index_; }

 private:
  std::size_t class_index_;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Raised by the trainer; names the epoch and batch at which training failed.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace hndh
