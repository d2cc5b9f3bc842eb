#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rbs {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

class EmptyInputError : public Error {
public:
  using Error::Error;
};

class GeneratorConfigError : public Error {
public:
  using Error::Error;
};

class CannotSplitError : public Error {
public:
  using Error::Error;
};

class UndefinedEnergyError : public Error {
public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
public:
  using Error::Error;
};

/// SMO ran out of pair updates. Carries the remaining maximal KKT violation.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, double violation)
      : Error(what), violation_(violation) {}
  double violation() const noexcept { return violation_; }

private:
  double violation_;
};

class TuningFailedError : public Error {
public:
  using Error::Error;
};

/// Malformed dataset or model file. `offset` is the byte position where
/// reading failed, when known.
class FormatError : public Error {
public:
  explicit FormatError(const std::string& what, std::size_t offset = npos)
      : Error(offset == npos ? what : what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
  std::size_t offset_;
};

class ChecksumError : public FormatError {
public:
  ChecksumError(const std::string& section, std::size_t offset)
      : FormatError("checksum mismatch in section " + section, offset), section_(section) {}
  const std::string& section() const noexcept { return section_; }

private:
  std::string section_;
};

class UnsupportedVersionError : public FormatError {
public:
  using FormatError::FormatError;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Wraps a lower-level error with the pipeline stage in which it occurred.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace rbs
