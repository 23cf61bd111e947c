#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace anholo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grammar violation; line and column are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class UnboundNameError : public Error {
 public:
  explicit UnboundNameError(const std::string& name)
      : Error("unbound name '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Division by zero, log of a non-positive number, and similar.
class DomainError : public Error {
 public:
  using Error::Error;
};

class DepthError : public Error {
 public:
  DepthError() : Error("derivative nesting exceeds supported jet depth") {}
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

class SingularFrameError : public Error {
 public:
  using Error::Error;
};

/// A regularity hypothesis failed; condition() is "regular_D",
/// "regular_Dperp", "regular_g" or "hessian".
class RegularityError : public Error {
 public:
  RegularityError(std::string condition, double det)
      : Error("regularity condition " + condition + " failed (det = " + std::to_string(det) + ")"),
        condition_(std::move(condition)),
        det_(det) {}
  const std::string& condition() const { return condition_; }
  double det() const { return det_; }

 private:
  std::string condition_;
  double det_;
};

class OffConstraintError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& message, double time)
      : Error(message + " at t = " + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Invalid configuration; path() is a JSON-pointer-like location.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace anholo
