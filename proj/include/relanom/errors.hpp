#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relanom {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// corpus
class DuplicateItem : public Error {
 public:
  using Error::Error;
};

class MalformedRow : public Error {
 public:
  MalformedRow(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownCondition : public Error {
 public:
  using Error::Error;
};

// scoring
class EmptyTokenization : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// ngram
class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

// external scores
class TokenMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidScore : public Error {
 public:
  using Error::Error;
};

class UnknownItem : public Error {
 public:
  using Error::Error;
};

// mixed model
class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class SelectionFailed : public Error {
 public:
  using Error::Error;
};

class NotConverged : public Error {
 public:
  using Error::Error;
};

// inference
class InvalidDf : public Error {
 public:
  using Error::Error;
};

class InvalidP : public Error {
 public:
  using Error::Error;
};

// pipeline
class EmptyGroup : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace relanom
