#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ismscan {

// Base for every error raised by the library. Callers that only need a
// message can catch this; the CLI maps it to exit code 2.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
public:
  using Error::Error;
};

class QuantizationError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class StateError : public Error {
public:
  using Error::Error;
};

class UnsupportedProfileError : public Error {
public:
  using Error::Error;
};

class UnknownProfileError : public Error {
public:
  using Error::Error;
};

class ProtocolError : public Error {
public:
  using Error::Error;
};

class ConflictError : public Error {
public:
  using Error::Error;
};

// Text parse failure; offset is the character position in the input.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

// Environment document violation; path is a JSON pointer into the document.
class SchemaError : public Error {
public:
  SchemaError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

}  // namespace ismscan
