#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace avgbound {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
  public:
    using Error::Error;
    const char* kind() const noexcept override { return "dimension"; }
};

/// Malformed expression. `position` is the 0-based character offset.
class ParseError : public Error {
  public:
    ParseError(const std::string& msg, std::size_t position)
        : Error(msg + " at position " + std::to_string(position)), position_(position) {}
    std::size_t position() const noexcept { return position_; }
    const char* kind() const noexcept override { return "parse"; }

  private:
    std::size_t position_;
};

class ConfigError : public Error {
  public:
    ConfigError(const std::string& msg, std::size_t line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    std::size_t line() const noexcept { return line_; }
    const char* kind() const noexcept override { return "config"; }

  private:
    std::size_t line_;
};

class CompileError : public Error {
  public:
    using Error::Error;
    const char* kind() const noexcept override { return "compile"; }
};

class DivergenceError : public Error {
  public:
    using Error::Error;
    const char* kind() const noexcept override { return "divergence"; }
};

} // namespace avgbound
