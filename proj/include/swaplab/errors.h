#ifndef SWAPLAB_ERRORS_H_
#define SWAPLAB_ERRORS_H_

#include <stdexcept>
#include <string>

namespace swaplab {

// Base class for every error raised by the library. Callers that only care
// about "something went wrong" catch this; the CLI maps subclasses to exit
// codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. |line| is 1-based; 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class GeographyError : public Error {
 public:
  using Error::Error;
};

class EmptyPopulationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class AuditError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  CalibrationError(const std::string& what, double variance_lo,
                   double variance_hi)
      : Error(what), variance_lo_(variance_lo), variance_hi_(variance_hi) {}
  double variance_lo() const { return variance_lo_; }
  double variance_hi() const { return variance_hi_; }

 private:
  double variance_lo_;
  double variance_hi_;
};

class DegenerateDesignError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class RegistryError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace swaplab

#endif  // SWAPLAB_ERRORS_H_
