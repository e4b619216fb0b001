#pragma once

#include <stdexcept>
#include <string>

namespace xact {

// Categories map one-to-one onto the CLI exit codes.
enum class ErrorKind { usage, data, numeric, config_mismatch };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorKind::numeric, what); }
inline Error mismatch_error(const std::string& what) {
  return Error(ErrorKind::config_mismatch, what);
}

inline const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config_mismatch: return "config_mismatch";
  }
  return "unknown";
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
    case ErrorKind::config_mismatch: return 5;
  }
  return 1;
}

}  // namespace xact
