#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ioql {

enum class ErrorKind {
  InvalidArgument,    // dimension mismatch, index out of range
  ParseError,
  ValidationError,
  RankDeficient,      // observability stack lacks full column rank
  NotObservable,
  SingularGain,       // R_ii + p_uu numerically singular
  SingularCoupling,   // stacked current-control system singular
  RankDeficientData,  // insufficient excitation in collected data
  NotConverged,
  HypothesisViolated,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace ioql
