#include "ioql/error.hpp"

namespace ioql {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NotObservable: return "NotObservable";
    case ErrorKind::SingularGain: return "SingularGain";
    case ErrorKind::SingularCoupling: return "SingularCoupling";
    case ErrorKind::RankDeficientData: return "RankDeficientData";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace ioql
