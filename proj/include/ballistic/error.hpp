#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ballistic {

enum class Errc {
  NotAntisymmetric,
  SingularUpdate,
  NotPSD,
  InvalidSigma,
  InvalidParameter,
  ZeroFriction,
  ZeroNoise,
  TooFewTrajectories,
  NonPositiveSeries,
  DegenerateVariance,
  SingularFieldPoint,
  MissingNoiseRecord,
  ParseError,
  ValidationError,
  UnknownFigure,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::NotAntisymmetric: return "NotAntisymmetric";
    case Errc::SingularUpdate: return "SingularUpdate";
    case Errc::NotPSD: return "NotPSD";
    case Errc::InvalidSigma: return "InvalidSigma";
    case Errc::InvalidParameter: return "InvalidParameter";
    case Errc::ZeroFriction: return "ZeroFriction";
    case Errc::ZeroNoise: return "ZeroNoise";
    case Errc::TooFewTrajectories: return "TooFewTrajectories";
    case Errc::NonPositiveSeries: return "NonPositiveSeries";
    case Errc::DegenerateVariance: return "DegenerateVariance";
    case Errc::SingularFieldPoint: return "SingularFieldPoint";
    case Errc::MissingNoiseRecord: return "MissingNoiseRecord";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::UnknownFigure: return "UnknownFigure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch without string parsing.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ballistic
