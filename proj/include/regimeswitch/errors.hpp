#pragma once

#include <stdexcept>
#include <string>

namespace regimeswitch {

// Base class for every failure raised by the library. `code()` is a stable
// machine-readable identifier used by the CLI on its diagnostic stream.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define REGIMESWITCH_ERROR(Name, Code)                       \
  class Name : public Error {                                \
   public:                                                   \
    explicit Name(const std::string& message)                \
        : Error(Code, message) {}                            \
  }

REGIMESWITCH_ERROR(InvalidArgument, "invalid_argument");
REGIMESWITCH_ERROR(DomainError, "domain_error");
REGIMESWITCH_ERROR(NonFiniteError, "non_finite");
REGIMESWITCH_ERROR(DimensionError, "dimension_mismatch");
REGIMESWITCH_ERROR(ReducibleChainError, "reducible_chain");
REGIMESWITCH_ERROR(NoMinorizationError, "no_minorization");
REGIMESWITCH_ERROR(NumericalUnderflowError, "numerical_underflow");
REGIMESWITCH_ERROR(SingularInformationError, "singular_information");
REGIMESWITCH_ERROR(NonPositiveDefiniteError, "non_positive_definite");
REGIMESWITCH_ERROR(ScaleError, "scale_exceeded");
REGIMESWITCH_ERROR(NoConvergenceError, "no_convergence");
REGIMESWITCH_ERROR(DataDegeneracyError, "degenerate_data");
REGIMESWITCH_ERROR(FormatError, "format_error");

#undef REGIMESWITCH_ERROR

}  // namespace regimeswitch
