#pragma once

#include <stdexcept>
#include <string>

namespace orthobayes {

// Failure categories surfaced by the library. Each category is its own
// exception type so callers (the Monte Carlo harness in particular) can
// record a failed replication by kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ORTHOBAYES_ERROR(Name)                 \
  class Name : public Error {                  \
   public:                                     \
    explicit Name(const std::string& what)     \
        : Error(std::string(#Name ": ") + what) {} \
  }

ORTHOBAYES_ERROR(DomainError);
ORTHOBAYES_ERROR(FactorizationFailure);
ORTHOBAYES_ERROR(RootNotBracketed);
ORTHOBAYES_ERROR(DegenerateProbability);
ORTHOBAYES_ERROR(LevelOutOfRange);
ORTHOBAYES_ERROR(InsufficientDraws);
ORTHOBAYES_ERROR(EmptyInput);
ORTHOBAYES_ERROR(Nonconvergence);
ORTHOBAYES_ERROR(Separation);
ORTHOBAYES_ERROR(ParseError);
ORTHOBAYES_ERROR(NonBinaryOutcome);
ORTHOBAYES_ERROR(IoError);
ORTHOBAYES_ERROR(ConfigError);

#undef ORTHOBAYES_ERROR

}  // namespace orthobayes
