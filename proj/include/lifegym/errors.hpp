#pragma once

#include <stdexcept>
#include <string>

namespace lifegym {

// All library failures derive from Error so callers can catch one type at
// the boundary (CLI, HTTP) and still discriminate when they need to.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LIFEGYM_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

LIFEGYM_DEFINE_ERROR(MalformedRule)
LIFEGYM_DEFINE_ERROR(MalformedPattern)
LIFEGYM_DEFINE_ERROR(ShapeMismatch)
LIFEGYM_DEFINE_ERROR(NonFiniteValue)
LIFEGYM_DEFINE_ERROR(LengthMismatch)
LIFEGYM_DEFINE_ERROR(DecompositionFailure)
LIFEGYM_DEFINE_ERROR(NonFiniteFitness)
LIFEGYM_DEFINE_ERROR(UsageError)
LIFEGYM_DEFINE_ERROR(InvalidConfig)
LIFEGYM_DEFINE_ERROR(InvalidVote)
LIFEGYM_DEFINE_ERROR(NotFound)
LIFEGYM_DEFINE_ERROR(IoError)

#undef LIFEGYM_DEFINE_ERROR

}  // namespace lifegym
