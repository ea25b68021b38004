#pragma once

#include <stdexcept>

namespace pmelm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// panel ingestion
struct IoError : Error { using Error::Error; };
struct MissingColumn : Error { using Error::Error; };
struct NonIntegerCount : Error { using Error::Error; };
struct NegativeCount : Error { using Error::Error; };
struct DuplicatePeriod : Error { using Error::Error; };
struct SubjectWithMissingPeriods : Error { using Error::Error; };
struct EmptyDesign : Error { using Error::Error; };

// likelihood evaluation and fitting
struct QuadratureDegenerate : Error { using Error::Error; };
struct NonFiniteDerivative : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct NonConvergence : Error { using Error::Error; };
struct NonConcaveAtOptimum : Error { using Error::Error; };

// influence diagnostics
struct SingularHessian : Error { using Error::Error; };
struct SingularV : Error { using Error::Error; };

// simulation
struct RateOverflow : Error { using Error::Error; };
struct BadMethod : Error { using Error::Error; };
struct BadTarget : Error { using Error::Error; };

// reporting
struct TooFewSubjects : Error { using Error::Error; };

}  // namespace pmelm
