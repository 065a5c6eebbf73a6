#pragma once

#include <stdexcept>
#include <string>

namespace dpsabs {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Log-ratio term of an entropy derivative diverges (entropy argument is 0).
class SingularInputError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A requested operating point cannot be realized (e.g. target above the
/// maximal conclusive probability, or no attack matches the channel).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The weighting denominator vanished: Bob never obtains a conclusive outcome.
class NoConclusiveEventsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stationarity relation cannot be evaluated because a Z-derivative is zero.
class DegeneratePointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpsabs
