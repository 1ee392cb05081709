#pragma once

#include <stdexcept>
#include <string>

namespace qsl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-side contract was violated (bad parameters, wrong grid kind, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A solver failed to converge or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A computed object failed one of the identities it must satisfy.
class CertificationError : public Error {
 public:
  using Error::Error;
};

/// The truncated domain is too small for the field it carries.
class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace qsl
