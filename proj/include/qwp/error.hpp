#pragma once

#include <stdexcept>
#include <string>

namespace qwp {

// Invalid input: a precondition of the call does not hold.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A numerical contract was broken while computing (trace drift, truncation overflow).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}
}  // namespace detail

}  // namespace qwp
