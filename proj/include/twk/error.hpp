#pragma once

#include <stdexcept>
#include <string>

namespace twk {

// Malformed or inconsistent input (files, graphs, parameters).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No skeleton pixels survive component filtering.
class EmptySkeleton : public InputError {
 public:
  using InputError::InputError;
};

// Cholesky failed: the matrix is not numerically positive definite.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A size guard (pattern count, brute-force enumeration) was exceeded.
class GuardExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace twk
