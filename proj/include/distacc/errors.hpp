#pragma once

#include <stdexcept>
#include <string>

namespace distacc {

// Malformed or invalid input (bad document, unknown node, bad flag value).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that describes an unattainable operating point, e.g. a
// test-channel distortion larger than the variance it has to describe.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An identity that must hold by construction was violated. Signals a bug.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace distacc
