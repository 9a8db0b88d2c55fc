#pragma once

#include <stdexcept>
#include <string>

namespace bisim {

// Malformed user input: bad files, missing keys, inconsistent sizes.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A structural invariant was violated (e.g. an MDP that parses but fails
// validation, or a solver producing a non-metric).
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bisim
