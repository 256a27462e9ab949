#pragma once

#include <stdexcept>
#include <string>

namespace voltvar {

// Invalid input data: malformed files, out-of-range parameters, unknown ids.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Network connectivity problems (islanded or unreachable buses).
class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular or otherwise ill-posed linear algebra at an operating point.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace voltvar
