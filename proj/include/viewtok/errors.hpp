#pragma once

#include <stdexcept>
#include <string>

namespace viewtok {

// Invalid ranges, unknown kinds, bad hyperparameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Elevation at or beyond +/-90 degrees, where look-at with world-up degenerates.
class DegeneratePoseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed caller data: empty captions, unknown token ids, bad records.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Regressor produced a zero-norm (sin, cos) pair.
class DegenerateEstimateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training loss became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace viewtok
