#pragma once

#include <stdexcept>
#include <string>

namespace nst {

// Invalid shapes, unknown taps, bad parameter values.
class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Malformed weight files or images.
class FormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class UnsupportedError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. calling backward() on a non-scalar.
class UsageError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

// NaN or Inf produced by a computation.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace nst
