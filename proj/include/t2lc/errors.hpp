#pragma once

#include <stdexcept>
#include <string>

namespace t2lc {

// Shapes, divisibility, kernel sizes or flags that do not fit together.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A distributed phase was run out of order or a message went missing.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or truncated dataset / tensor files.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf showed up where finite values were required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace t2lc
