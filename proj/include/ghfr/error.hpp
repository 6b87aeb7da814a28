#pragma once

#include <stdexcept>
#include <string>

namespace ghfr {

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ghfr
