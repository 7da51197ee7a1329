#pragma once

#include <stdexcept>
#include <string>

namespace avse {

// Every contract violation in the library surfaces as this exception.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace avse
