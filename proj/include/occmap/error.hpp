#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace occmap {

// Exception carrying a module-specific error code. Each module instantiates it
// with its own code enum and a to_string(Code) overload.
template <typename Code>
class CodedError : public std::runtime_error {
 public:
  CodedError(Code code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace occmap
