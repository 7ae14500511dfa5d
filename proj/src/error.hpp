#pragma once

#include <stdexcept>
#include <string>

namespace ocl {

enum class ErrorCode {
  invalid_argument = 1,
  io = 2,
  format = 3,
  out_of_range = 4,
  state = 5,
  numeric = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ocl
