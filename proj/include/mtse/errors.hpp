#pragma once

#include <stdexcept>
#include <string>

namespace mtse {

// Error categories shared by the C++ core, the C API return codes and the
// CLI exit codes. Values, not names, are the stable contract.
enum class errc : int {
  ok = 0,
  usage = 2,
  config = 3,
  io = 4,
  format = 5,
  input = 6,
  numeric = 7,
  degenerate = 8,
  internal = 9,
};

const char* errc_name(errc c);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}

  errc code() const { return code_; }
  const char* category() const { return errc_name(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace mtse
