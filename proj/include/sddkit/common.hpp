#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace sddkit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  throw Error(detail::cat(std::forward<Args>(args)...));
}

template <typename... Args>
void require(bool cond, Args&&... args) {
  if (!cond) fail(std::forward<Args>(args)...);
}

// Human-readable log lines go to stderr; stdout is reserved for machine
// output (JSON payloads).
void log_warn(const std::string& msg);
void log_info(const std::string& msg);
void set_quiet_logging(bool quiet);

}  // namespace sddkit
