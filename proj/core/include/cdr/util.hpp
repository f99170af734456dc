#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace cdr {

template <class... Ts>
std::string str_cat(const Ts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

}  // namespace cdr

// Contract check; message parts are streamed.
#define CDR_REQUIRE(cond, ...)                                 \
  do {                                                         \
    if (!(cond)) throw std::invalid_argument(::cdr::str_cat(__VA_ARGS__)); \
  } while (0)
