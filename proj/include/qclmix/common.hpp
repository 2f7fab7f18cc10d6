#pragma once

#include <stdexcept>
#include <string>

namespace qclmix {

// Thrown for malformed inputs: files, CSV cells, shape mismatches in user data.
struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation produces or receives non-finite values,
// or when a numeric precondition (dimension agreement, domain) is violated.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw numeric_error(msg);
}

inline void require_data(bool cond, const std::string& msg) {
  if (!cond) throw data_error(msg);
}

}  // namespace detail
}  // namespace qclmix
