#pragma once

#include <stdexcept>
#include <string>

namespace vidsum {

// Shape/axis violations (mismatched matmul operands, bad axis, ...).
struct dimension_error : std::runtime_error {
  explicit dimension_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values (p >= 1, odd pe_dim, k > n_videos, ...).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken call contracts (non-scalar backward, missing grads, ...).
struct contract_error : std::runtime_error {
  explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files (bad magic, truncated payload, version mismatch).
struct format_error : std::runtime_error {
  explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset-level validation failures (missing fields, bad segments, ...).
struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vidsum
