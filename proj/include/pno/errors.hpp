#pragma once

#include <stdexcept>
#include <string>

namespace pno {

// Bad shapes, bad arguments, malformed configs. The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or corrupt container file; the message names the file and byte offset.
class format_error : public std::runtime_error {
 public:
  explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A simulation left the finite range; the message names the step index.
class blowup_error : public std::runtime_error {
 public:
  explicit blowup_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Training aborted (non-finite loss); the message names epoch and batch.
class train_error : public std::runtime_error {
 public:
  explicit train_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pno
