#pragma once

#include <stdexcept>
#include <string>

namespace iadvtext {

/// Error category, mapped onto process exit codes and C API status values:
/// config/usage = 1, data = 2, checkpoint = 3, runtime = 4.
enum class ErrorKind { kConfig = 1, kData = 2, kCheckpoint = 3, kRuntime = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void fail_runtime(const std::string& msg) {
  throw Error(ErrorKind::kRuntime, msg);
}

}  // namespace iadvtext
