#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace urscheck {

struct ProcessResult {
  int exit_status = 0;  // exit code, or 128 + signal number
  std::string out;
  std::string err;
};

class ProcessTimeout : public std::runtime_error {
 public:
  ProcessTimeout() : std::runtime_error("process timed out") {}
};

/// Runs `command` through /bin/sh -c, capturing stdout and stderr. The child
/// runs in its own process group, which is killed when `timeout` elapses.
/// Throws std::runtime_error if the process cannot be started.
ProcessResult run_command(const std::string& command, std::chrono::milliseconds timeout);

}  // namespace urscheck
