#pragma once

#include <sys/types.h>

#include <filesystem>
#include <string>
#include <vector>

namespace adcloud::binstream {

/// Starts `exe` with `args` (argv[0] is the executable path). When `stdin_fd`
/// or `stdout_fd` is >= 0 it is installed as the child's standard input or
/// output. Every other descriptor opened with O_CLOEXEC stays private to the
/// parent. Throws SpawnError if the fork or exec fails.
pid_t spawn_process(const std::filesystem::path& exe, const std::vector<std::string>& args, int stdin_fd = -1,
                    int stdout_fd = -1);

/// Blocks until `pid` terminates. Returns the exit code, or 128 + signal.
int wait_process(pid_t pid);

/// Ignores SIGPIPE process-wide so broken pipes surface as write errors.
void ignore_sigpipe();

}  // namespace adcloud::binstream
