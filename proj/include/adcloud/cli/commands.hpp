#pragma once

#include <filesystem>

namespace adcloud::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kJobFailure = 1;
inline constexpr int kConfigError = 2;

/// Registers every op the CLI's clusters need. Must run before
/// engine::run_worker_if_requested in main.
void register_all_ops();

/// $ADCLOUD_HOME, else $HOME/.adcloud, else ./.adcloud.
std::filesystem::path adcloud_home();

int run(int argc, char** argv);

}  // namespace adcloud::cli
