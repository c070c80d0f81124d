#include "adcloud/cli/commands.hpp"
#include "adcloud/engine/cluster.hpp"

int main(int argc, char** argv) {
  adcloud::cli::register_all_ops();
  if (auto rc = adcloud::engine::run_worker_if_requested(argc, argv)) return *rc;
  return adcloud::cli::run(argc, argv);
}
