#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace hndh::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigError = 2,
  kIoError = 3,
  kTrainingError = 4,
};

void cmd_synth(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_encode(const RunConfig& cfg);
void cmd_retrieve(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg);
void cmd_ablate(const RunConfig& cfg);
void cmd_export_embeddings(const RunConfig& cfg);

// Full command line entry point. Failures print one JSON error record to
// `err` and return a nonzero ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hndh::cli
