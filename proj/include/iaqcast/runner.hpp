#pragma once

#include <string>
#include <vector>

#include "iaqcast/config.hpp"

namespace iaq::run {

// Subcommand pipelines. All artifacts land under cfg.report_dir except the
// checkpoint (cfg.checkpoint_path) and the simulated trace.

void simulate(const RunConfig& cfg, const std::string& out_csv);  // empty -> cfg.data_path
void train_run(const RunConfig& cfg);
void eval_run(const RunConfig& cfg);
void forecast_run(const RunConfig& cfg);
void ablate_run(const RunConfig& cfg, const std::vector<std::string>& axes);  // empty -> all
void sweep_run(const RunConfig& cfg);

}  // namespace iaq::run
