// iaqcast command-line front end. Talks to the engine exclusively through the
// C API in iaqcast/iaqcast.h; exit codes mirror iaq_status.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "iaqcast/iaqcast.h"

namespace {

struct ConfigDeleter {
  void operator()(iaq_config* c) const { iaq_config_free(c); }
};
using ConfigPtr = std::unique_ptr<iaq_config, ConfigDeleter>;

const char* category_of(iaq_status s) {
  switch (s) {
    case IAQ_ERR_CONFIG: return "config";
    case IAQ_ERR_DATA: return "data";
    case IAQ_ERR_NUMERIC: return "numeric";
    case IAQ_ERR_IO: return "io";
    default: return "internal";
  }
}

int fail(iaq_status s) {
  std::fprintf(stderr, "error: %s: %s\n", category_of(s), iaq_last_error());
  return static_cast<int>(s);
}

// Builds the effective configuration: file first, then --set overrides in
// order (later flags win).
iaq_status build_config(const std::string& config_path,
                        const std::vector<std::string>& sets, ConfigPtr& out) {
  iaq_config* raw = nullptr;
  iaq_status s =
      config_path.empty() ? iaq_config_default(&raw) : iaq_config_load(config_path.c_str(), &raw);
  if (s != IAQ_OK) return s;
  out.reset(raw);
  for (const auto& kv : sets) {
    s = iaq_config_set(out.get(), kv.c_str());
    if (s != IAQ_OK) return s;
  }
  return IAQ_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Indoor CO2 / PM2.5 forecasting engine"};
  app.footer(
      "Configuration precedence: built-in defaults < --config file < --set overrides\n"
      "(later --set flags win). Keys use dotted paths, e.g. --set train.epochs=5.\n"
      "Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric divergence.");
  app.require_subcommand(1);
  app.fallthrough(true);  // accept global options after the subcommand

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "Run configuration JSON file");
  app.add_option("--set", sets, "Override a config key (section.key=value); repeatable");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic indoor trace CSV");
  std::string sim_out;
  int sim_days = 0;
  std::uint64_t sim_seed = 0;
  bool sim_seed_set = false, sim_days_set = false;
  sim->add_option("-o,--out", sim_out, "Output CSV path (default: data.path)");
  sim->add_option("--days", sim_days, "Days to simulate")->each([&](const std::string&) {
    sim_days_set = true;
  });
  sim->add_option("--seed", sim_seed, "Scenario seed")->each([&](const std::string&) {
    sim_seed_set = true;
  });

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  auto* fc = app.add_subcommand("forecast", "Write the prediction export CSV");
  auto* ab = app.add_subcommand("ablate", "Run ablation matrices");
  std::string axes;
  ab->add_option("--axes", axes,
                 "Comma-separated axes: streams,feedback_R,timescale,loss,regularizers");
  auto* sw = app.add_subcommand("sweep", "Sweep lookback/horizon configurations");

  CLI11_PARSE(app, argc, argv);

  if (sim_days_set) sets.push_back("simulate.days=" + std::to_string(sim_days));
  if (sim_seed_set) sets.push_back("seed=" + std::to_string(sim_seed));

  ConfigPtr cfg;
  iaq_status s = build_config(config_path, sets, cfg);
  if (s != IAQ_OK) return fail(s);

  if (sim->parsed()) {
    s = iaq_simulate(cfg.get(), sim_out.empty() ? nullptr : sim_out.c_str());
  } else if (tr->parsed()) {
    s = iaq_train(cfg.get());
  } else if (ev->parsed()) {
    s = iaq_eval(cfg.get());
  } else if (fc->parsed()) {
    s = iaq_forecast(cfg.get());
  } else if (ab->parsed()) {
    s = iaq_ablate(cfg.get(), axes.empty() ? nullptr : axes.c_str());
  } else if (sw->parsed()) {
    s = iaq_sweep(cfg.get());
  }
  return s == IAQ_OK ? 0 : fail(s);
}
