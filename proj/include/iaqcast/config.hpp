#pragma once

#include <string>

#include "iaqcast/datagen.hpp"
#include "iaqcast/dataset.hpp"
#include "iaqcast/model.hpp"
#include "iaqcast/objective.hpp"
#include "iaqcast/trainer.hpp"

namespace iaq {

// One configuration document drives every subcommand. Unknown keys are
// rejected; the canonical JSON echo is reproduced in every output header.
struct RunConfig {
  std::uint64_t seed = 42;

  std::string data_path = "data.csv";
  WindowConfig window;
  std::string embedding_mode = "hash";  // "hash" | "table"
  std::size_t embedding_dim = 32;
  std::string embedding_table;

  ModelConfig model;
  LossConfig loss;
  TrainConfig train;

  int sim_days = 1;
  NoiseSd sim_noise{0.05, 0.3, 4.0, 0.3};

  std::string checkpoint_path = "checkpoint.iaq";
  std::string report_dir = "reports";

  std::string echo;  // canonical JSON of the whole document

  // Build the embedding provider the config names.
  EmbeddingProvider make_embedding() const;

  // Model config with data-dependent fields (L, P, act_dim) resolved.
  ModelConfig resolved_model(std::size_t act_dim) const;

  void validate() const;
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Dotted-path override, e.g. "train.epochs=5" or "model.variant=env_only".
// Values parse as JSON scalars when possible, otherwise as strings.
void apply_override(RunConfig& cfg, const std::string& key_eq_value);

}  // namespace iaq
