#pragma once

#include <tuple>

#include "iaqcast/params.hpp"

namespace iaq {

// Shared/private decomposition, initial fusion, and iterative bi-directional
// feedback between the global fused state and the per-stream private states.
// All tensors are L x h sequences; every update applies row-wise.

struct FusionState {
  Tensor F;
  Tensor P_e;
  Tensor P_a;
  int round = 0;
};

struct FusionArtifacts {
  Tensor S_e, S_a;        // shared candidates
  Tensor P_e0, P_a0;      // private states before any feedback
  FusionState state;      // after the configured rounds
  std::vector<Tensor> gates;  // tanh(gamma) per round and stream, for bound checks
};

// with_feedback=false omits the modulation heads and injection maps; a model
// that never runs a feedback round has no use for them.
void init_fusion_params(ModelParams& mp, std::size_t hidden, Rng& rng,
                        bool with_feedback = true);

std::tuple<Tensor, Tensor, Tensor, Tensor> decompose(Graph& g, const ModelParams& mp,
                                                     const Tensor& he, const Tensor& ha);

Tensor initial_fuse(Graph& g, const ModelParams& mp, const Tensor& se, const Tensor& sa);

FusionState feedback_round(Graph& g, const ModelParams& mp, const FusionState& st,
                           std::vector<Tensor>* gates_out = nullptr);

FusionArtifacts fuse(Graph& g, const ModelParams& mp, const Tensor& he, const Tensor& ha,
                     int rounds);

// The shared two-layer MLP used by both the initial fusion and every
// feedback update.
Tensor fusion_mlp(Graph& g, const ModelParams& mp, const Tensor& x);

}  // namespace iaq
