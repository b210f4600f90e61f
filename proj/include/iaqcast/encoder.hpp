#pragma once

#include "iaqcast/params.hpp"

namespace iaq {

// Per-stream encoding: linear projection with ReLU, a stack of gated dilated
// causal temporal blocks, and a linear output projection. Strictly causal:
// output at step t depends only on inputs at steps <= t.
struct EncoderShape {
  std::size_t in_dim = 4;
  std::size_t hidden = 64;
  std::size_t depth = 2;
};

void init_encoder_params(ModelParams& mp, const std::string& prefix,
                         const EncoderShape& es, Rng& rng);

// Temporal core only (the block stack); depth 0 is the identity.
Tensor ste_forward(Graph& g, const ModelParams& mp, const std::string& prefix,
                   const EncoderShape& es, const Tensor& u);

Tensor encode_stream(Graph& g, const ModelParams& mp, const std::string& prefix,
                     const EncoderShape& es, const Tensor& x);

}  // namespace iaq
