#include "iaqcast/encoder.hpp"

namespace iaq {

namespace {

std::string block_name(const std::string& prefix, std::size_t i, const char* leaf) {
  return prefix + ".blk" + std::to_string(i) + "." + leaf;
}

// Rows shifted down by `s` steps, zero-filled at the top. Gives each
// convolution tap access to the input `s` steps in the past.
Tensor shift_down(Graph& g, const Tensor& u, std::size_t s) {
  const std::size_t rows = u.shape()[0];
  if (s == 0) return u;
  if (s >= rows) return g.constant(u.shape(), 0.0);
  Tensor pad = g.constant({s, u.shape()[1]}, 0.0);
  std::vector<Tensor> parts{pad, slice_rows(u, 0, rows - s)};
  return concat(parts, 0);
}

// Kernel-size-3 causal convolution at dilation d, expressed as three shifted
// matrix products.
Tensor causal_conv3(Graph& g, const ModelParams& mp, const std::string& base,
                    const Tensor& u, std::size_t d) {
  Tensor y = matmul(u, mp.bind(g, base + ".k0"));
  y = add(y, matmul(shift_down(g, u, d), mp.bind(g, base + ".k1")));
  y = add(y, matmul(shift_down(g, u, 2 * d), mp.bind(g, base + ".k2")));
  return add(y, mp.bind(g, base + ".b"));
}

}  // namespace

void init_encoder_params(ModelParams& mp, const std::string& prefix,
                         const EncoderShape& es, Rng& rng) {
  const std::size_t h = es.hidden;
  mp.add_linear(prefix + ".W_p", {es.in_dim, h}, es.in_dim, rng);
  mp.add_zeros(prefix + ".b_p", {h});
  for (std::size_t i = 0; i < es.depth; ++i) {
    for (const char* branch : {"main", "gate"}) {
      const std::string base = block_name(prefix, i, branch);
      mp.add_linear(base + ".k0", {h, h}, 3 * h, rng);
      mp.add_linear(base + ".k1", {h, h}, 3 * h, rng);
      mp.add_linear(base + ".k2", {h, h}, 3 * h, rng);
      mp.add_zeros(base + ".b", {h});
    }
    mp.add(block_name(prefix, i, "ln_gain"), {h}, std::vector<double>(h, 1.0));
    mp.add_zeros(block_name(prefix, i, "ln_bias"), {h});
  }
  mp.add_linear(prefix + ".W_o", {h, h}, h, rng);
  mp.add_zeros(prefix + ".b_o", {h});
}

Tensor ste_forward(Graph& g, const ModelParams& mp, const std::string& prefix,
                   const EncoderShape& es, const Tensor& u) {
  Tensor h = u;
  for (std::size_t i = 0; i < es.depth; ++i) {
    const std::size_t dilation = static_cast<std::size_t>(1) << i;
    Tensor main = causal_conv3(g, mp, block_name(prefix, i, "main"), h, dilation);
    Tensor gate = causal_conv3(g, mp, block_name(prefix, i, "gate"), h, dilation);
    Tensor gated = mul(main, sigmoid(gate));
    Tensor normed = layer_norm(gated, mp.bind(g, block_name(prefix, i, "ln_gain")),
                               mp.bind(g, block_name(prefix, i, "ln_bias")));
    h = add(h, normed);  // residual around the normalized branch
  }
  return h;
}

Tensor encode_stream(Graph& g, const ModelParams& mp, const std::string& prefix,
                     const EncoderShape& es, const Tensor& x) {
  if (x.shape().size() != 2 || x.shape()[1] != es.in_dim)
    throw Error::internal(prefix + ": input shape " + shape_str(x.shape()) +
                          " does not match in_dim " + std::to_string(es.in_dim));
  Tensor u = relu(add(matmul(x, mp.bind(g, prefix + ".W_p")), mp.bind(g, prefix + ".b_p")));
  Tensor h = ste_forward(g, mp, prefix, es, u);
  return add(matmul(h, mp.bind(g, prefix + ".W_o")), mp.bind(g, prefix + ".b_o"));
}

}  // namespace iaq
