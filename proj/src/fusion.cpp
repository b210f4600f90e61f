#include "iaqcast/fusion.hpp"

namespace iaq {

namespace {

// The modulation head emits [gamma | beta] side by side.
std::pair<Tensor, Tensor> split_halves(const Tensor& m, std::size_t h) {
  return {slice_cols(m, 0, h), slice_cols(m, h, 2 * h)};
}

}  // namespace

void init_fusion_params(ModelParams& mp, std::size_t h, Rng& rng, bool with_feedback) {
  for (const char* q : {"e", "a"}) {
    const std::string s(q);
    mp.add_linear("fusion.W_S_" + s, {h, h}, h, rng);
    mp.add_zeros("fusion.b_S_" + s, {h});
    mp.add_linear("fusion.W_P_" + s, {h, h}, h, rng);
    mp.add_zeros("fusion.b_P_" + s, {h});
  }
  mp.add_linear("fusion.mlp.W1", {h, h}, h, rng);
  mp.add_zeros("fusion.mlp.b1", {h});
  mp.add_linear("fusion.mlp.W2", {h, h}, h, rng);
  mp.add_zeros("fusion.mlp.b2", {h});
  if (!with_feedback) return;
  for (const char* q : {"e", "a"}) {
    const std::string s(q);
    mp.add_linear("fusion.W_mod_" + s, {h, 2 * h}, h, rng);
    // gamma half starts at +1 so the multiplicative gates open at tanh(1);
    // zero init would annihilate the private streams on the first round.
    std::vector<double> b(2 * h, 0.0);
    for (std::size_t i = 0; i < h; ++i) b[i] = 1.0;
    mp.add("fusion.b_mod_" + s, {2 * h}, std::move(b));
  }
  // feedback injections start small so early rounds are near-identity
  // refinements of F rather than random perturbations
  for (const char* nm : {"fusion.W_e", "fusion.W_a"}) {
    auto& w = mp.add_linear(nm, {h, h}, h, rng).data;
    for (auto& v : w) v *= 0.25;
  }
}

Tensor fusion_mlp(Graph& g, const ModelParams& mp, const Tensor& x) {
  Tensor hidden = relu(add(matmul(x, mp.bind(g, "fusion.mlp.W1")),
                           mp.bind(g, "fusion.mlp.b1")));
  return add(matmul(hidden, mp.bind(g, "fusion.mlp.W2")), mp.bind(g, "fusion.mlp.b2"));
}

std::tuple<Tensor, Tensor, Tensor, Tensor> decompose(Graph& g, const ModelParams& mp,
                                                     const Tensor& he, const Tensor& ha) {
  if (he.shape() != ha.shape())
    throw Error::internal("decompose: stream shapes differ: " + shape_str(he.shape()) +
                          " vs " + shape_str(ha.shape()));
  Tensor se = add(matmul(he, mp.bind(g, "fusion.W_S_e")), mp.bind(g, "fusion.b_S_e"));
  Tensor sa = add(matmul(ha, mp.bind(g, "fusion.W_S_a")), mp.bind(g, "fusion.b_S_a"));
  Tensor pe = add(matmul(he, mp.bind(g, "fusion.W_P_e")), mp.bind(g, "fusion.b_P_e"));
  Tensor pa = add(matmul(ha, mp.bind(g, "fusion.W_P_a")), mp.bind(g, "fusion.b_P_a"));
  return {se, sa, pe, pa};
}

Tensor initial_fuse(Graph& g, const ModelParams& mp, const Tensor& se, const Tensor& sa) {
  return fusion_mlp(g, mp, scale(add(se, sa), 0.5));
}

FusionState feedback_round(Graph& g, const ModelParams& mp, const FusionState& st,
                           std::vector<Tensor>* gates_out) {
  const std::size_t h = st.F.shape()[1];

  auto modulate = [&](const char* q, const Tensor& p_prev) {
    const std::string s(q);
    Tensor m = add(matmul(st.F, mp.bind(g, "fusion.W_mod_" + s)),
                   mp.bind(g, "fusion.b_mod_" + s));
    auto [gamma, beta] = split_halves(m, h);
    Tensor gate = tanh(gamma);
    if (gates_out) gates_out->push_back(gate);
    return add(mul(gate, p_prev), beta);
  };

  FusionState next;
  next.P_e = modulate("e", st.P_e);
  next.P_a = modulate("a", st.P_a);
  Tensor injected = add(add(st.F, matmul(next.P_e, mp.bind(g, "fusion.W_e"))),
                        matmul(next.P_a, mp.bind(g, "fusion.W_a")));
  next.F = fusion_mlp(g, mp, injected);
  next.round = st.round + 1;
  return next;
}

FusionArtifacts fuse(Graph& g, const ModelParams& mp, const Tensor& he, const Tensor& ha,
                     int rounds) {
  if (rounds < 0) throw Error::internal("fuse: rounds must be >= 0");
  FusionArtifacts art;
  auto [se, sa, pe, pa] = decompose(g, mp, he, ha);
  art.S_e = se;
  art.S_a = sa;
  art.P_e0 = pe;
  art.P_a0 = pa;
  art.state = {initial_fuse(g, mp, se, sa), pe, pa, 0};
  for (int r = 0; r < rounds; ++r)
    art.state = feedback_round(g, mp, art.state, &art.gates);
  return art;
}

}  // namespace iaq
