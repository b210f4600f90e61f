#include "iaqcast/model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace iaq {

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "env_only") return Variant::kEnvOnly;
  if (s == "direct_concat") return Variant::kDirectConcat;
  if (s == "two_stream_concat") return Variant::kTwoStreamConcat;
  if (s == "no_feedback") return Variant::kNoFeedback;
  if (s == "short_only") return Variant::kShortOnly;
  if (s == "long_only") return Variant::kLongOnly;
  throw Error::config("unknown model variant '" + s + "'");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kEnvOnly: return "env_only";
    case Variant::kDirectConcat: return "direct_concat";
    case Variant::kTwoStreamConcat: return "two_stream_concat";
    case Variant::kNoFeedback: return "no_feedback";
    case Variant::kShortOnly: return "short_only";
    case Variant::kLongOnly: return "long_only";
  }
  return "?";
}

UncertaintyMode uncertainty_from_string(const std::string& s) {
  if (s == "homo") return UncertaintyMode::kHomo;
  if (s == "hetero") return UncertaintyMode::kHetero;
  throw Error::config("unknown uncertainty mode '" + s + "'");
}

std::string uncertainty_to_string(UncertaintyMode m) {
  return m == UncertaintyMode::kHomo ? "homo" : "hetero";
}

void ModelConfig::validate() const {
  if (lookback == 0 || horizon == 0) throw Error::config("model: lookback/horizon must be positive");
  if (horizon > lookback)
    throw Error::config("model: horizon may not exceed lookback (readout slices the "
                        "final P of L steps)");
  if (hidden == 0 || gru_long == 0 || gru_short == 0)
    throw Error::config("model: widths must be positive");
  if (feedback_rounds < 0) throw Error::config("model: feedback_rounds must be >= 0");
}

bool ModelConfig::uses_fusion() const {
  switch (variant) {
    case Variant::kFull:
    case Variant::kNoFeedback:
    case Variant::kShortOnly:
    case Variant::kLongOnly:
      return true;
    default:
      return false;
  }
}

std::size_t ModelConfig::head_width() const {
  if (variant == Variant::kShortOnly) return gru_short;
  if (variant == Variant::kLongOnly) return gru_long;
  return gru_long + gru_short;
}

void init_gru_params(ModelParams& mp, const std::string& prefix, std::size_t in_dim,
                     std::size_t h, Rng& rng) {
  for (const char* gate : {"z", "r", "c"}) {
    const std::string s(gate);
    mp.add_linear(prefix + ".W_x" + s, {in_dim, h}, in_dim, rng);
    mp.add_linear(prefix + ".W_h" + s, {h, h}, h, rng);
    mp.add_zeros(prefix + ".b_" + s, {h});
  }
}

namespace {

struct GruDims {
  std::size_t long_in = 0;
  std::size_t short_in = 0;
  bool want_long = true;
  bool want_short = true;
};

GruDims gru_dims(const ModelConfig& cfg) {
  GruDims d;
  const std::size_t h = cfg.hidden;
  switch (cfg.variant) {
    case Variant::kFull:
    case Variant::kNoFeedback:
      d.long_in = h;
      d.short_in = 2 * h;
      break;
    case Variant::kShortOnly:
      d.short_in = 2 * h;
      d.want_long = false;
      break;
    case Variant::kLongOnly:
      d.long_in = h;
      d.want_short = false;
      break;
    case Variant::kEnvOnly:
      d.long_in = h;
      d.short_in = h;
      break;
    case Variant::kDirectConcat:
      d.long_in = h;
      d.short_in = h;
      break;
    case Variant::kTwoStreamConcat:
      d.long_in = 2 * h;
      d.short_in = 2 * h;
      break;
  }
  return d;
}

}  // namespace

ModelParams init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(splitmix64(seed ^ 0x10DE1AA5ull));
  ModelParams mp;

  const EncoderShape env_shape{cfg.env_dim, cfg.hidden, cfg.ste_depth};
  const EncoderShape act_shape{cfg.act_dim, cfg.hidden, cfg.ste_depth};
  const EncoderShape cat_shape{cfg.env_dim + cfg.act_dim, cfg.hidden, cfg.ste_depth};

  switch (cfg.variant) {
    case Variant::kEnvOnly:
      init_encoder_params(mp, "enc_e", env_shape, rng);
      break;
    case Variant::kDirectConcat:
      init_encoder_params(mp, "enc_c", cat_shape, rng);
      break;
    default:
      init_encoder_params(mp, "enc_e", env_shape, rng);
      init_encoder_params(mp, "enc_a", act_shape, rng);
      break;
  }

  if (cfg.uses_fusion()) {
    const bool with_feedback =
        cfg.variant != Variant::kNoFeedback && cfg.feedback_rounds > 0;
    init_fusion_params(mp, cfg.hidden, rng, with_feedback);
  }

  const GruDims gd = gru_dims(cfg);
  if (gd.want_long) init_gru_params(mp, "gru_long", gd.long_in, cfg.gru_long, rng);
  if (gd.want_short) init_gru_params(mp, "gru_short", gd.short_in, cfg.gru_short, rng);

  const std::size_t dz = cfg.head_width();
  mp.add_linear("head.W", {dz, kNumTargets}, dz, rng);
  mp.add_zeros("head.b", {kNumTargets});

  if (cfg.uncertainty == UncertaintyMode::kHomo) {
    mp.add_zeros("unc.theta", {kNumTargets});
  } else {
    mp.add_linear("unc.W1", {dz, cfg.hidden}, dz, rng);
    mp.add_zeros("unc.b1", {cfg.hidden});
    mp.add_linear("unc.W2", {cfg.hidden, kNumTargets}, cfg.hidden, rng);
    mp.add_zeros("unc.b2", {kNumTargets});
  }
  return mp;
}

Tensor gru_forward(Graph& g, const ModelParams& mp, const std::string& prefix,
                   const Tensor& x) {
  return gru_seq(x, mp.bind(g, prefix + ".W_xz"), mp.bind(g, prefix + ".W_hz"),
                 mp.bind(g, prefix + ".b_z"), mp.bind(g, prefix + ".W_xr"),
                 mp.bind(g, prefix + ".W_hr"), mp.bind(g, prefix + ".b_r"),
                 mp.bind(g, prefix + ".W_xc"), mp.bind(g, prefix + ".W_hc"),
                 mp.bind(g, prefix + ".b_c"));
}

ForwardArtifacts model_forward(Graph& g, const ModelConfig& cfg, const ModelParams& mp,
                               std::span<const double> x_env,
                               std::span<const double> x_act) {
  cfg.validate();
  const std::size_t L = cfg.lookback, P = cfg.horizon;
  if (x_env.size() != L * cfg.env_dim)
    throw Error::internal("model_forward: x_env size mismatch");
  const bool needs_act = cfg.variant != Variant::kEnvOnly;
  if (needs_act && x_act.size() != L * cfg.act_dim)
    throw Error::internal("model_forward: x_act size mismatch");

  const EncoderShape env_shape{cfg.env_dim, cfg.hidden, cfg.ste_depth};
  const EncoderShape act_shape{cfg.act_dim, cfg.hidden, cfg.ste_depth};
  const EncoderShape cat_shape{cfg.env_dim + cfg.act_dim, cfg.hidden, cfg.ste_depth};

  ForwardArtifacts art;
  Tensor z_long, z_short;
  bool have_long = false, have_short = false;

  switch (cfg.variant) {
    case Variant::kEnvOnly: {
      Tensor xe = g.constant({L, cfg.env_dim}, x_env);
      Tensor he = encode_stream(g, mp, "enc_e", env_shape, xe);
      z_long = gru_forward(g, mp, "gru_long", he);
      z_short = gru_forward(g, mp, "gru_short", he);
      have_long = have_short = true;
      break;
    }
    case Variant::kDirectConcat: {
      const std::size_t d = cfg.env_dim + cfg.act_dim;
      std::vector<double> packed(L * d);
      for (std::size_t i = 0; i < L; ++i) {
        std::memcpy(packed.data() + i * d, x_env.data() + i * cfg.env_dim,
                    cfg.env_dim * sizeof(double));
        std::memcpy(packed.data() + i * d + cfg.env_dim, x_act.data() + i * cfg.act_dim,
                    cfg.act_dim * sizeof(double));
      }
      Tensor xc = g.constant({L, d}, packed);
      Tensor hc = encode_stream(g, mp, "enc_c", cat_shape, xc);
      z_long = gru_forward(g, mp, "gru_long", hc);
      z_short = gru_forward(g, mp, "gru_short", hc);
      have_long = have_short = true;
      break;
    }
    case Variant::kTwoStreamConcat: {
      Tensor xe = g.constant({L, cfg.env_dim}, x_env);
      Tensor xa = g.constant({L, cfg.act_dim}, x_act);
      Tensor he = encode_stream(g, mp, "enc_e", env_shape, xe);
      Tensor ha = encode_stream(g, mp, "enc_a", act_shape, xa);
      std::vector<Tensor> cat{he, ha};
      Tensor c = concat(cat, 1);
      z_long = gru_forward(g, mp, "gru_long", c);
      z_short = gru_forward(g, mp, "gru_short", c);
      have_long = have_short = true;
      break;
    }
    default: {  // fusion variants
      Tensor xe = g.constant({L, cfg.env_dim}, x_env);
      Tensor xa = g.constant({L, cfg.act_dim}, x_act);
      Tensor he = encode_stream(g, mp, "enc_e", env_shape, xe);
      Tensor ha = encode_stream(g, mp, "enc_a", act_shape, xa);
      const int rounds =
          cfg.variant == Variant::kNoFeedback ? 0 : cfg.feedback_rounds;
      FusionArtifacts fa = fuse(g, mp, he, ha, rounds);
      art.has_fusion = true;
      art.S_e = fa.S_e;
      art.S_a = fa.S_a;
      art.F = fa.state.F;
      art.P_e = fa.state.P_e;
      art.P_a = fa.state.P_a;
      art.gates = fa.gates;
      if (cfg.variant != Variant::kShortOnly) {
        z_long = gru_forward(g, mp, "gru_long", fa.state.F);
        have_long = true;
      }
      if (cfg.variant != Variant::kLongOnly) {
        std::vector<Tensor> ps{fa.state.P_e, fa.state.P_a};
        z_short = gru_forward(g, mp, "gru_short", concat(ps, 1));
        have_short = true;
      }
      break;
    }
  }

  Tensor z;
  if (have_long && have_short) {
    std::vector<Tensor> zs{z_long, z_short};
    z = concat(zs, 1);
  } else {
    z = have_long ? z_long : z_short;
  }

  art.y_full = add(matmul(z, mp.bind(g, "head.W")), mp.bind(g, "head.b"));
  art.mu = slice_rows(art.y_full, L - P, L);

  if (cfg.uncertainty == UncertaintyMode::kHetero) {
    Tensor zp = slice_rows(z, L - P, L);
    Tensor hidden = relu(add(matmul(zp, mp.bind(g, "unc.W1")), mp.bind(g, "unc.b1")));
    Tensor raw = add(matmul(hidden, mp.bind(g, "unc.W2")), mp.bind(g, "unc.b2"));
    art.log_sigma = clamp(raw, -7.0, 3.0);
  } else {
    Tensor zeros = g.constant({P, kNumTargets}, 0.0);
    art.log_sigma = add(zeros, mp.bind(g, "unc.theta"));
  }
  return art;
}

Forecast make_forecast(const ForwardArtifacts& art, const Normalizer& norm) {
  const std::size_t P = art.mu.shape()[0];
  Forecast f;
  f.mu_norm.assign(art.mu.values().begin(), art.mu.values().end());
  f.log_sigma.assign(art.log_sigma.values().begin(), art.log_sigma.values().end());
  f.mu.resize(P * kNumTargets);
  f.sigma.resize(P * kNumTargets);
  for (std::size_t j = 0; j < P; ++j) {
    for (std::size_t k = 0; k < kNumTargets; ++k) {
      const std::size_t i = j * kNumTargets + k;
      f.mu[i] = norm.inverse(kTargetChannel[k], f.mu_norm[i]);
      f.sigma[i] = std::exp(f.log_sigma[i]) * norm.target_sd(k);
    }
  }
  return f;
}

// --- checkpoint -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'I', 'A', 'Q', 'C'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {
      {"lookback", c.lookback},
      {"horizon", c.horizon},
      {"env_dim", c.env_dim},
      {"act_dim", c.act_dim},
      {"hidden", c.hidden},
      {"ste_depth", c.ste_depth},
      {"feedback_rounds", c.feedback_rounds},
      {"gru_long", c.gru_long},
      {"gru_short", c.gru_short},
      {"uncertainty", uncertainty_to_string(c.uncertainty)},
      {"variant", variant_to_string(c.variant)},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.lookback = j.at("lookback").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.env_dim = j.at("env_dim").get<std::size_t>();
  c.act_dim = j.at("act_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.ste_depth = j.at("ste_depth").get<std::size_t>();
  c.feedback_rounds = j.at("feedback_rounds").get<int>();
  c.gru_long = j.at("gru_long").get<std::size_t>();
  c.gru_short = j.at("gru_short").get<std::size_t>();
  c.uncertainty = uncertainty_from_string(j.at("uncertainty").get<std::string>());
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  return c;
}

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error::data("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams& params, const Normalizer& norm,
                     const std::string& run_config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error::io("cannot open checkpoint '" + path + "' for writing");

  nlohmann::json meta = {
      {"model", model_config_to_json(cfg)},
      {"normalizer",
       {{"mean", std::vector<double>(norm.mean.begin(), norm.mean.end())},
        {"sd", std::vector<double>(norm.sd.begin(), norm.sd.end())}}},
      {"run_config", run_config_echo},
  };
  const std::string meta_str = meta.dump();

  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  write_pod(out, static_cast<std::uint64_t>(params.count()));
  for (const auto& p : params.all()) {
    write_pod(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(out, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p.data.data()),
              static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  }
  if (!out) throw Error::io("checkpoint write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error::io("cannot open checkpoint '" + path + "'");

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error::data("'" + path + "' is not a checkpoint file");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw Error::data("checkpoint format version " + std::to_string(version) +
                      " unsupported");

  const auto meta_len = read_pod<std::uint64_t>(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw Error::data("checkpoint truncated");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const std::exception& e) {
    throw Error::data(std::string("checkpoint metadata unreadable: ") + e.what());
  }

  Checkpoint ck;
  ck.config = model_config_from_json(meta.at("model"));
  const auto mean = meta.at("normalizer").at("mean").get<std::vector<double>>();
  const auto sd = meta.at("normalizer").at("sd").get<std::vector<double>>();
  if (mean.size() != kNumEnvChannels || sd.size() != kNumEnvChannels)
    throw Error::data("checkpoint normalizer has the wrong arity");
  std::copy(mean.begin(), mean.end(), ck.norm.mean.begin());
  std::copy(sd.begin(), sd.end(), ck.norm.sd.begin());
  ck.run_config_echo = meta.at("run_config").get<std::string>();

  const auto n_params = read_pod<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    std::vector<double> data(shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw Error::data("checkpoint truncated in parameter '" + name + "'");
    ck.params.add(name, std::move(shape), std::move(data));
  }
  return ck;
}

}  // namespace iaq
