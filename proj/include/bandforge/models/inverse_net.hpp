#pragma once
// Inverse design model: 1000-bin transmissibility spectrum -> geometry
// raster. Per-bin embeddings with a learnable Gaussian positional encoding
// feed multi-head self-attention; the pooled sequence projects to a rectified
// (3,128,256) latent which is refined by valid convolutions under reflection
// padding, passed through a multi-scale residual block, and decoded by
// stride-1 transposed convolutions to a Tanh raster.

#include <nlohmann/json.hpp>

#include "bandforge/io/sha256.hpp"
#include "bandforge/nn/conv.hpp"
#include "bandforge/nn/ops.hpp"
#include "bandforge/nn/optim.hpp"

namespace bandforge::models {

// PE[2p] = sin(g_p), PE[2p+1] = cos(g_p), g_p = exp(-(log(p+1)-mu0)^2 /
// (2*sigma0^2)), sigma0 = softplus(rho) > 0. log(p+1) avoids the p = 0
// singularity of log(p).
template <typename T>
int gaussian_pe(nn::Tape<T>& tp, int mu0, int rho, int length) {
  if (length % 2) throw ValidationError("gaussian_pe: length must be even");
  if (tp.val(mu0).numel() != 1 || tp.val(rho).numel() != 1)
    throw ValidationError("gaussian_pe: mu0/rho must be scalars");
  double mu = double(tp.val(mu0).v[0]);
  double r = double(tp.val(rho).v[0]);
  double sigma = std::log1p(std::exp(r));  // softplus
  nn::Tensor<T> pe({length});
  int pairs = length / 2;
  auto gs = std::make_shared<std::vector<double>>(std::size_t(pairs));
  for (int p = 0; p < pairs; ++p) {
    double L = std::log(double(p) + 1.0);
    double g = std::exp(-(L - mu) * (L - mu) / (2.0 * sigma * sigma));
    (*gs)[std::size_t(p)] = g;
    pe.v[std::size_t(2 * p)] = T(std::sin(g));
    pe.v[std::size_t(2 * p + 1)] = T(std::cos(g));
  }
  return tp.add(std::move(pe), nn::any_grad(tp, {mu0, rho}),
                [mu0, rho, pairs, mu, sigma, gs](nn::Tape<T>& t, int s) {
                  const nn::Tensor<T>& g = t.grad(s);
                  double dmu = 0, dsig = 0;
                  for (int p = 0; p < pairs; ++p) {
                    double L = std::log(double(p) + 1.0);
                    double gp = (*gs)[std::size_t(p)];
                    double dout = double(g.v[std::size_t(2 * p)]) * std::cos(gp) -
                                  double(g.v[std::size_t(2 * p + 1)]) * std::sin(gp);
                    double dg_dmu = gp * (L - mu) / (sigma * sigma);
                    double dg_dsig = gp * (L - mu) * (L - mu) / (sigma * sigma * sigma);
                    dmu += dout * dg_dmu;
                    dsig += dout * dg_dsig;
                  }
                  if (t.needs_grad(mu0)) t.grad(mu0).v[0] += T(dmu);
                  if (t.needs_grad(rho)) {
                    double drho = dsig / (1.0 + std::exp(-double(t.val(rho).v[0])));
                    t.grad(rho).v[0] += T(drho);
                  }
                });
}

struct InverseConfig {
  int bins = 1000;
  int d_model = 64;
  int attn_heads = 4;
  int latent_c = 3, latent_h = 128, latent_w = 256;
  int refine_ch = 32;
  std::vector<int> msrn_kernels = {1, 3, 5};
  std::vector<int> decode_ch = {16, 8, 4};
  int reflect_pad = 3;
  std::string pe_init = "literal_midpoint";  // mu0 = bins/2; or "log_midpoint"
  int pooled_rows = 128;  // sequence pooling before the latent projection
};

inline void validate(const InverseConfig& c) {
  if (c.bins != 1000) throw ConfigError("inverse config: bins must be 1000");
  if (c.d_model % c.attn_heads)
    throw ConfigError("inverse config: heads must divide d_model");
  if (c.latent_c != 3 || c.latent_h != 128 || c.latent_w != 256)
    throw ConfigError("inverse config: latent shape must be (3,128,256)");
  if (c.msrn_kernels != std::vector<int>{1, 3, 5})
    throw ConfigError("inverse config: msrn kernels must be (1,3,5)");
  if (c.pe_init != "literal_midpoint" && c.pe_init != "log_midpoint")
    throw ConfigError("inverse config: unknown pe_init " + c.pe_init);
  if (c.latent_h % c.pooled_rows && c.pooled_rows % c.latent_h)
    throw ConfigError("inverse config: pooled_rows incompatible");
}

inline json to_json(const InverseConfig& c) {
  return json{{"bins", c.bins},
              {"d_model", c.d_model},
              {"attn_heads", c.attn_heads},
              {"latent_c", c.latent_c},
              {"latent_h", c.latent_h},
              {"latent_w", c.latent_w},
              {"refine_ch", c.refine_ch},
              {"msrn_kernels", c.msrn_kernels},
              {"decode_ch", c.decode_ch},
              {"reflect_pad", c.reflect_pad},
              {"pe_init", c.pe_init},
              {"pooled_rows", c.pooled_rows}};
}

template <typename T>
class InverseNet {
 public:
  using Tensor = nn::Tensor<T>;
  InverseConfig cfg;
  nn::ParamStore<T> ps;

  explicit InverseNet(InverseConfig c = {}, std::uint64_t seed = 1)
      : cfg(std::move(c)) {
    validate(cfg);
    auto rng = make_rng(seed, 0x494e5645ULL);
    auto fc_w = [&](const std::string& name, int out, int in) {
      Tensor w({out, in});
      w.fill_uniform(rng, T(std::sqrt(1.0 / double(in))));
      ps.add(name + ".w", std::move(w));
      ps.add(name + ".b", Tensor({out}));
    };
    auto conv_w = [&](const std::string& name, int oc, int ic, int k) {
      Tensor w({oc, ic, k, k});
      w.fill_uniform(rng, T(std::sqrt(1.0 / (double(ic) * k * k))));
      ps.add(name + ".w", std::move(w));
      ps.add(name + ".b", Tensor({oc}));
    };
    auto convt_w = [&](const std::string& name, int ic, int oc, int k) {
      Tensor w({ic, oc, k, k});
      w.fill_uniform(rng, T(std::sqrt(1.0 / (double(ic) * k * k))));
      ps.add(name + ".w", std::move(w));
      ps.add(name + ".b", Tensor({oc}));
    };
    fc_w("embed", cfg.d_model, 1);
    double mu0 = cfg.pe_init == "literal_midpoint"
                     ? double(cfg.bins) / 2.0
                     : std::log(double(cfg.bins) / 2.0);
    ps.add("pe.mu0", Tensor({1}, T(mu0)));
    // softplus(rho) = 1  =>  rho = log(e - 1)
    ps.add("pe.rho", Tensor({1}, T(std::log(std::exp(1.0) - 1.0))));
    for (const char* n : {"attn.q", "attn.k", "attn.v", "attn.o"})
      fc_w(n, cfg.d_model, cfg.d_model);
    int row_feats = cfg.latent_c * cfg.latent_w;  // 768
    fc_w("latent", row_feats, cfg.d_model);
    conv_w("refine1", cfg.refine_ch, cfg.latent_c, 3);
    conv_w("refine2", cfg.refine_ch, cfg.refine_ch, 3);
    conv_w("refine3", cfg.refine_ch, cfg.refine_ch, 3);
    for (int k : cfg.msrn_kernels)
      conv_w("msrn.k" + std::to_string(k), cfg.refine_ch, cfg.refine_ch, k);
    conv_w("msrn.fuse", cfg.refine_ch,
           cfg.refine_ch * int(cfg.msrn_kernels.size()), 1);
    int ic = cfg.refine_ch;
    for (std::size_t i = 0; i < cfg.decode_ch.size(); ++i) {
      convt_w("decode" + std::to_string(i), ic, cfg.decode_ch[i], 3);
      ic = cfg.decode_ch[i];
    }
    conv_w("out", 1, ic, 3);
  }

  std::string fingerprint() const { return io::sha256_hex(to_json(cfg).dump()); }

  // Spectrum [bins] -> rectified latent (3,128,256).
  int spectrum_attention(nn::Tape<T>& tp, int s, bool frozen) {
    if (tp.val(s).shape != std::vector<int>{cfg.bins})
      throw ValidationError("inverse: spectrum must have " +
                            std::to_string(cfg.bins) + " bins, got " +
                            nn::shape_str(tp.val(s).shape));
    auto P = [&](const std::string& n) { return leaf(tp, n, frozen); };
    int xin = nn::reshape(tp, s, {cfg.bins, 1});
    int x = nn::linear(tp, xin, P("embed.w"), P("embed.b"));
    int pe = gaussian_pe(tp, P("pe.mu0"), P("pe.rho"), cfg.bins);
    x = nn::add_pos_scalar(tp, x, pe);
    int q = nn::linear(tp, x, P("attn.q.w"), P("attn.q.b"));
    int k = nn::linear(tp, x, P("attn.k.w"), P("attn.k.b"));
    int v = nn::linear(tp, x, P("attn.v.w"), P("attn.v.b"));
    int dh = cfg.d_model / cfg.attn_heads;
    std::vector<int> ctx;
    for (int h = 0; h < cfg.attn_heads; ++h) {
      int qh = nn::slice_cols(tp, q, h * dh, (h + 1) * dh);
      int kh = nn::slice_cols(tp, k, h * dh, (h + 1) * dh);
      int vh = nn::slice_cols(tp, v, h * dh, (h + 1) * dh);
      int sc = nn::scale(tp, nn::matmul(tp, qh, kh, true),
                         T(1.0 / std::sqrt(double(dh))));
      int att = nn::softmax_rows(tp, sc);
      ctx.push_back(nn::matmul(tp, att, vh));
    }
    int cat = nn::concat_cols(tp, ctx);
    int out = nn::linear(tp, cat, P("attn.o.w"), P("attn.o.b"));
    int pooled = nn::adaptive_avg_rows(tp, out, cfg.pooled_rows);
    int lat = nn::relu(
        tp, nn::linear(tp, pooled, P("latent.w"), P("latent.b")));
    return nn::rows_split_chw(tp, lat, cfg.latent_c, cfg.latent_w);
  }

  int refine(nn::Tape<T>& tp, int latent, bool frozen) {
    auto P = [&](const std::string& n) { return leaf(tp, n, frozen); };
    int x = nn::reflection_pad_chw(tp, latent, cfg.reflect_pad);
    x = nn::relu(tp, nn::conv2d(tp, x, P("refine1.w"), P("refine1.b")));
    x = nn::relu(tp, nn::conv2d(tp, x, P("refine2.w"), P("refine2.b")));
    x = nn::relu(tp, nn::conv2d(tp, x, P("refine3.w"), P("refine3.b")));
    return x;
  }

  int msrn(nn::Tape<T>& tp, int x, bool frozen) {
    auto P = [&](const std::string& n) { return leaf(tp, n, frozen); };
    std::vector<int> paths;
    for (int k : cfg.msrn_kernels) {
      std::string n = "msrn.k" + std::to_string(k);
      paths.push_back(nn::conv2d_same(tp, x, P(n + ".w"), P(n + ".b")));
    }
    int cat = nn::concat0(tp, paths);
    int fused = nn::conv2d(tp, cat, P("msrn.fuse.w"), P("msrn.fuse.b"));
    return nn::add(tp, x, fused);
  }

  int decode(nn::Tape<T>& tp, int x, bool frozen) {
    auto P = [&](const std::string& n) { return leaf(tp, n, frozen); };
    for (std::size_t i = 0; i < cfg.decode_ch.size(); ++i) {
      std::string n = "decode" + std::to_string(i);
      x = nn::relu(
          tp, nn::conv_transpose2d(tp, x, P(n + ".w"), P(n + ".b"), 1));
    }
    return nn::tanh_op(tp, nn::conv2d_same(tp, x, P("out.w"), P("out.b")));
  }

  int design_graph(nn::Tape<T>& tp, int spectrum, bool frozen = false) {
    return decode(tp, msrn(tp, refine(tp, spectrum_attention(tp, spectrum, frozen), frozen), frozen), frozen);
  }

  // Evaluation-mode inference: normalized spectrum -> raster (1,128,256).
  Tensor design(const Tensor& spectrum) {
    nn::Tape<T> tp;
    int out = design_graph(tp, tp.constant(spectrum), true);
    return tp.val(out);
  }

 private:
  int leaf(nn::Tape<T>& tp, const std::string& name, bool frozen) {
    auto& e = ps.at(name);
    return tp.param(e.w, frozen ? nullptr : &e.g);
  }
};

}  // namespace bandforge::models
