#pragma once
// Forward analysis model: geometry raster + material properties -> 1000-bin
// transmissibility spectrum (normalized units). A strided stem convolution
// produces a C x 16 x 32 feature grid, 12 geometric-feature-extraction (GFE)
// blocks apply multi-head spatial gating attention, and a pooled FC head with
// the material features appended regresses the spectrum.

#include <nlohmann/json.hpp>

#include "bandforge/io/sha256.hpp"
#include "bandforge/nn/conv.hpp"
#include "bandforge/nn/ops.hpp"
#include "bandforge/nn/optim.hpp"

namespace bandforge::models {

using nlohmann::json;

struct ForwardConfig {
  int gfe_blocks = 12;
  int heads = 8;
  std::vector<int> head_alphas = {1, 1, 1, 3, 3, 3, 5, 5};
  int attn_kernel = 7;  // beta
  int channels = 16;
  double dropout = 0.1;
  int stem_kernel = 8, stem_stride = 8;
  int pooled_h = 8, pooled_w = 16;
  int hidden = 512;
  int out_bins = 1000;
  int in_h = 128, in_w = 256;
  int material_feats = 4;
};

inline void validate(const ForwardConfig& c) {
  if (int(c.head_alphas.size()) != c.heads)
    throw ConfigError("forward config: head_alphas size != heads");
  for (int a : c.head_alphas)
    if (a % 2 == 0 || a < 1) throw ConfigError("forward config: alpha must be odd");
  if (c.attn_kernel != 7)
    throw ConfigError("forward config: attention kernel must be 7");
  if (c.out_bins != 1000)
    throw ConfigError("forward config: out_bins must be 1000");
  if (c.in_h % c.stem_stride || c.in_w % c.stem_stride)
    throw ConfigError("forward config: stem stride must divide input dims");
}

inline json to_json(const ForwardConfig& c) {
  return json{{"gfe_blocks", c.gfe_blocks},
              {"heads", c.heads},
              {"head_alphas", c.head_alphas},
              {"attn_kernel", c.attn_kernel},
              {"channels", c.channels},
              {"dropout", c.dropout},
              {"stem_kernel", c.stem_kernel},
              {"stem_stride", c.stem_stride},
              {"pooled_h", c.pooled_h},
              {"pooled_w", c.pooled_w},
              {"hidden", c.hidden},
              {"out_bins", c.out_bins},
              {"in_h", c.in_h},
              {"in_w", c.in_w},
              {"material_feats", c.material_feats}};
}

template <typename T>
class ForwardNet {
 public:
  using Tensor = nn::Tensor<T>;
  ForwardConfig cfg;
  nn::ParamStore<T> ps;

  explicit ForwardNet(ForwardConfig c = {}, std::uint64_t seed = 1)
      : cfg(std::move(c)) {
    validate(cfg);
    auto rng = make_rng(seed, 0x464f5257ULL);  // distinct init stream
    auto conv_w = [&](const std::string& name, int oc, int ic, int k) {
      Tensor w({oc, ic, k, k});
      w.fill_uniform(rng, T(std::sqrt(1.0 / (double(ic) * k * k))));
      ps.add(name + ".w", std::move(w));
      ps.add(name + ".b", Tensor({oc}));
    };
    auto fc_w = [&](const std::string& name, int out, int in) {
      Tensor w({out, in});
      w.fill_uniform(rng, T(std::sqrt(1.0 / double(in))));
      ps.add(name + ".w", std::move(w));
      ps.add(name + ".b", Tensor({out}));
    };
    int C = cfg.channels;
    conv_w("stem", C, 1, cfg.stem_kernel);
    for (int b = 0; b < cfg.gfe_blocks; ++b) {
      std::string pb = "blk" + std::to_string(b);
      ps.add(pb + ".ln1.g", Tensor({C}, T(1)));
      ps.add(pb + ".ln1.b", Tensor({C}));
      for (int h = 0; h < cfg.heads; ++h) {
        std::string ph = pb + ".head" + std::to_string(h);
        conv_w(ph + ".conv", C, C, cfg.head_alphas[std::size_t(h)]);
        conv_w(ph + ".att", 1, 2, cfg.attn_kernel);
        ps.add(ph + ".w1", Tensor({1}, T(1)));
        ps.add(ph + ".w2", Tensor({1}, T(1)));
      }
      conv_w(pb + ".proj", C, C * cfg.heads, 1);
      ps.add(pb + ".ln2.g", Tensor({C}, T(1)));
      ps.add(pb + ".ln2.b", Tensor({C}));
    }
    fc_w("fc1", cfg.hidden, C * cfg.pooled_h * cfg.pooled_w);
    ps.add("prelu1.a", Tensor({1}, T(0.25)));
    fc_w("fc2", cfg.hidden, cfg.hidden + cfg.material_feats);
    ps.add("prelu2.a", Tensor({1}, T(0.25)));
    ps.add("ln_head.g", Tensor({cfg.hidden}, T(1)));
    ps.add("ln_head.b", Tensor({cfg.hidden}));
    fc_w("fc3", cfg.out_bins, cfg.hidden);
  }

  std::string fingerprint() const {
    return io::sha256_hex(to_json(cfg).dump());
  }

  // One FSA head: alpha-convolution, gated by a 7x7 spatial-attention map
  // built from the w1/w2-scaled channel mean and max of the convolved map.
  int fsa_head(nn::Tape<T>& tp, int x, const std::string& ph, bool frozen) {
    auto P = [&](const std::string& n) { return leaf(tp, n, frozen); };
    int xf = nn::conv2d_same(tp, x, P(ph + ".conv.w"), P(ph + ".conv.b"));
    int av = nn::scale_by(tp, nn::mean_channels(tp, xf), P(ph + ".w1"));
    int mx = nn::scale_by(tp, nn::max_channels(tp, xf), P(ph + ".w2"));
    int cat = nn::concat0(tp, {av, mx});
    int att = nn::conv2d_same(tp, cat, P(ph + ".att.w"), P(ph + ".att.b"));
    return nn::broadcast_mul_chw(tp, xf, nn::sigmoid(tp, att));
  }

  // Multi-head geometric attention: heads concatenated, 1x1-projected back.
  int geometric_attention(nn::Tape<T>& tp, int x, const std::string& pb,
                          bool frozen) {
    std::vector<int> outs;
    for (int h = 0; h < cfg.heads; ++h)
      outs.push_back(fsa_head(tp, x, pb + ".head" + std::to_string(h), frozen));
    int cat = nn::concat0(tp, outs);
    return nn::conv2d(tp, cat, leaf(tp, pb + ".proj.w", frozen),
                      leaf(tp, pb + ".proj.b", frozen), 1, 0);
  }

  // y = LN2(x + Dropout(GA(LN1(x)))), LN over channels at each position.
  int gfe_block(nn::Tape<T>& tp, int x, const std::string& pb, bool training,
                std::mt19937_64& rng, bool frozen) {
    const auto& s = tp.val(x).shape;
    int C = s[0], H = s[1], W = s[2];
    int ln1 = nn::layer_norm_rows(tp, nn::chw_to_rows(tp, x),
                                  leaf(tp, pb + ".ln1.g", frozen),
                                  leaf(tp, pb + ".ln1.b", frozen));
    int ga = geometric_attention(tp, nn::rows_to_chw(tp, ln1, C, H, W), pb,
                                 frozen);
    int dp = nn::dropout(tp, ga, cfg.dropout, training, rng);
    int sum = nn::add(tp, x, dp);
    int ln2 = nn::layer_norm_rows(tp, nn::chw_to_rows(tp, sum),
                                  leaf(tp, pb + ".ln2.g", frozen),
                                  leaf(tp, pb + ".ln2.b", frozen));
    return nn::rows_to_chw(tp, ln2, C, H, W);
  }

  // Full graph; raster node is (1,in_h,in_w), mat node is [1,material_feats].
  // Returns the [out_bins] prediction node.
  int predict_graph(nn::Tape<T>& tp, int raster, int mat, bool training,
                    std::mt19937_64& rng, bool frozen = false) {
    const auto& rs = tp.val(raster).shape;
    if (rs != std::vector<int>{1, cfg.in_h, cfg.in_w})
      throw ValidationError("forward predict: raster must be (1," +
                            std::to_string(cfg.in_h) + "," +
                            std::to_string(cfg.in_w) + "), got " +
                            nn::shape_str(rs));
    if (tp.val(mat).shape != std::vector<int>{1, cfg.material_feats})
      throw ValidationError("forward predict: bad material shape");
    int x = nn::conv2d(tp, raster, leaf(tp, "stem.w", frozen),
                       leaf(tp, "stem.b", frozen), cfg.stem_stride, 0);
    for (int b = 0; b < cfg.gfe_blocks; ++b)
      x = gfe_block(tp, x, "blk" + std::to_string(b), training, rng, frozen);
    int pool = nn::adaptive_avg_pool_chw(tp, x, cfg.pooled_h, cfg.pooled_w);
    int flat =
        nn::reshape(tp, pool, {1, cfg.channels * cfg.pooled_h * cfg.pooled_w});
    int h1 = nn::prelu(tp,
                       nn::linear(tp, flat, leaf(tp, "fc1.w", frozen),
                                  leaf(tp, "fc1.b", frozen)),
                       leaf(tp, "prelu1.a", frozen));
    int cat = nn::concat_cols(tp, {h1, mat});
    int h2 = nn::prelu(tp,
                       nn::linear(tp, cat, leaf(tp, "fc2.w", frozen),
                                  leaf(tp, "fc2.b", frozen)),
                       leaf(tp, "prelu2.a", frozen));
    int ln = nn::layer_norm_rows(tp, h2, leaf(tp, "ln_head.g", frozen),
                                 leaf(tp, "ln_head.b", frozen));
    int out = nn::linear(tp, ln, leaf(tp, "fc3.w", frozen),
                         leaf(tp, "fc3.b", frozen));
    return nn::reshape(tp, out, {cfg.out_bins});
  }

  // Evaluation-mode inference.
  Tensor predict(const Tensor& raster, const Tensor& mat) {
    nn::Tape<T> tp;
    std::mt19937_64 rng(0);
    int out = predict_graph(tp, tp.constant(raster), tp.constant(mat), false,
                            rng, true);
    return tp.val(out);
  }

 private:
  int leaf(nn::Tape<T>& tp, const std::string& name, bool frozen) {
    auto& e = ps.at(name);
    return tp.param(e.w, frozen ? nullptr : &e.g);
  }
};

}  // namespace bandforge::models
