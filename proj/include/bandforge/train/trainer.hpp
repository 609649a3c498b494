#pragma once
// Two-phase tandem training: the forward surrogate is fit to the corpus with
// an MSE objective, then the inverse model trains against the frozen
// surrogate under the composite loss. Deterministic for a fixed seed:
// shuffles, dropout, and the optimizer consume dedicated seeded substreams
// and BLAS runs single-threaded.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "bandforge/models/checkpoint.hpp"
#include "bandforge/models/forward_net.hpp"
#include "bandforge/models/inverse_net.hpp"
#include "bandforge/nn/losses.hpp"
#include "bandforge/train/dataset.hpp"

namespace bandforge::train {

struct TrainConfig {
  int epochs = 300;
  double lr0 = 1e-3;
  double lr_min = 1e-5;
  int batch_size = 4;
  double split_train = 0.9;
  std::uint64_t seed = 1;
  bool deterministic = false;
  // Inverse only: stop once mean raw validation similarity reaches this
  // value (0 disables early stopping).
  double early_stop_similarity = 0;
  bool quiet = false;
};

inline void validate(const TrainConfig& c) {
  if (c.epochs <= 0) throw ConfigError("train config: epochs must be positive");
  if (!(0 < c.lr_min && c.lr_min < c.lr0))
    throw ConfigError("train config: need 0 < lr_min < lr0");
  if (c.batch_size < 1) throw ConfigError("train config: batch_size >= 1");
  if (!(0 < c.split_train && c.split_train < 1))
    throw ConfigError("train config: split fraction in (0,1)");
}

struct Split {
  std::vector<int> train, val;
};

// Deterministic shuffled 90:10 partition; 720 samples -> 648 + 72.
inline Split split_dataset(int n, std::uint64_t seed, double train_frac = 0.9) {
  if (n < 2) throw ValidationError("split: need at least 2 samples");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
  auto rng = make_rng(seed, 0x53504c49ULL);  // split stream
  std::shuffle(idx.begin(), idx.end(), rng);
  int n_train = int(std::llround(train_frac * n));
  n_train = std::clamp(n_train, 1, n - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.end());
  return s;
}

struct TrainResult {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_loss = 0;
  double final_train_loss = 0;
  double final_val_similarity = 0;  // inverse only
  std::string checkpoint_path;
};

namespace detail {

struct CsvLog {
  std::ofstream os;
  explicit CsvLog(const std::filesystem::path& p, const std::string& header) {
    os.open(p, std::ios::trunc);
    if (!os) throw ValidationError("cannot write log " + p.string());
    os << header << "\n";
  }
  void row(std::initializer_list<double> vals) {
    bool first = true;
    char buf[32];
    for (double v : vals) {
      if (!first) os << ",";
      std::snprintf(buf, sizeof buf, "%.9g", v);
      os << buf;
      first = false;
    }
    os << "\n";
    os.flush();
  }
};

inline void check_finite(double loss, int epoch, const char* phase) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(phase) + " diverged: non-finite loss at epoch " +
                       std::to_string(epoch));
}

}  // namespace detail

// Phase one: fit the forward surrogate with MSE. Writes train_log.csv,
// val_log.csv, and the best-validation checkpoint forward.ckpt to out_dir.
inline TrainResult train_forward(const Dataset& data, const TrainConfig& cfg,
                                 const std::filesystem::path& out_dir,
                                 const models::ForwardConfig& fcfg = {}) {
  validate(cfg);
  if (data.samples.empty()) throw ValidationError("train: empty dataset");
  std::filesystem::create_directories(out_dir);
  openblas_set_num_threads(1);

  models::ForwardNet<float> net(fcfg, cfg.seed);
  nn::NAdam<float> opt;
  Split split = split_dataset(int(data.samples.size()), cfg.seed,
                              cfg.split_train);
  nn::Tensor<float> mat = data.material_features();
  std::vector<nn::Tensor<float>> targets;
  targets.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    targets.push_back(data.normalized_spectrum(int(i)));

  detail::CsvLog train_log(out_dir / "train_log.csv",
                           "epoch,loss,mse,ssl,mmd,lr");
  detail::CsvLog val_log(out_dir / "val_log.csv", "epoch,loss,mse,ssl,mmd");
  std::string ckpt = (out_dir / "forward.ckpt").string();

  auto shuffle_rng = make_rng(cfg.seed, 0x53485546ULL);
  auto dropout_rng = make_rng(cfg.seed, 0x44524f50ULL);

  TrainResult res;
  res.best_val_loss = 1e300;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = nn::cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_min);
    std::vector<int> order = split.train;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double train_loss = 0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
      std::size_t hi = std::min(order.size(), b + std::size_t(cfg.batch_size));
      net.ps.zero_grad();
      double batch_loss = 0;
      for (std::size_t k = b; k < hi; ++k) {
        int i = order[k];
        nn::Tape<float> tp;
        int pred = net.predict_graph(
            tp, tp.constant(data.samples[std::size_t(i)].raster),
            tp.constant(mat), /*training=*/true, dropout_rng,
            /*frozen=*/false);
        int loss = nn::mse_loss(tp, pred, tp.constant(targets[std::size_t(i)]));
        tp.backward(loss);
        batch_loss += double(tp.val(loss).v[0]);
      }
      detail::check_finite(batch_loss, epoch, "forward training");
      opt.step(net.ps, float(lr), 1.0f / float(hi - b));
      train_loss += batch_loss;
    }
    train_loss /= double(order.size());
    train_log.row({double(epoch), train_loss, train_loss, 0.0, 0.0, lr});

    double val_mse = 0;
    for (int i : split.val) {
      auto pred = net.predict(data.samples[std::size_t(i)].raster, mat);
      val_mse += double(nn::mse_value(pred, targets[std::size_t(i)]));
    }
    val_mse /= double(split.val.size());
    detail::check_finite(val_mse, epoch, "forward validation");
    val_log.row({double(epoch), val_mse, val_mse, 0.0, 0.0});

    if (val_mse < res.best_val_loss) {
      res.best_val_loss = val_mse;
      res.best_epoch = epoch;
      models::save_checkpoint(ckpt, models::ModelKind::forward,
                              net.fingerprint(), data.norm, net.ps);
    }
    res.final_train_loss = train_loss;
    res.epochs_run = epoch + 1;
    if (!cfg.quiet)
      std::fprintf(stderr, "[fwd] epoch %d train %.5f val %.5f lr %.2e\n",
                   epoch, train_loss, val_mse, lr);
  }
  res.checkpoint_path = ckpt;
  return res;
}

// Phase two: train the inverse model against the frozen forward surrogate
// under L = mse + beta1*ssl + beta2*mmd. Writes train_log.csv, val_log.csv
// (with a raw-similarity column), and inverse.ckpt to out_dir.
inline TrainResult train_inverse(
    const Dataset& data, const TrainConfig& cfg,
    const std::filesystem::path& forward_ckpt,
    const std::filesystem::path& out_dir,
    const models::InverseConfig& icfg = {},
    const models::ForwardConfig& fcfg = {}, const nn::LossWeights& lw = {},
    // Applied to generated rasters before the validation similarity score
    // (and hence the early-stop test); losses are logged on raw outputs.
    const std::function<nn::Tensor<float>(const nn::Tensor<float>&)>&
        val_postprocess = nullptr) {
  validate(cfg);
  if (data.samples.empty()) throw ValidationError("train: empty dataset");
  std::filesystem::create_directories(out_dir);
  openblas_set_num_threads(1);

  models::ForwardNet<float> fwd(fcfg, cfg.seed);
  models::NormStats ckpt_norm = models::load_checkpoint(
      forward_ckpt.string(), models::ModelKind::forward, fwd.fingerprint(),
      fwd.ps);
  if (ckpt_norm.spec_db_min != data.norm.spec_db_min ||
      ckpt_norm.spec_db_max != data.norm.spec_db_max)
    throw ConfigError(
        "train-inverse: forward checkpoint normalization does not match the "
        "dataset manifest");

  models::InverseNet<float> inv(icfg, cfg.seed);
  nn::NAdam<float> opt;
  Split split = split_dataset(int(data.samples.size()), cfg.seed,
                              cfg.split_train);
  nn::Tensor<float> mat = data.material_features();
  std::vector<nn::Tensor<float>> targets;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    targets.push_back(data.normalized_spectrum(int(i)));

  detail::CsvLog train_log(out_dir / "train_log.csv",
                           "epoch,loss,mse,ssl,mmd,lr");
  detail::CsvLog val_log(out_dir / "val_log.csv",
                         "epoch,loss,mse,ssl,mmd,similarity");
  std::string ckpt = (out_dir / "inverse.ckpt").string();

  auto shuffle_rng = make_rng(cfg.seed, 0x53485547ULL);
  std::mt19937_64 eval_rng(0);  // forward runs in eval mode; never consumed

  TrainResult res;
  res.best_val_loss = 1e300;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = nn::cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_min);
    std::vector<int> order = split.train;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double tl = 0, tm = 0, ts = 0, td = 0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
      std::size_t hi = std::min(order.size(), b + std::size_t(cfg.batch_size));
      inv.ps.zero_grad();
      double batch_loss = 0;
      for (std::size_t k = b; k < hi; ++k) {
        int i = order[k];
        const auto& s = data.samples[std::size_t(i)];
        nn::Tape<float> tp;
        int raster = inv.design_graph(tp, tp.constant(targets[std::size_t(i)]),
                                      /*frozen=*/false);
        int t_pred = fwd.predict_graph(tp, raster, tp.constant(mat),
                                       /*training=*/false, eval_rng,
                                       /*frozen=*/true);
        int mse = nn::mse_loss(tp, t_pred, tp.constant(targets[std::size_t(i)]));
        int ssl = nn::ssl_loss(tp, raster, tp.constant(s.raster), lw);
        int mmd = nn::mmd_loss(tp, raster, tp.constant(s.raster), lw);
        int loss = nn::add(
            tp, mse,
            nn::add(tp, nn::scale(tp, ssl, float(lw.beta1)),
                    nn::scale(tp, mmd, float(lw.beta2))));
        tp.backward(loss);
        batch_loss += double(tp.val(loss).v[0]);
        tm += double(tp.val(mse).v[0]);
        ts += double(tp.val(ssl).v[0]);
        td += double(tp.val(mmd).v[0]);
      }
      detail::check_finite(batch_loss, epoch, "inverse training");
      opt.step(inv.ps, float(lr), 1.0f / float(hi - b));
      tl += batch_loss;
    }
    double n_train = double(order.size());
    train_log.row({double(epoch), tl / n_train, tm / n_train, ts / n_train,
                   td / n_train, lr});

    double vl = 0, vm = 0, vs = 0, vd = 0, vsim = 0;
    for (int i : split.val) {
      const auto& s = data.samples[std::size_t(i)];
      auto raster = inv.design(targets[std::size_t(i)]);
      auto t_pred = fwd.predict(raster, mat);
      double m = double(nn::mse_value(t_pred, targets[std::size_t(i)]));
      double sl = double(nn::ssl_value(raster, s.raster, lw));
      double dd = double(nn::mmd_value(raster, s.raster, lw));
      vm += m;
      vs += sl;
      vd += dd;
      vl += m + lw.beta1 * sl + lw.beta2 * dd;
      vsim += double(nn::similarity_score(
          val_postprocess ? val_postprocess(raster) : raster, s.raster, lw));
    }
    double n_val = double(split.val.size());
    vl /= n_val;
    vm /= n_val;
    vs /= n_val;
    vd /= n_val;
    vsim /= n_val;
    detail::check_finite(vl, epoch, "inverse validation");
    val_log.row({double(epoch), vl, vm, vs, vd, vsim});

    if (vl < res.best_val_loss) {
      res.best_val_loss = vl;
      res.best_epoch = epoch;
      models::save_checkpoint(ckpt, models::ModelKind::inverse,
                              inv.fingerprint(), data.norm, inv.ps);
    }
    res.final_train_loss = tl / n_train;
    res.final_val_similarity = vsim;
    res.epochs_run = epoch + 1;
    if (!cfg.quiet)
      std::fprintf(stderr,
                   "[inv] epoch %d train %.5f val %.5f sim %.4f lr %.2e\n",
                   epoch, tl / n_train, vl, vsim, lr);
    if (cfg.early_stop_similarity > 0 && vsim >= cfg.early_stop_similarity)
      break;
  }
  res.checkpoint_path = ckpt;
  return res;
}

// Per-sample evaluation of the trained pair on a validation set. postprocess
// (e.g. the denoising filter) is applied to generated rasters before the
// similarity score; fem_spectrum, when provided, maps a generated raster to
// an oracle spectrum (dB) for the femlite cross-check column.
struct EvalRow {
  int index = 0;
  double similarity = 0;
  double mse_forward_on_original = 0;
  double mse_forward_on_generated = 0;
  double mse_fem_on_generated = std::numeric_limits<double>::quiet_NaN();
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_similarity = 0;
  double mean_mse_forward_on_original = 0;
  double mean_mse_forward_on_generated = 0;
  double mean_mse_fem_on_generated = std::numeric_limits<double>::quiet_NaN();
};

inline EvalReport evaluate(
    models::ForwardNet<float>& fwd, models::InverseNet<float>& inv,
    const Dataset& data, const std::vector<int>& samples,
    const std::function<nn::Tensor<float>(const nn::Tensor<float>&)>&
        postprocess = nullptr,
    const std::function<std::vector<double>(const nn::Tensor<float>&)>&
        fem_spectrum = nullptr,
    const nn::LossWeights& lw = {}) {
  if (samples.empty()) throw ValidationError("evaluate: empty sample list");
  EvalReport rep;
  nn::Tensor<float> mat = data.material_features();
  double fem_acc = 0;
  int fem_n = 0;
  for (int i : samples) {
    const auto& s = data.samples[std::size_t(i)];
    nn::Tensor<float> target = data.normalized_spectrum(i);
    nn::Tensor<float> gen = inv.design(target);
    nn::Tensor<float> post = postprocess ? postprocess(gen) : gen;

    EvalRow row;
    row.index = s.index;
    row.similarity = double(nn::similarity_score(post, s.raster, lw));
    row.mse_forward_on_original =
        double(nn::mse_value(fwd.predict(s.raster, mat), target));
    row.mse_forward_on_generated =
        double(nn::mse_value(fwd.predict(gen, mat), target));
    if (fem_spectrum) {
      std::vector<double> db = fem_spectrum(post);
      nn::Tensor<float> fem_norm =
          models::normalize_spectrum<float>(db, data.norm);
      row.mse_fem_on_generated = double(nn::mse_value(fem_norm, target));
      fem_acc += row.mse_fem_on_generated;
      ++fem_n;
    }
    rep.mean_similarity += row.similarity;
    rep.mean_mse_forward_on_original += row.mse_forward_on_original;
    rep.mean_mse_forward_on_generated += row.mse_forward_on_generated;
    rep.rows.push_back(row);
  }
  double n = double(rep.rows.size());
  rep.mean_similarity /= n;
  rep.mean_mse_forward_on_original /= n;
  rep.mean_mse_forward_on_generated /= n;
  if (fem_n) rep.mean_mse_fem_on_generated = fem_acc / double(fem_n);
  return rep;
}

}  // namespace bandforge::train
