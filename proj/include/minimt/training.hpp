// The optimization recipe: Adam (beta1 0.90, beta2 0.98, weight decay 1e-4,
// label smoothing 0.1), inverse-square-root schedule with linear warmup,
// token-budgeted batching and periodic validation with checkpoint emission.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minimt/bpe.hpp"
#include "minimt/corpus.hpp"
#include "minimt/model.hpp"

namespace minimt {

struct TrainConfig {
  double beta1 = 0.90;
  double beta2 = 0.98;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0001;
  double label_smoothing = 0.1;
  double peak_lr = 0.0003;
  int warmup_steps = 200;      // paper-scale 2500
  int tokens_per_batch = 2048;
  int max_steps = 300;
  int validate_every = 200;    // paper-scale 3000
  int keep_last_k = 15;
  std::uint64_t seed = 0;
  int dev_limit = 64;          // dev sentences per direction during validation; 0 = all
  int dev_beam = 5;
  bool save_optimizer = false;

  void validate() const {
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
      throw std::invalid_argument("train config: betas must lie in (0,1)");
    }
    if (warmup_steps < 1) throw std::invalid_argument("train config: warmup must be >= 1");
    if (peak_lr <= 0.0) throw std::invalid_argument("train config: peak_lr must be > 0");
    if (tokens_per_batch < 1 || validate_every < 1 || keep_last_k < 1 || max_steps < 0) {
      throw std::invalid_argument("train config: batch/validation settings must be positive");
    }
  }
};

template <typename Scalar>
struct AdamState {
  std::uint64_t step = 0;
  ModelParams<Scalar> m, v;

  static AdamState init(const ModelConfig& cfg) {
    AdamState s;
    s.m = zeros_like_config<Scalar>(cfg);
    s.v = zeros_like_config<Scalar>(cfg);
    return s;
  }
};

// Linear warmup to peak_lr, then inverse-sqrt decay:
// lr = peak_lr * min(step / warmup, sqrt(warmup / step)).
inline double lr_at(std::uint64_t step, const TrainConfig& cfg) {
  if (step < 1) throw std::invalid_argument("lr_at: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.peak_lr * std::min(s / w, std::sqrt(w / s));
}

// Bias-corrected Adam with decoupled weight decay, applied before the Adam
// delta. Non-finite gradients raise TrainError naming the step and tensor.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, AdamState<Scalar>& state,
               const TrainConfig& cfg) {
  const std::uint64_t t = state.step + 1;
  const double lr = lr_at(t, cfg);
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar eps = static_cast<Scalar>(cfg.adam_epsilon);
  const Scalar corr1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const Scalar corr2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));

  auto pt = named_tensors(params);
  auto& gmut = const_cast<ModelParams<Scalar>&>(grads);
  auto gt = named_tensors(gmut);
  auto mt = named_tensors(state.m);
  auto vt = named_tensors(state.v);
  for (std::size_t i = 0; i < pt.size(); ++i) {
    const Mat<Scalar>& g = *gt[i].tensor;
    if (!g.allFinite()) {
      throw TrainError("non-finite gradient for tensor " + pt[i].name + " at step " + std::to_string(t));
    }
    Mat<Scalar>& p = *pt[i].tensor;
    Mat<Scalar>& m = *mt[i].tensor;
    Mat<Scalar>& v = *vt[i].tensor;
    if (cfg.weight_decay != 0.0) p *= Scalar(1.0 - lr * cfg.weight_decay);
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    p.array() -= Scalar(lr) * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
  }
  state.step = t;
}

struct TrainLogEntry {
  std::uint64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_spbleu = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::vector<std::string> checkpoint_paths;  // retained, ascending step
  std::uint64_t steps_run = 0;
  double final_dev_spbleu = 0.0;
  std::size_t skipped_too_long = 0;
};

// Finetunes params in place on the mixed training set. Batches hold about
// tokens_per_batch target tokens (length-bucketed); every validate_every
// steps the dev set is decoded and scored and a checkpoint is written to
// ckpt_dir (empty = keep no files). Fully deterministic given cfg.seed.
TrainResult train_model(ModelParams<float>& params, const ModelConfig& mcfg, const BpeVocab& vocab,
                        const std::vector<SentencePair>& mixture, const DevSet& dev,
                        const std::vector<Direction>& dev_directions, const TrainConfig& cfg,
                        const std::string& ckpt_dir);

// The tab-separated training log (step, lr, train_loss, dev_spbleu).
std::string render_train_log(const std::vector<TrainLogEntry>& log);

}  // namespace minimt
