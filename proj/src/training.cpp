#include "minimt/training.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "minimt/checkpoint.hpp"
#include "minimt/decoding.hpp"
#include "minimt/evaluation.hpp"

namespace minimt {

namespace {

// Mean dev spBLEU over the requested directions, decoding with beam search.
double dev_score(const ModelParams<float>& params, const ModelConfig& mcfg, const BpeVocab& vocab, const DevSet& dev,
                 const std::vector<Direction>& directions, int limit, int beam) {
  if (dev.size() == 0 || directions.empty()) throw ConfigError("training: dev set is empty");
  Translator<float> translator(params, mcfg, vocab);
  double sum = 0.0;
  for (const auto& dir : directions) {
    const int si = dev.lang_index(dir.src);
    const int ti = dev.lang_index(dir.tgt);
    if (si < 0 || ti < 0) throw ConfigError("training: dev set lacks language for direction " + dir.key());
    std::vector<std::string> src(dev.sentences[si].begin(),
                                 limit > 0 && static_cast<std::size_t>(limit) < dev.size()
                                     ? dev.sentences[si].begin() + limit
                                     : dev.sentences[si].end());
    std::vector<std::string> ref(dev.sentences[ti].begin(), dev.sentences[ti].begin() + src.size());
    const auto out = translator.translate(src, dir.tgt, DecodeStrategy::beam(beam), 0);
    sum += spbleu(out.sentences, ref, vocab).score;
  }
  return sum / static_cast<double>(directions.size());
}

}  // namespace

TrainResult train_model(ModelParams<float>& params, const ModelConfig& mcfg, const BpeVocab& vocab,
                        const std::vector<SentencePair>& mixture, const DevSet& dev,
                        const std::vector<Direction>& dev_directions, const TrainConfig& cfg,
                        const std::string& ckpt_dir) {
  cfg.validate();
  mcfg.validate();
  if (mixture.empty()) throw ConfigError("training: mixture is empty");
  if (dev.size() == 0 || dev_directions.empty()) throw ConfigError("training: dev set is empty");

  TrainResult result;

  // Encode once; the target carries its language tag after bos.
  std::vector<TrainExample> examples;
  examples.reserve(mixture.size());
  for (const auto& pair : mixture) {
    TrainExample e;
    e.src = bpe_encode(vocab, pair.src);
    e.src.push_back(BpeVocab::kEos);
    const SentencePair tagged = tag_target(pair);
    e.tgt.push_back(BpeVocab::kBos);
    for (int id : bpe_encode(vocab, tagged.tgt)) e.tgt.push_back(id);
    e.tgt.push_back(BpeVocab::kEos);
    if (static_cast<int>(e.src.size()) > mcfg.max_positions || static_cast<int>(e.tgt.size()) > mcfg.max_positions) {
      ++result.skipped_too_long;
      continue;
    }
    examples.push_back(std::move(e));
  }
  if (examples.empty()) throw ConfigError("training: no usable examples after length filtering");

  // Length bucketing: sort by (target length, source length), then pack
  // batches up to the token budget.
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = std::make_tuple(examples[a].tgt.size(), examples[a].src.size(), a);
    const auto kb = std::make_tuple(examples[b].tgt.size(), examples[b].src.size(), b);
    return ka < kb;
  });
  std::vector<std::vector<std::size_t>> batches;
  {
    std::vector<std::size_t> cur;
    std::size_t cur_tokens = 0;
    for (std::size_t idx : order) {
      const std::size_t cost = examples[idx].tgt.size() - 1;
      if (!cur.empty() && cur_tokens + cost > static_cast<std::size_t>(cfg.tokens_per_batch)) {
        batches.push_back(std::move(cur));
        cur.clear();
        cur_tokens = 0;
      }
      cur.push_back(idx);
      cur_tokens += cost;
    }
    if (!cur.empty()) batches.push_back(std::move(cur));
  }

  AdamState<float> adam = AdamState<float>::init(mcfg);
  std::vector<std::size_t> batch_order(batches.size());
  std::iota(batch_order.begin(), batch_order.end(), std::size_t{0});
  std::uint64_t pass = 0;
  auto reshuffle = [&]() {
    Rng rng = Rng::derive(cfg.seed, {0x73687566ull, pass});  // "shuf"
    for (std::size_t i = batch_order.size(); i > 1; --i) {
      std::swap(batch_order[i - 1], batch_order[static_cast<std::size_t>(rng.next_below(i))]);
    }
  };
  reshuffle();

  if (!ckpt_dir.empty()) std::filesystem::create_directories(ckpt_dir);
  auto save_and_retain = [&](std::uint64_t step) {
    if (ckpt_dir.empty()) return;
    Checkpoint ckpt;
    ckpt.config = mcfg;
    ckpt.vocab_fingerprint = vocab_fingerprint(vocab);
    ckpt.step = step;
    ckpt.params = params;
    if (cfg.save_optimizer) {
      ckpt.has_optimizer = true;
      ckpt.adam_step = adam.step;
      ckpt.adam_m = adam.m;
      ckpt.adam_v = adam.v;
    }
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt-%08llu.bin", static_cast<unsigned long long>(step));
    const std::string path = ckpt_dir + "/" + name;
    save_checkpoint(path, ckpt);
    result.checkpoint_paths.push_back(path);
    while (result.checkpoint_paths.size() > static_cast<std::size_t>(cfg.keep_last_k)) {
      std::filesystem::remove(result.checkpoint_paths.front());
      result.checkpoint_paths.erase(result.checkpoint_paths.begin());
    }
  };

  double window_loss = 0.0;
  std::size_t window_steps = 0;
  std::size_t cursor = 0;
  for (std::uint64_t step = 1; step <= static_cast<std::uint64_t>(cfg.max_steps); ++step) {
    if (cursor == batch_order.size()) {
      cursor = 0;
      ++pass;
      reshuffle();
    }
    std::vector<TrainExample> batch;
    for (std::size_t idx : batches[batch_order[cursor]]) batch.push_back(examples[idx]);
    ++cursor;

    auto lg = loss_and_grad<float>(params, mcfg, batch, cfg.label_smoothing, Rng::derive(cfg.seed, {step}).next_u64(),
                                   BpeVocab::kPad, true);
    adam_step(params, lg.grads, adam, cfg);
    window_loss += static_cast<double>(lg.loss);
    ++window_steps;
    result.steps_run = step;

    const bool last_step = step == static_cast<std::uint64_t>(cfg.max_steps);
    if (step % cfg.validate_every == 0 || last_step) {
      const double dev_bleu = dev_score(params, mcfg, vocab, dev, dev_directions, cfg.dev_limit, cfg.dev_beam);
      TrainLogEntry entry;
      entry.step = step;
      entry.lr = lr_at(step, cfg);
      entry.train_loss = window_loss / static_cast<double>(window_steps);
      entry.dev_spbleu = dev_bleu;
      result.log.push_back(entry);
      result.final_dev_spbleu = dev_bleu;
      window_loss = 0.0;
      window_steps = 0;
      save_and_retain(step);
      if (last_step) break;
    }
  }
  return result;
}

std::string render_train_log(const std::vector<TrainLogEntry>& log) {
  std::string out = "step\tlr\ttrain_loss\tdev_spbleu\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%llu\t%.6g\t%.4f\t%.2f\n", static_cast<unsigned long long>(e.step), e.lr,
                  e.train_loss, e.dev_spbleu);
    out += buf;
  }
  return out;
}

}  // namespace minimt
