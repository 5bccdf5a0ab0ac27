#include "minimt/backtranslation.hpp"

#include <algorithm>

#include "minimt/checkpoint.hpp"
#include "minimt/config.hpp"
#include "minimt/evaluation.hpp"
#include "minimt/text.hpp"

namespace minimt {

bool filter_accepts(const SentencePair& pair, const SyntheticFilterConfig& cfg, bool* length_ok) {
  const std::size_t len_src = split_words(pair.src).size();
  const std::size_t len_tgt = split_words(pair.tgt).size();
  const std::size_t longer = std::max(len_src, len_tgt);
  const std::size_t shorter = std::min(len_src, len_tgt);
  const bool len_ok = longer < static_cast<std::size_t>(cfg.max_len);
  if (length_ok) *length_ok = len_ok;
  if (!len_ok) return false;
  if (shorter == 0) return false;  // an empty side fails the ratio test
  const double ratio = static_cast<double>(longer) / static_cast<double>(shorter);
  return ratio < cfg.max_ratio;
}

std::vector<SentencePair> filter_synthetic(const std::vector<SentencePair>& pairs, const SyntheticFilterConfig& cfg,
                                           FilterTally* tally) {
  cfg.validate();
  std::vector<SentencePair> accepted;
  accepted.reserve(pairs.size());
  FilterTally local;
  for (const auto& p : pairs) {
    bool length_ok = false;
    if (filter_accepts(p, cfg, &length_ok)) {
      accepted.push_back(p);
      ++local.accepted;
    } else if (!length_ok) {
      ++local.rejected_length;
    } else {
      ++local.rejected_ratio;
    }
  }
  if (tally) *tally = local;
  return accepted;
}

Corpus reversed(const Corpus& corpus) {
  Corpus out;
  out.direction = corpus.direction.reversed();
  out.pairs.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) {
    out.pairs.push_back(SentencePair{p.tgt_lang, p.src_lang, p.tgt, p.src, p.origin});
  }
  return out;
}

namespace {

double score_direction(const Translator<float>& translator, const DevSet& dev, const Direction& dir,
                       const BpeVocab& vocab, int limit, int beam) {
  const int si = dev.lang_index(dir.src);
  const int ti = dev.lang_index(dir.tgt);
  if (si < 0 || ti < 0) throw ConfigError("bt round: dev set lacks language for " + dir.key());
  std::size_t n = dev.size();
  if (limit > 0 && static_cast<std::size_t>(limit) < n) n = static_cast<std::size_t>(limit);
  std::vector<std::string> src(dev.sentences[si].begin(), dev.sentences[si].begin() + n);
  std::vector<std::string> ref(dev.sentences[ti].begin(), dev.sentences[ti].begin() + n);
  const auto out = translator.translate(src, dir.tgt, DecodeStrategy::beam(beam), 0);
  return spbleu(out.sentences, ref, vocab).score;
}

}  // namespace

BtRoundResult run_bt_round(const BtRoundConfig& cfg, const BtRoundState& state) {
  if (cfg.round < 1) throw std::invalid_argument("bt round numbers start at 1");
  cfg.filter.validate();
  if (!state.parallel_by_dir || !state.mono || !state.dev || !state.vocab || !state.model_cfg || !state.prev_params ||
      !state.generator_params || !state.generator_cfg) {
    throw ConfigError("bt round: incomplete state");
  }

  BtRoundResult result;
  result.report.round = cfg.round;
  result.report.strategy = cfg.strategy.label();

  // Scores before finetuning (the incoming model).
  if (state.score_before) {
    Translator<float> before(*state.prev_params, *state.model_cfg, *state.vocab, state.stop);
    double sum = 0.0;
    for (const auto& dir : state.eval_directions) {
      const double s = score_direction(before, *state.dev, dir, *state.vocab, state.eval_limit, state.eval_beam);
      result.report.dev_before[dir.key()] = s;
      sum += s;
    }
    result.report.avg_before = state.eval_directions.empty() ? 0.0 : sum / state.eval_directions.size();
  }

  // Generate synthetic data: monolingual text in language m feeds every
  // training direction that targets m.
  Translator<float> generator(*state.generator_params, *state.generator_cfg, *state.vocab, state.stop);
  auto generate = [&](const std::vector<std::string>& sentences, const LanguageId& into, const DecodeStrategy& strategy,
                      std::uint64_t seed) {
    return generator.translate(sentences, into, strategy, seed).sentences;
  };

  std::uint64_t gen_stream = 0;
  for (const auto& [code, cap] : cfg.mono_caps) {
    if (cap == 0) continue;
    auto mono_it = state.mono->find(code);
    if (mono_it == state.mono->end()) throw ConfigError("bt round: no monolingual corpus for language " + code);
    const MonoCorpus& full = mono_it->second;
    if (cap > full.sentences.size()) {
      throw ConfigError("bt round: mono cap " + std::to_string(cap) + " exceeds corpus size " +
                        std::to_string(full.sentences.size()) + " for language " + code);
    }
    MonoCorpus capped;
    capped.lang = full.lang;
    capped.sentences.assign(full.sentences.begin(), full.sentences.begin() + cap);

    for (const auto& [dir_key, parallel] : *state.parallel_by_dir) {
      const Direction dir = parallel.direction;
      if (!(dir.tgt.code == code)) continue;
      Corpus synth = back_translate(generate, capped, dir, cfg.strategy,
                                    cfg.round, Rng::derive(cfg.seed, {0x62747230ull, gen_stream++}).next_u64());
      FilterTally tally;
      std::vector<SentencePair> kept = filter_synthetic(synth.pairs, cfg.filter, &tally);

      // Cap synthetic at parallel/ratio per direction.
      const std::size_t cap_per_dir = parallel.size() / static_cast<std::size_t>(cfg.mix_ratio_parallel_to_synthetic);
      std::size_t mixed = std::min(kept.size(), cap_per_dir);

      DirectionReport dr;
      dr.direction = dir.key();
      dr.generated = synth.pairs.size();
      dr.accepted = tally.accepted;
      dr.rejected_length = tally.rejected_length;
      dr.rejected_ratio = tally.rejected_ratio;
      dr.mixed = mixed;
      dr.parallel = parallel.size();
      result.report.directions.push_back(dr);

      kept.resize(mixed);
      Corpus capped_synth;
      capped_synth.direction = dir;
      capped_synth.pairs = std::move(kept);
      if (!capped_synth.pairs.empty()) result.synthetic[dir.key()] = std::move(capped_synth);
    }
  }

  // Mixture: every parallel direction, plus capped synthetic sources.
  MixtureSpec spec;
  spec.temperature = cfg.temperature;
  spec.seed = cfg.seed;
  std::size_t total = 0;
  for (const auto& [key, corpus] : *state.parallel_by_dir) {
    spec.sources.push_back(MixtureSource{corpus.direction, &corpus, std::nullopt});
    total += corpus.size();
  }
  for (const auto& [key, corpus] : result.synthetic) {
    spec.sources.push_back(MixtureSource{corpus.direction, &corpus, std::nullopt});
    total += corpus.size();
  }
  spec.total_size = cfg.mixture_size > 0 ? cfg.mixture_size : total;
  result.report.mixture_size = spec.total_size;
  const std::vector<SentencePair> mixture = sample_mixture(spec);

  // Finetune from the previous round's model.
  result.model = *state.prev_params;
  result.train_result =
      train_model(result.model, *state.model_cfg, *state.vocab, mixture, *state.dev, state.eval_directions, cfg.train,
                  state.ckpt_dir);

  if (cfg.average_retained_checkpoints && !result.train_result.checkpoint_paths.empty()) {
    std::vector<Checkpoint> ckpts;
    for (const auto& path : result.train_result.checkpoint_paths) ckpts.push_back(load_checkpoint(path));
    result.model = average_checkpoints(ckpts);
  }

  // Scores after finetuning.
  {
    Translator<float> after(result.model, *state.model_cfg, *state.vocab, state.stop);
    double sum = 0.0;
    for (const auto& dir : state.eval_directions) {
      const double s = score_direction(after, *state.dev, dir, *state.vocab, state.eval_limit, state.eval_beam);
      result.report.dev_after[dir.key()] = s;
      sum += s;
    }
    result.report.avg_after = state.eval_directions.empty() ? 0.0 : sum / state.eval_directions.size();
  }
  return result;
}

std::string render_round_report(const BtRoundReport& report) {
  IniWriter w;
  w.section("round");
  w.kv("round", report.round);
  w.kv("strategy", report.strategy);
  w.kv("mixture_size", static_cast<long long>(report.mixture_size));
  w.kv("dev_avg_before", report.avg_before, 2);
  w.kv("dev_avg_after", report.avg_after, 2);
  for (const auto& d : report.directions) {
    w.section("synthetic " + d.direction);
    w.kv("generated", static_cast<long long>(d.generated));
    w.kv("accepted", static_cast<long long>(d.accepted));
    w.kv("rejected_length", static_cast<long long>(d.rejected_length));
    w.kv("rejected_ratio", static_cast<long long>(d.rejected_ratio));
    w.kv("mixed", static_cast<long long>(d.mixed));
    w.kv("parallel", static_cast<long long>(d.parallel));
  }
  w.section("dev");
  for (const auto& [key, before] : report.dev_before) {
    w.kv(key + "_before", before, 2);
    auto it = report.dev_after.find(key);
    if (it != report.dev_after.end()) w.kv(key + "_after", it->second, 2);
  }
  return w.str();
}

}  // namespace minimt
