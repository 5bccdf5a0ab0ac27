// Generation: beam search with the length stop rule, constrained top-k and
// unconstrained sampling, forced language-tag conditioning, and the
// incremental transformer scorer they run over.
//
// Decoders are generic over a Scorer with:
//   struct State { ...; Vec<double> logprobs; };   // next-token log-probs
//   int vocab_size() const;
//   State start(const std::vector<int>& src_ids) const;  // state after start-of-sequence
//   State advance(const State&, int token) const;
#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "minimt/bpe.hpp"
#include "minimt/corpus.hpp"
#include "minimt/model.hpp"

namespace minimt {

struct StopRule {
  double slope = 1.5;
  double intercept = 20.0;
  int hard_cap = 256;
};

// floor(slope * l_src + intercept), clamped to hard_cap.
inline int max_target_len(int l_src, const StopRule& rule) {
  if (l_src < 0) throw std::invalid_argument("max_target_len: negative source length");
  const double raw = rule.slope * static_cast<double>(l_src) + rule.intercept;
  const long long floored = static_cast<long long>(std::floor(raw));
  return static_cast<int>(std::min<long long>(floored, rule.hard_cap));
}

// tokens = [tag, content..., eos?]: the forced tag first, then generated
// content, then eos unless the length cap ended the hypothesis.
struct DecodeResult {
  std::vector<int> tokens;
  double logprob = 0.0;    // sum of model log-probs of all generated tokens
  std::vector<int> ranks;  // sampling only: 1-based canonical rank per sampled step
};

namespace detail {

// Source length for the stop rule: tokens excluding a trailing eos.
inline int rule_source_len(const std::vector<int>& src_ids, int eos_id) {
  int n = static_cast<int>(src_ids.size());
  if (n > 0 && src_ids.back() == eos_id) --n;
  return n;
}

// Candidate token order used everywhere: descending log-prob, ties toward
// the lower token id.
inline std::vector<int> canonical_order(const Vec<double>& logprobs) {
  std::vector<int> idx(static_cast<std::size_t>(logprobs.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return logprobs(a) > logprobs(b); });
  return idx;
}

}  // namespace detail

// Length-unnormalized beam search. The first generated token is forced to
// forced_tag_id; hypotheses finish on eos_id or at the stop-rule cap. Ties
// break toward lexicographically lower token ids, then shorter sequences.
template <typename Scorer>
DecodeResult beam_search(const Scorer& scorer, const std::vector<int>& src_ids, int beam_size, const StopRule& rule,
                         int forced_tag_id, int eos_id) {
  if (beam_size < 1) throw std::invalid_argument("beam_search: beam size must be >= 1");
  const int vocab = scorer.vocab_size();
  if (forced_tag_id < 0 || forced_tag_id >= vocab || eos_id < 0 || eos_id >= vocab) {
    throw std::invalid_argument("beam_search: tag or eos id outside the scorer vocabulary");
  }
  const int max_content = max_target_len(detail::rule_source_len(src_ids, eos_id), rule);

  struct Hyp {
    typename Scorer::State state;
    std::vector<int> tokens;
    double score = 0.0;
  };
  auto better = [](double score_a, const std::vector<int>& tok_a, double score_b, const std::vector<int>& tok_b) {
    if (score_a != score_b) return score_a > score_b;
    return tok_a < tok_b;  // lower ids first; prefixes (shorter) win ties
  };

  Hyp root;
  root.state = scorer.start(src_ids);
  root.score = root.state.logprobs(forced_tag_id);
  root.tokens = {forced_tag_id};
  root.state = scorer.advance(root.state, forced_tag_id);

  std::vector<Hyp> live;
  live.push_back(std::move(root));
  bool have_finished = false;
  DecodeResult best;

  auto offer_finished = [&](const Hyp& h, double score, bool with_eos) {
    std::vector<int> tokens = h.tokens;
    if (with_eos) tokens.push_back(eos_id);
    if (!have_finished || better(score, tokens, best.logprob, best.tokens)) {
      best.logprob = score;
      best.tokens = std::move(tokens);
      have_finished = true;
    }
  };

  for (int content = 0; content < max_content && !live.empty(); ++content) {
    struct Cand {
      std::size_t hyp;
      int token;
      double score;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(vocab));
    for (std::size_t h = 0; h < live.size(); ++h) {
      for (int v = 0; v < vocab; ++v) {
        cands.push_back(Cand{h, v, live[h].score + live[h].state.logprobs(v)});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (live[a.hyp].tokens != live[b.hyp].tokens) return live[a.hyp].tokens < live[b.hyp].tokens;
      return a.token < b.token;
    });

    std::vector<Hyp> next;
    next.reserve(static_cast<std::size_t>(beam_size));
    for (const Cand& c : cands) {
      if (c.token == eos_id) {
        offer_finished(live[c.hyp], c.score, true);
        continue;
      }
      if (static_cast<int>(next.size()) < beam_size) {
        Hyp h;
        h.tokens = live[c.hyp].tokens;
        h.tokens.push_back(c.token);
        h.score = c.score;
        h.state = scorer.advance(live[c.hyp].state, c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    // Scores only decrease with length; on equality tie-breaks still need the search.
    if (have_finished && !live.empty() && live.front().score < best.logprob) break;
  }
  // Hypotheses that hit the cap finish without eos.
  for (const Hyp& h : live) offer_finished(h, h.score, false);
  return best;
}

// Sampling decoders of the constrained (top-k) and unconstrained kind.
// Unconstrained is top-k with k = vocab. Per-step ranks are recorded against
// the canonical candidate order so a replay can verify the trajectory.
template <typename Scorer>
DecodeResult sample_decode(const Scorer& scorer, const std::vector<int>& src_ids, const DecodeStrategy& strategy,
                           const StopRule& rule, int forced_tag_id, int eos_id, Rng rng) {
  const int vocab = scorer.vocab_size();
  if (strategy.kind == StrategyKind::Beam) {
    throw std::invalid_argument("sample_decode: strategy must be a sampling variant");
  }
  const int k = strategy.kind == StrategyKind::TopK ? strategy.param : vocab;
  if (k < 1 || k > vocab) {
    throw std::invalid_argument("sample_decode: k = " + std::to_string(k) + " outside vocabulary of size " +
                                std::to_string(vocab));
  }
  if (forced_tag_id < 0 || forced_tag_id >= vocab || eos_id < 0 || eos_id >= vocab) {
    throw std::invalid_argument("sample_decode: tag or eos id outside the scorer vocabulary");
  }
  const int max_content = max_target_len(detail::rule_source_len(src_ids, eos_id), rule);

  DecodeResult out;
  auto state = scorer.start(src_ids);
  out.logprob = state.logprobs(forced_tag_id);
  out.tokens = {forced_tag_id};
  state = scorer.advance(state, forced_tag_id);

  for (int content = 0; content < max_content; ++content) {
    const auto order = detail::canonical_order(state.logprobs);
    double total = 0.0;
    for (int j = 0; j < k; ++j) total += std::exp(state.logprobs(order[j]));
    const double u = rng.next_double() * total;
    double acc = 0.0;
    int pick = k - 1;
    for (int j = 0; j < k; ++j) {
      acc += std::exp(state.logprobs(order[j]));
      if (u < acc) {
        pick = j;
        break;
      }
    }
    const int token = order[pick];
    out.ranks.push_back(pick + 1);
    out.logprob += state.logprobs(token);
    out.tokens.push_back(token);
    if (token == eos_id) break;
    state = scorer.advance(state, token);
  }
  return out;
}

// Canonical rank of each generated token when the recorded prefix is fed
// back through the scorer; equals DecodeResult::ranks for a faithful replay.
template <typename Scorer>
std::vector<int> replay_ranks(const Scorer& scorer, const std::vector<int>& src_ids,
                              const std::vector<int>& tokens) {
  std::vector<int> ranks;
  if (tokens.empty()) return ranks;
  auto state = scorer.start(src_ids);
  state = scorer.advance(state, tokens[0]);  // forced tag carries no rank
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto order = detail::canonical_order(state.logprobs);
    for (std::size_t j = 0; j < order.size(); ++j) {
      if (order[j] == tokens[i]) {
        ranks.push_back(static_cast<int>(j) + 1);
        break;
      }
    }
    if (i + 1 < tokens.size()) state = scorer.advance(state, tokens[i]);
  }
  return ranks;
}

// ---------------------------------------------------------------------------
// Incremental transformer scorer with per-layer self-attention caches and
// precomputed cross-attention keys/values. Matches eval-mode forward().

template <typename Scalar>
class TransformerScorer {
 public:
  // Keeps a reference to the parameters; the config is copied.
  TransformerScorer(const ModelParams<Scalar>& params, ModelConfig cfg, int bos_id)
      : p_(&params), cfg_(std::move(cfg)), bos_id_(bos_id) {
    cfg_.validate();
  }

  int vocab_size() const { return cfg_.vocab_size; }

  struct EncContext {
    Mat<Scalar> enc_out;
    std::vector<Mat<Scalar>> cross_k, cross_v;  // per decoder layer, L_src x d
  };

  struct State {
    std::shared_ptr<const EncContext> enc;
    std::vector<Mat<Scalar>> self_k, self_v;  // per decoder layer, t x d
    int length = 0;                            // consumed decoder tokens (incl. bos)
    Vec<double> logprobs;
  };

  State start(const std::vector<int>& src_ids) const {
    detail::ForwardCache<Scalar> cache;
    Rng rng = Rng::derive(0, {0});  // eval mode consumes no randomness
    detail::run_encoder(*p_, cfg_, src_ids, FwdOptions{false, 0}, rng, cache);

    auto enc = std::make_shared<EncContext>();
    enc->enc_out = cache.enc_norm.out;
    enc->cross_k.reserve(p_->decoder.size());
    enc->cross_v.reserve(p_->decoder.size());
    for (const auto& layer : p_->decoder) {
      Mat<Scalar> k = enc->enc_out * layer.cross_attn.wk;
      k.rowwise() += layer.cross_attn.bk.col(0).transpose();
      Mat<Scalar> v = enc->enc_out * layer.cross_attn.wv;
      v.rowwise() += layer.cross_attn.bv.col(0).transpose();
      enc->cross_k.push_back(std::move(k));
      enc->cross_v.push_back(std::move(v));
    }

    State s;
    s.enc = std::move(enc);
    s.self_k.assign(p_->decoder.size(), Mat<Scalar>(0, cfg_.d_model));
    s.self_v.assign(p_->decoder.size(), Mat<Scalar>(0, cfg_.d_model));
    step(s, bos_id_);
    return s;
  }

  State advance(const State& prev, int token) const {
    State s = prev;
    step(s, token);
    return s;
  }

 private:
  // Row softmax(q k^T / sqrt(dh)) v per head over the given memory.
  static Eigen::Matrix<Scalar, 1, Eigen::Dynamic> attend_row(const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& q,
                                                             const Mat<Scalar>& k, const Mat<Scalar>& v, int n_heads) {
    const Eigen::Index d = q.cols();
    const Eigen::Index dh = d / n_heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> ctx(d);
    for (int h = 0; h < n_heads; ++h) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scores = k.middleCols(h * dh, dh) * q.middleCols(h * dh, dh).transpose();
      scores *= scale;
      const Scalar m = scores.maxCoeff();
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a = (scores.array() - m).exp();
      a /= a.sum();
      ctx.middleCols(h * dh, dh) = a.transpose() * v.middleCols(h * dh, dh);
    }
    return ctx;
  }

  static Eigen::Matrix<Scalar, 1, Eigen::Dynamic> norm_row(const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& x,
                                                           const LayerNormParams<Scalar>& ln) {
    const Scalar mean = x.mean();
    const Scalar var = (x.array() - mean).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(detail::kLayerNormEps));
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> xhat = ((x.array() - mean) * inv).matrix();
    return xhat.cwiseProduct(ln.gain.col(0).transpose()) + ln.bias.col(0).transpose();
  }

  void step(State& s, int token) const {
    if (token < 0 || token >= cfg_.vocab_size) {
      throw std::invalid_argument("decoder token id " + std::to_string(token) + " outside vocabulary");
    }
    if (s.length + 1 > cfg_.max_positions) {
      throw std::invalid_argument("decoder length exceeds max_positions " + std::to_string(cfg_.max_positions));
    }
    using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
    const int pos = s.length;
    const Scalar emb_scale = std::sqrt(static_cast<Scalar>(cfg_.d_model));
    const Mat<Scalar> pe = position_encoding<Scalar>(pos + 1, cfg_.d_model);
    Row x = p_->embedding.row(token) * emb_scale + pe.row(pos);

    const double p_layer = cfg_.layer_drop_rate;
    for (std::size_t l = 0; l < p_->decoder.size(); ++l) {
      const auto& lp = p_->decoder[l];
      const Row x_in = x;

      Row a = norm_row(x, lp.ln_self);
      Row q = a * lp.self_attn.wq + lp.self_attn.bq.col(0).transpose();
      Row k_new = a * lp.self_attn.wk + lp.self_attn.bk.col(0).transpose();
      Row v_new = a * lp.self_attn.wv + lp.self_attn.bv.col(0).transpose();
      auto& ks = s.self_k[l];
      auto& vs = s.self_v[l];
      ks.conservativeResize(pos + 1, Eigen::NoChange);
      vs.conservativeResize(pos + 1, Eigen::NoChange);
      ks.row(pos) = k_new;
      vs.row(pos) = v_new;
      Row sa = attend_row(q, ks, vs, cfg_.n_heads) * lp.self_attn.wo + lp.self_attn.bo.col(0).transpose();
      Row x_mid1 = x_in + sa;

      Row b = norm_row(x_mid1, lp.ln_cross);
      Row qc = b * lp.cross_attn.wq + lp.cross_attn.bq.col(0).transpose();
      Row ca = attend_row(qc, s.enc->cross_k[l], s.enc->cross_v[l], cfg_.n_heads) * lp.cross_attn.wo +
               lp.cross_attn.bo.col(0).transpose();
      Row x_mid2 = x_mid1 + ca;

      Row c = norm_row(x_mid2, lp.ln_ff);
      Row pre = c * lp.ff.w1 + lp.ff.b1.col(0).transpose();
      Row act = pre.cwiseMax(Scalar(0));
      Row ff = act * lp.ff.w2 + lp.ff.b2.col(0).transpose();
      Row layer_out = x_mid2 + ff;

      if (p_layer > 0.0) {
        x = x_in + Scalar(1.0 - p_layer) * (layer_out - x_in);
      } else {
        x = layer_out;
      }
    }

    Row h = norm_row(x, p_->dec_norm);
    Row logits = h * p_->embedding.transpose();
    const Scalar m = logits.maxCoeff();
    const Scalar lse = m + std::log((logits.array() - m).exp().sum());
    s.logprobs.resize(logits.cols());
    for (Eigen::Index v = 0; v < logits.cols(); ++v) {
      s.logprobs(v) = static_cast<double>(logits(v) - lse);
    }
    s.length = pos + 1;
  }

  const ModelParams<Scalar>* p_;
  ModelConfig cfg_;
  int bos_id_;
};

// ---------------------------------------------------------------------------
// Text-level translation binding a model to its vocabulary. Per-sentence RNG
// streams derive from (seed, sentence index), so outputs are independent of
// batch composition.

struct TranslationOutput {
  std::vector<std::string> sentences;
  std::vector<double> logprobs;
  std::vector<std::size_t> lengths;  // generated content tokens
};

template <typename Scalar>
class Translator {
 public:
  Translator(const ModelParams<Scalar>& params, ModelConfig cfg, const BpeVocab& vocab, StopRule rule = {})
      : scorer_(params, std::move(cfg), BpeVocab::kBos), vocab_(&vocab), rule_(rule) {}

  // Translate into tgt_lang (the source language is implicit in the text).
  TranslationOutput translate(const std::vector<std::string>& sentences, const LanguageId& tgt_lang,
                              const DecodeStrategy& strategy, std::uint64_t seed) const {
    const int tag = vocab_->tag_id(tgt_lang);
    TranslationOutput out;
    out.sentences.reserve(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      std::vector<int> src = bpe_encode(*vocab_, sentences[i]);
      src.push_back(BpeVocab::kEos);
      DecodeResult r;
      if (strategy.kind == StrategyKind::Beam) {
        r = beam_search(scorer_, src, strategy.param, rule_, tag, BpeVocab::kEos);
      } else {
        r = sample_decode(scorer_, src, strategy, rule_, tag, BpeVocab::kEos, Rng::derive(seed, {0x7472616eull, i}));
      }
      std::size_t content = r.tokens.size() - 1;  // minus the tag
      if (!r.tokens.empty() && r.tokens.back() == BpeVocab::kEos) --content;
      out.sentences.push_back(bpe_decode(*vocab_, strip_tag(r.tokens)));
      out.logprobs.push_back(r.logprob);
      out.lengths.push_back(content);
    }
    return out;
  }

 private:
  static std::vector<int> strip_tag(const std::vector<int>& tokens) {
    return tokens.empty() ? tokens : std::vector<int>(tokens.begin() + 1, tokens.end());
  }

  TransformerScorer<Scalar> scorer_;
  const BpeVocab* vocab_;
  StopRule rule_;
};

}  // namespace minimt
