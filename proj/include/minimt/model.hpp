// Pre-norm attention encoder-decoder with exact forward computation and
// hand-derived gradients. Dense types are Eigen matrices templated on the
// scalar so training runs in float and gradient checks in double.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "minimt/common.hpp"

namespace minimt {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int d_ff = 256;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int n_heads = 4;
  double dropout_rate = 0.1;
  double layer_drop_rate = 0.05;
  int max_positions = 512;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (vocab_size < 2) throw std::invalid_argument("model config: vocab_size must be at least 2");
    if (d_model < 1 || d_ff < 1 || n_layers_enc < 1 || n_layers_dec < 1 || n_heads < 1 || max_positions < 2) {
      throw std::invalid_argument("model config: all dimensions must be >= 1");
    }
    if (d_model % n_heads != 0) throw std::invalid_argument("model config: d_model must be divisible by n_heads");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0 || layer_drop_rate < 0.0 || layer_drop_rate >= 1.0) {
      throw std::invalid_argument("model config: rates must lie in [0,1)");
    }
  }

  // Desk-scale family: "small" (64/256, 2+2, 4 heads) and "base"
  // (128/512, 4+4, 8 heads); d_ff = 4*d_model in both.
  static ModelConfig preset(const std::string& name, int vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    if (name == "small") {
      c.d_model = 64;
      c.d_ff = 256;
      c.n_layers_enc = c.n_layers_dec = 2;
      c.n_heads = 4;
    } else if (name == "base") {
      c.d_model = 128;
      c.d_ff = 512;
      c.n_layers_enc = c.n_layers_dec = 4;
      c.n_heads = 8;
    } else {
      throw std::invalid_argument("unknown model preset `" + name + "` (small, base)");
    }
    return c;
  }

  // Rates compare at float precision: checkpoints store them as f32.
  bool operator==(const ModelConfig& o) const {
    return vocab_size == o.vocab_size && d_model == o.d_model && d_ff == o.d_ff && n_layers_enc == o.n_layers_enc &&
           n_layers_dec == o.n_layers_dec && n_heads == o.n_heads &&
           static_cast<float>(dropout_rate) == static_cast<float>(o.dropout_rate) &&
           static_cast<float>(layer_drop_rate) == static_cast<float>(o.layer_drop_rate) &&
           max_positions == o.max_positions;
  }
};

template <typename Scalar>
struct LayerNormParams {
  Mat<Scalar> gain;  // d x 1
  Mat<Scalar> bias;  // d x 1
};

template <typename Scalar>
struct AttentionParams {
  Mat<Scalar> wq, wk, wv, wo;  // d x d
  Mat<Scalar> bq, bk, bv, bo;  // d x 1
};

template <typename Scalar>
struct FeedForwardParams {
  Mat<Scalar> w1;  // d x d_ff
  Mat<Scalar> b1;  // d_ff x 1
  Mat<Scalar> w2;  // d_ff x d
  Mat<Scalar> b2;  // d x 1
};

template <typename Scalar>
struct EncoderLayerParams {
  LayerNormParams<Scalar> ln_attn, ln_ff;
  AttentionParams<Scalar> attn;
  FeedForwardParams<Scalar> ff;
};

template <typename Scalar>
struct DecoderLayerParams {
  LayerNormParams<Scalar> ln_self, ln_cross, ln_ff;
  AttentionParams<Scalar> self_attn, cross_attn;
  FeedForwardParams<Scalar> ff;
};

// Embeddings are shared across encoder input, decoder input and the output
// projection.
template <typename Scalar>
struct ModelParams {
  Mat<Scalar> embedding;  // vocab x d
  std::vector<EncoderLayerParams<Scalar>> encoder;
  std::vector<DecoderLayerParams<Scalar>> decoder;
  LayerNormParams<Scalar> enc_norm, dec_norm;
};

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Mat<Scalar>* tensor;
};

namespace detail {

template <typename Scalar, typename Out>
void visit_attention(AttentionParams<Scalar>& a, const std::string& prefix, Out& out) {
  out.push_back({prefix + ".wq", &a.wq});
  out.push_back({prefix + ".bq", &a.bq});
  out.push_back({prefix + ".wk", &a.wk});
  out.push_back({prefix + ".bk", &a.bk});
  out.push_back({prefix + ".wv", &a.wv});
  out.push_back({prefix + ".bv", &a.bv});
  out.push_back({prefix + ".wo", &a.wo});
  out.push_back({prefix + ".bo", &a.bo});
}

template <typename Scalar, typename Out>
void visit_ln(LayerNormParams<Scalar>& ln, const std::string& prefix, Out& out) {
  out.push_back({prefix + ".gain", &ln.gain});
  out.push_back({prefix + ".bias", &ln.bias});
}

template <typename Scalar, typename Out>
void visit_ff(FeedForwardParams<Scalar>& f, const std::string& prefix, Out& out) {
  out.push_back({prefix + ".w1", &f.w1});
  out.push_back({prefix + ".b1", &f.b1});
  out.push_back({prefix + ".w2", &f.w2});
  out.push_back({prefix + ".b2", &f.b2});
}

}  // namespace detail

// Stable traversal order; checkpoints, Adam state and averaging all zip over it.
template <typename Scalar>
std::vector<NamedTensor<Scalar>> named_tensors(ModelParams<Scalar>& p) {
  std::vector<NamedTensor<Scalar>> out;
  out.push_back({"embedding", &p.embedding});
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const std::string base = "encoder." + std::to_string(l);
    detail::visit_ln(p.encoder[l].ln_attn, base + ".ln_attn", out);
    detail::visit_attention(p.encoder[l].attn, base + ".attn", out);
    detail::visit_ln(p.encoder[l].ln_ff, base + ".ln_ff", out);
    detail::visit_ff(p.encoder[l].ff, base + ".ff", out);
  }
  detail::visit_ln(p.enc_norm, "encoder.norm", out);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const std::string base = "decoder." + std::to_string(l);
    detail::visit_ln(p.decoder[l].ln_self, base + ".ln_self", out);
    detail::visit_attention(p.decoder[l].self_attn, base + ".self_attn", out);
    detail::visit_ln(p.decoder[l].ln_cross, base + ".ln_cross", out);
    detail::visit_attention(p.decoder[l].cross_attn, base + ".cross_attn", out);
    detail::visit_ln(p.decoder[l].ln_ff, base + ".ln_ff", out);
    detail::visit_ff(p.decoder[l].ff, base + ".ff", out);
  }
  detail::visit_ln(p.dec_norm, "decoder.norm", out);
  return out;
}

template <typename Scalar>
std::size_t param_count(const ModelParams<Scalar>& p) {
  std::size_t n = 0;
  auto& mut = const_cast<ModelParams<Scalar>&>(p);
  for (const auto& t : named_tensors(mut)) n += static_cast<std::size_t>(t.tensor->size());
  return n;
}

namespace detail {

template <typename Scalar>
void size_like_config(ModelParams<Scalar>& p, const ModelConfig& cfg) {
  const int d = cfg.d_model;
  auto ln = [&](LayerNormParams<Scalar>& l) {
    l.gain = Mat<Scalar>::Ones(d, 1);
    l.bias = Mat<Scalar>::Zero(d, 1);
  };
  auto attn = [&](AttentionParams<Scalar>& a) {
    a.wq = a.wk = a.wv = a.wo = Mat<Scalar>::Zero(d, d);
    a.bq = a.bk = a.bv = a.bo = Mat<Scalar>::Zero(d, 1);
  };
  auto ff = [&](FeedForwardParams<Scalar>& f) {
    f.w1 = Mat<Scalar>::Zero(d, cfg.d_ff);
    f.b1 = Mat<Scalar>::Zero(cfg.d_ff, 1);
    f.w2 = Mat<Scalar>::Zero(cfg.d_ff, d);
    f.b2 = Mat<Scalar>::Zero(d, 1);
  };
  p.embedding = Mat<Scalar>::Zero(cfg.vocab_size, d);
  p.encoder.resize(cfg.n_layers_enc);
  p.decoder.resize(cfg.n_layers_dec);
  for (auto& l : p.encoder) {
    ln(l.ln_attn);
    ln(l.ln_ff);
    attn(l.attn);
    ff(l.ff);
  }
  for (auto& l : p.decoder) {
    ln(l.ln_self);
    ln(l.ln_cross);
    ln(l.ln_ff);
    attn(l.self_attn);
    attn(l.cross_attn);
    ff(l.ff);
  }
  ln(p.enc_norm);
  ln(p.dec_norm);
}

}  // namespace detail

// Zero-valued parameter set shaped like the config (gradient/moment buffers).
template <typename Scalar>
ModelParams<Scalar> zeros_like_config(const ModelConfig& cfg) {
  ModelParams<Scalar> p;
  detail::size_like_config(p, cfg);
  for (auto& l : p.encoder) {
    l.ln_attn.gain.setZero();
    l.ln_ff.gain.setZero();
  }
  for (auto& l : p.decoder) {
    l.ln_self.gain.setZero();
    l.ln_cross.gain.setZero();
    l.ln_ff.gain.setZero();
  }
  p.enc_norm.gain.setZero();
  p.dec_norm.gain.setZero();
  return p;
}

// Gaussian init scaled per tensor role; layer norms start at identity.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<Scalar> p;
  detail::size_like_config(p, cfg);
  auto tensors = named_tensors(p);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Mat<Scalar>& t = *tensors[i].tensor;
    const std::string& name = tensors[i].name;
    // Weight matrices only; biases stay zero and gains stay at identity.
    const std::string leaf = name.substr(name.rfind('.') + 1);
    if (leaf == "gain" || leaf == "bias" || leaf[0] == 'b') continue;
    Rng rng = Rng::derive(seed, {0x696e6974ull, i});  // "init"
    double std_dev;
    if (name == "embedding") {
      std_dev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    } else {
      std_dev = std::sqrt(2.0 / static_cast<double>(t.rows() + t.cols()));
    }
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        t(r, c) = static_cast<Scalar>(rng.next_gauss() * std_dev);
      }
    }
  }
  return p;
}

// Sinusoidal position encodings for positions [0, len).
template <typename Scalar>
Mat<Scalar> position_encoding(int len, int d_model) {
  Mat<Scalar> pe(len, d_model);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = pos / std::pow(10000.0, exponent);
      pe(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

struct FwdOptions {
  bool train = false;
  std::uint64_t seed = 0;
};

namespace detail {

constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
struct LnCache {
  Mat<Scalar> xhat;     // L x d
  Vec<Scalar> inv_std;  // L
  Mat<Scalar> out;      // L x d
};

template <typename Scalar>
struct DropCache {
  bool active = false;
  Mat<Scalar> mask;  // 0 or 1/(1-p)
};

template <typename Scalar>
struct AttnCache {
  Mat<Scalar> q, k, v;            // Lq x d, Lm x d, Lm x d
  std::vector<Mat<Scalar>> attn;  // per head, Lq x Lm
  Mat<Scalar> ctx;                // Lq x d
};

template <typename Scalar>
struct FfCache {
  Mat<Scalar> pre;  // L x d_ff
  Mat<Scalar> act;  // L x d_ff
};

template <typename Scalar>
struct EncLayerCache {
  bool kept = true;
  Mat<Scalar> x_in;
  LnCache<Scalar> ln1;
  AttnCache<Scalar> attn;
  DropCache<Scalar> drop1;
  Mat<Scalar> x_mid;
  LnCache<Scalar> ln2;
  FfCache<Scalar> ff;
  DropCache<Scalar> drop2;
};

template <typename Scalar>
struct DecLayerCache {
  bool kept = true;
  Mat<Scalar> x_in;
  LnCache<Scalar> ln1;
  AttnCache<Scalar> self_attn;
  DropCache<Scalar> drop1;
  Mat<Scalar> x_mid1;
  LnCache<Scalar> ln2;
  AttnCache<Scalar> cross;
  DropCache<Scalar> drop2;
  Mat<Scalar> x_mid2;
  LnCache<Scalar> ln3;
  FfCache<Scalar> ff;
  DropCache<Scalar> drop3;
};

template <typename Scalar>
struct ForwardCache {
  std::vector<int> src, tgt;
  DropCache<Scalar> enc_emb_drop, dec_emb_drop;
  Mat<Scalar> enc_in, dec_in;  // post-embedding, post-dropout inputs to the stacks
  std::vector<EncLayerCache<Scalar>> enc_layers;
  LnCache<Scalar> enc_norm;
  std::vector<DecLayerCache<Scalar>> dec_layers;
  LnCache<Scalar> dec_norm;
  Mat<Scalar> logprobs;  // T x V
};

template <typename Scalar>
LnCache<Scalar> layer_norm(const Mat<Scalar>& x, const LayerNormParams<Scalar>& ln) {
  const Eigen::Index L = x.rows(), d = x.cols();
  LnCache<Scalar> c;
  c.xhat.resize(L, d);
  c.inv_std.resize(L);
  c.out.resize(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    const Scalar mean = x.row(i).mean();
    const Scalar var = (x.row(i).array() - mean).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEps));
    c.inv_std(i) = inv;
    c.xhat.row(i) = (x.row(i).array() - mean) * inv;
    c.out.row(i) = c.xhat.row(i).cwiseProduct(ln.gain.transpose()) + ln.bias.transpose();
  }
  return c;
}

// dx for layer norm; accumulates parameter gradients.
template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy, const LnCache<Scalar>& c, const LayerNormParams<Scalar>& ln,
                                LayerNormParams<Scalar>& grad) {
  const Eigen::Index L = dy.rows(), d = dy.cols();
  Mat<Scalar> dx(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    grad.gain.col(0) += dy.row(i).cwiseProduct(c.xhat.row(i)).transpose();
    grad.bias.col(0) += dy.row(i).transpose();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dxhat = dy.row(i).cwiseProduct(ln.gain.col(0).transpose());
    const Scalar m1 = dxhat.mean();
    const Scalar m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
    dx.row(i) = ((dxhat.array() - m1) - c.xhat.row(i).array() * m2) * c.inv_std(i);
  }
  return dx;
}

template <typename Scalar>
void apply_dropout(Mat<Scalar>& x, double rate, Rng& rng, DropCache<Scalar>& cache) {
  if (rate <= 0.0) {
    cache.active = false;
    return;
  }
  cache.active = true;
  cache.mask.resize(x.rows(), x.cols());
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      cache.mask(r, c) = rng.next_double() < rate ? Scalar(0) : keep_scale;
    }
  }
  x = x.cwiseProduct(cache.mask);
}

// Multi-head attention over pre-normed inputs. Causal masks column j > row i.
template <typename Scalar>
Mat<Scalar> attention(const Mat<Scalar>& query_in, const Mat<Scalar>& memory_in, const AttentionParams<Scalar>& p,
                      int n_heads, bool causal, AttnCache<Scalar>& c) {
  const Eigen::Index Lq = query_in.rows(), Lm = memory_in.rows(), d = query_in.cols();
  const Eigen::Index dh = d / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  c.q = query_in * p.wq;
  c.q.rowwise() += p.bq.col(0).transpose();
  c.k = memory_in * p.wk;
  c.k.rowwise() += p.bk.col(0).transpose();
  c.v = memory_in * p.wv;
  c.v.rowwise() += p.bv.col(0).transpose();
  c.attn.assign(n_heads, Mat<Scalar>());
  c.ctx.resize(Lq, d);
  for (int h = 0; h < n_heads; ++h) {
    Mat<Scalar> scores = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
    if (causal) {
      for (Eigen::Index i = 0; i < Lq; ++i) {
        for (Eigen::Index j = i + 1; j < Lm; ++j) scores(i, j) = -std::numeric_limits<Scalar>::infinity();
      }
    }
    Mat<Scalar>& a = c.attn[h];
    a.resize(Lq, Lm);
    for (Eigen::Index i = 0; i < Lq; ++i) {
      const Scalar m = scores.row(i).maxCoeff();
      a.row(i) = (scores.row(i).array() - m).exp();
      a.row(i) /= a.row(i).sum();
    }
    c.ctx.middleCols(h * dh, dh) = a * c.v.middleCols(h * dh, dh);
  }
  Mat<Scalar> out = c.ctx * p.wo;
  out.rowwise() += p.bo.col(0).transpose();
  return out;
}

// Backward of attention. Returns d(query_in); d(memory_in) is accumulated so
// self- and cross-attention can share the code.
template <typename Scalar>
Mat<Scalar> attention_backward(const Mat<Scalar>& dout, const Mat<Scalar>& query_in, const Mat<Scalar>& memory_in,
                               const AttentionParams<Scalar>& p, int n_heads, const AttnCache<Scalar>& c,
                               AttentionParams<Scalar>& grad, Mat<Scalar>& dmemory_in) {
  const Eigen::Index d = query_in.cols();
  const Eigen::Index dh = d / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  grad.wo += c.ctx.transpose() * dout;
  grad.bo.col(0) += dout.colwise().sum().transpose();
  Mat<Scalar> dctx = dout * p.wo.transpose();

  Mat<Scalar> dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    const Mat<Scalar>& a = c.attn[h];
    const auto dctx_h = dctx.middleCols(h * dh, dh);
    Mat<Scalar> da = dctx_h * vh.transpose();
    dv.middleCols(h * dh, dh) = a.transpose() * dctx_h;
    // softmax backward rowwise: a .* (da - rowsum(da .* a))
    Mat<Scalar> dscores(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const Scalar dot = da.row(i).cwiseProduct(a.row(i)).sum();
      dscores.row(i) = (a.row(i).array() * (da.row(i).array() - dot)).matrix();
    }
    dscores *= scale;
    dq.middleCols(h * dh, dh) = dscores * kh;
    dk.middleCols(h * dh, dh) = dscores.transpose() * qh;
  }

  grad.wq += query_in.transpose() * dq;
  grad.bq.col(0) += dq.colwise().sum().transpose();
  grad.wk += memory_in.transpose() * dk;
  grad.bk.col(0) += dk.colwise().sum().transpose();
  grad.wv += memory_in.transpose() * dv;
  grad.bv.col(0) += dv.colwise().sum().transpose();
  dmemory_in += dk * p.wk.transpose() + dv * p.wv.transpose();
  return dq * p.wq.transpose();
}

template <typename Scalar>
Mat<Scalar> feed_forward(const Mat<Scalar>& x, const FeedForwardParams<Scalar>& p, FfCache<Scalar>& c) {
  c.pre = x * p.w1;
  c.pre.rowwise() += p.b1.col(0).transpose();
  c.act = c.pre.cwiseMax(Scalar(0));
  Mat<Scalar> out = c.act * p.w2;
  out.rowwise() += p.b2.col(0).transpose();
  return out;
}

template <typename Scalar>
Mat<Scalar> feed_forward_backward(const Mat<Scalar>& dout, const Mat<Scalar>& x, const FeedForwardParams<Scalar>& p,
                                  const FfCache<Scalar>& c, FeedForwardParams<Scalar>& grad) {
  grad.w2 += c.act.transpose() * dout;
  grad.b2.col(0) += dout.colwise().sum().transpose();
  Mat<Scalar> dact = dout * p.w2.transpose();
  Mat<Scalar> dpre = ((c.pre.array() > Scalar(0)).template cast<Scalar>() * dact.array()).matrix();
  grad.w1 += x.transpose() * dpre;
  grad.b1.col(0) += dpre.colwise().sum().transpose();
  return dpre * p.w1.transpose();
}

inline void validate_ids(const std::vector<int>& ids, const ModelConfig& cfg, const char* what) {
  if (ids.empty()) throw std::invalid_argument(std::string(what) + " sequence is empty");
  if (static_cast<int>(ids.size()) > cfg.max_positions) {
    throw std::invalid_argument(std::string(what) + " sequence length " + std::to_string(ids.size()) +
                                " exceeds max_positions " + std::to_string(cfg.max_positions));
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw std::invalid_argument(std::string(what) + " id " + std::to_string(id) + " outside vocabulary of size " +
                                  std::to_string(cfg.vocab_size));
    }
  }
}

template <typename Scalar>
Mat<Scalar> embed(const ModelParams<Scalar>& p, const std::vector<int>& ids, int d_model) {
  const Scalar scale = std::sqrt(static_cast<Scalar>(d_model));
  Mat<Scalar> x(ids.size(), d_model);
  const Mat<Scalar> pe = position_encoding<Scalar>(static_cast<int>(ids.size()), d_model);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    x.row(i) = p.embedding.row(ids[i]) * scale + pe.row(i);
  }
  return x;
}

// Residual blend used at eval when layer drop is active:
// out = x + (1 - rate) * (layer(x) - x). With rate 0 the layer output is
// used directly so train (rates 0) and eval agree bitwise.
template <typename Scalar>
Mat<Scalar> layer_drop_blend(const Mat<Scalar>& x_in, Mat<Scalar>&& layer_out, double rate, bool train) {
  if (train || rate <= 0.0) return std::move(layer_out);
  return x_in + Scalar(1.0 - rate) * (layer_out - x_in);
}

// Encoder stack only; fills the encoder half of the cache. The final normed
// output lands in c.enc_norm.out.
template <typename Scalar>
void run_encoder(const ModelParams<Scalar>& p, const ModelConfig& cfg, const std::vector<int>& src,
                 const FwdOptions& opt, Rng& rng, ForwardCache<Scalar>& c) {
  validate_ids(src, cfg, "source");
  c.src = src;
  const bool train = opt.train;
  const double p_drop = train ? cfg.dropout_rate : 0.0;
  const double p_layer = cfg.layer_drop_rate;

  Mat<Scalar> x = embed(p, src, cfg.d_model);
  apply_dropout(x, p_drop, rng, c.enc_emb_drop);
  c.enc_in = x;
  c.enc_layers.assign(p.encoder.size(), {});
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    auto& lc = c.enc_layers[l];
    lc.x_in = x;
    if (train && p_layer > 0.0 && rng.next_double() < p_layer) {
      lc.kept = false;
      continue;
    }
    lc.ln1 = layer_norm(x, p.encoder[l].ln_attn);
    Mat<Scalar> sa = attention(lc.ln1.out, lc.ln1.out, p.encoder[l].attn, cfg.n_heads, false, lc.attn);
    apply_dropout(sa, p_drop, rng, lc.drop1);
    lc.x_mid = x + sa;
    lc.ln2 = layer_norm(lc.x_mid, p.encoder[l].ln_ff);
    Mat<Scalar> ff = feed_forward(lc.ln2.out, p.encoder[l].ff, lc.ff);
    apply_dropout(ff, p_drop, rng, lc.drop2);
    x = layer_drop_blend(lc.x_in, Mat<Scalar>(lc.x_mid + ff), p_layer, train);
  }
  c.enc_norm = layer_norm(x, p.enc_norm);
}

// Full forward pass; fills the cache when train-time backward will follow.
template <typename Scalar>
void run_forward(const ModelParams<Scalar>& p, const ModelConfig& cfg, const std::vector<int>& src,
                 const std::vector<int>& tgt_prefix, const FwdOptions& opt, Rng& rng, ForwardCache<Scalar>& c) {
  validate_ids(tgt_prefix, cfg, "target prefix");
  run_encoder(p, cfg, src, opt, rng, c);
  c.tgt = tgt_prefix;
  const bool train = opt.train;
  const double p_drop = train ? cfg.dropout_rate : 0.0;
  const double p_layer = cfg.layer_drop_rate;
  const Mat<Scalar>& enc_out = c.enc_norm.out;

  // Decoder.
  if (tgt_prefix.empty()) throw std::invalid_argument("target prefix is empty");
  Mat<Scalar> y = embed(p, tgt_prefix, cfg.d_model);
  apply_dropout(y, p_drop, rng, c.dec_emb_drop);
  c.dec_in = y;
  c.dec_layers.assign(p.decoder.size(), {});
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    auto& lc = c.dec_layers[l];
    lc.x_in = y;
    if (train && p_layer > 0.0 && rng.next_double() < p_layer) {
      lc.kept = false;
      continue;
    }
    lc.ln1 = layer_norm(y, p.decoder[l].ln_self);
    Mat<Scalar> sa = attention(lc.ln1.out, lc.ln1.out, p.decoder[l].self_attn, cfg.n_heads, true, lc.self_attn);
    apply_dropout(sa, p_drop, rng, lc.drop1);
    lc.x_mid1 = y + sa;
    lc.ln2 = layer_norm(lc.x_mid1, p.decoder[l].ln_cross);
    Mat<Scalar> ca = attention(lc.ln2.out, enc_out, p.decoder[l].cross_attn, cfg.n_heads, false, lc.cross);
    apply_dropout(ca, p_drop, rng, lc.drop2);
    lc.x_mid2 = lc.x_mid1 + ca;
    lc.ln3 = layer_norm(lc.x_mid2, p.decoder[l].ln_ff);
    Mat<Scalar> ff = feed_forward(lc.ln3.out, p.decoder[l].ff, lc.ff);
    apply_dropout(ff, p_drop, rng, lc.drop3);
    y = layer_drop_blend(lc.x_in, Mat<Scalar>(lc.x_mid2 + ff), p_layer, train);
  }
  c.dec_norm = layer_norm(y, p.dec_norm);

  // Output projection through the shared embedding, then log-softmax.
  Mat<Scalar> logits = c.dec_norm.out * p.embedding.transpose();
  c.logprobs.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    c.logprobs.row(i) = logits.row(i).array() - lse;
  }
}

// Backward from d(logprob-layer logits) = dlogits; accumulates into grads.
template <typename Scalar>
void run_backward(const ModelParams<Scalar>& p, const ModelConfig& cfg, const ForwardCache<Scalar>& c,
                  const Mat<Scalar>& dlogits, ModelParams<Scalar>& g) {
  const Scalar emb_scale = std::sqrt(static_cast<Scalar>(cfg.d_model));

  // Output projection.
  g.embedding += dlogits.transpose() * c.dec_norm.out;
  Mat<Scalar> dy = dlogits * p.embedding;
  dy = layer_norm_backward(dy, c.dec_norm, p.dec_norm, g.dec_norm);

  Mat<Scalar> denc_out = Mat<Scalar>::Zero(c.enc_norm.out.rows(), c.enc_norm.out.cols());

  for (int l = static_cast<int>(p.decoder.size()) - 1; l >= 0; --l) {
    const auto& lc = c.dec_layers[l];
    if (!lc.kept) continue;  // skipped layers are identities
    const auto& lp = p.decoder[l];
    auto& lg = g.decoder[l];

    Mat<Scalar> dff_out = dy;
    if (lc.drop3.active) dff_out = dff_out.cwiseProduct(lc.drop3.mask);
    Mat<Scalar> dln3_out = feed_forward_backward(dff_out, lc.ln3.out, lp.ff, lc.ff, lg.ff);
    Mat<Scalar> dx_mid2 = dy + layer_norm_backward(dln3_out, lc.ln3, lp.ln_ff, lg.ln_ff);

    Mat<Scalar> dca = dx_mid2;
    if (lc.drop2.active) dca = dca.cwiseProduct(lc.drop2.mask);
    Mat<Scalar> dln2_out =
        attention_backward(dca, lc.ln2.out, c.enc_norm.out, lp.cross_attn, cfg.n_heads, lc.cross, lg.cross_attn, denc_out);
    Mat<Scalar> dx_mid1 = dx_mid2 + layer_norm_backward(dln2_out, lc.ln2, lp.ln_cross, lg.ln_cross);

    Mat<Scalar> dsa = dx_mid1;
    if (lc.drop1.active) dsa = dsa.cwiseProduct(lc.drop1.mask);
    Mat<Scalar> dself = Mat<Scalar>::Zero(lc.ln1.out.rows(), lc.ln1.out.cols());
    Mat<Scalar> dln1_out =
        attention_backward(dsa, lc.ln1.out, lc.ln1.out, lp.self_attn, cfg.n_heads, lc.self_attn, lg.self_attn, dself);
    dln1_out += dself;
    dy = dx_mid1 + layer_norm_backward(dln1_out, lc.ln1, lp.ln_self, lg.ln_self);
  }
  if (c.dec_emb_drop.active) dy = dy.cwiseProduct(c.dec_emb_drop.mask);
  for (std::size_t i = 0; i < c.tgt.size(); ++i) {
    g.embedding.row(c.tgt[i]) += dy.row(i) * emb_scale;
  }

  // Encoder stack.
  Mat<Scalar> dx = layer_norm_backward(denc_out, c.enc_norm, p.enc_norm, g.enc_norm);
  for (int l = static_cast<int>(p.encoder.size()) - 1; l >= 0; --l) {
    const auto& lc = c.enc_layers[l];
    if (!lc.kept) continue;
    const auto& lp = p.encoder[l];
    auto& lg = g.encoder[l];

    Mat<Scalar> dff_out = dx;
    if (lc.drop2.active) dff_out = dff_out.cwiseProduct(lc.drop2.mask);
    Mat<Scalar> dln2_out = feed_forward_backward(dff_out, lc.ln2.out, lp.ff, lc.ff, lg.ff);
    Mat<Scalar> dx_mid = dx + layer_norm_backward(dln2_out, lc.ln2, lp.ln_ff, lg.ln_ff);

    Mat<Scalar> dsa = dx_mid;
    if (lc.drop1.active) dsa = dsa.cwiseProduct(lc.drop1.mask);
    Mat<Scalar> dself = Mat<Scalar>::Zero(lc.ln1.out.rows(), lc.ln1.out.cols());
    Mat<Scalar> dln1_out =
        attention_backward(dsa, lc.ln1.out, lc.ln1.out, lp.attn, cfg.n_heads, lc.attn, lg.attn, dself);
    dln1_out += dself;
    dx = dx_mid + layer_norm_backward(dln1_out, lc.ln1, lp.ln_attn, lg.ln_attn);
  }
  if (c.enc_emb_drop.active) dx = dx.cwiseProduct(c.enc_emb_drop.mask);
  for (std::size_t i = 0; i < c.src.size(); ++i) {
    g.embedding.row(c.src[i]) += dx.row(i) * emb_scale;
  }
}

}  // namespace detail

// Per-position next-token log-probabilities: row t is the distribution over
// the token following tgt_prefix[0..t]. Dropout and layer drop fire only in
// train mode, driven by the seed.
template <typename Scalar>
Mat<Scalar> forward(const ModelParams<Scalar>& p, const ModelConfig& cfg, const std::vector<int>& src,
                    const std::vector<int>& tgt_prefix, const FwdOptions& opt = {}) {
  cfg.validate();
  detail::ForwardCache<Scalar> cache;
  Rng rng = Rng::derive(opt.seed, {0x666f7277ull});  // "forw"
  detail::run_forward(p, cfg, src, tgt_prefix, opt, rng, cache);
  return cache.logprobs;
}

// One training example: tgt = [bos, tag, ..., eos]; positions 1.. are the
// prediction targets of the prefix ending just before them.
struct TrainExample {
  std::vector<int> src;
  std::vector<int> tgt;
};

template <typename Scalar>
struct LossGrad {
  Scalar loss = 0;
  ModelParams<Scalar> grads;
  std::size_t positions = 0;
};

namespace detail {

// Label-smoothed NLL for one sequence, plus dlogits if requested.
template <typename Scalar>
Scalar sequence_loss(const Mat<Scalar>& logprobs, const std::vector<int>& tgt, double eps, int pad_id,
                     Mat<Scalar>* dlogits) {
  const Eigen::Index T = static_cast<Eigen::Index>(tgt.size()) - 1;
  const Eigen::Index V = logprobs.cols();
  const Scalar smooth_count = static_cast<Scalar>(pad_id < V ? V - 1 : V);  // non-pad vocabulary entries
  Scalar total = 0;
  if (dlogits) *dlogits = Mat<Scalar>::Zero(T, V);
  for (Eigen::Index t = 0; t < T; ++t) {
    const int gold = tgt[t + 1];
    Scalar smooth_sum = 0;
    for (Eigen::Index v = 0; v < V; ++v) {
      if (v != pad_id) smooth_sum -= logprobs(t, v);
    }
    total += Scalar(1.0 - eps) * -logprobs(t, gold) + Scalar(eps) * smooth_sum / smooth_count;
    if (dlogits) {
      // d(loss_t)/dlogits = softmax - target distribution
      dlogits->row(t) = logprobs.row(t).array().exp();
      for (Eigen::Index v = 0; v < V; ++v) {
        if (v != pad_id) (*dlogits)(t, v) -= Scalar(eps) / smooth_count;
      }
      (*dlogits)(t, gold) -= Scalar(1.0 - eps);
    }
  }
  return total;
}

}  // namespace detail

// Mean label-smoothed cross-entropy over all target positions in the batch,
// with gradients exact for the computation performed (including any dropout
// and layer-drop decisions drawn from the seed).
template <typename Scalar>
LossGrad<Scalar> loss_and_grad(const ModelParams<Scalar>& p, const ModelConfig& cfg,
                               const std::vector<TrainExample>& batch, double label_smoothing, std::uint64_t seed,
                               int pad_id = 0, bool train_mode = true) {
  cfg.validate();
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("label_smoothing must lie in [0,1)");
  }
  std::size_t positions = 0;
  for (const auto& e : batch) {
    if (e.tgt.size() >= 2) positions += e.tgt.size() - 1;
  }
  if (positions == 0) throw std::invalid_argument("loss_and_grad: batch has no target positions");

  LossGrad<Scalar> out;
  out.grads = zeros_like_config<Scalar>(cfg);
  out.positions = positions;
  Scalar total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch[i];
    if (e.tgt.size() < 2) throw std::invalid_argument("loss_and_grad: target needs at least two tokens");
    detail::ForwardCache<Scalar> cache;
    Rng rng = Rng::derive(seed, {0x6c6f7373ull, i});  // "loss"
    detail::run_forward(p, cfg, e.src, e.tgt, FwdOptions{train_mode, seed}, rng, cache);
    // The prediction of the final position (past eos) is unused.
    Mat<Scalar> logprobs = cache.logprobs.topRows(cache.logprobs.rows() - 1);
    Mat<Scalar> dlogits;
    total += detail::sequence_loss(logprobs, e.tgt, label_smoothing, pad_id, &dlogits);
    Mat<Scalar> dfull = Mat<Scalar>::Zero(cache.logprobs.rows(), cache.logprobs.cols());
    dfull.topRows(dlogits.rows()) = dlogits / static_cast<Scalar>(positions);
    detail::run_backward(p, cfg, cache, dfull, out.grads);
  }
  out.loss = total / static_cast<Scalar>(positions);
  return out;
}

// Loss only, same computation path and RNG consumption as loss_and_grad.
template <typename Scalar>
Scalar batch_loss(const ModelParams<Scalar>& p, const ModelConfig& cfg, const std::vector<TrainExample>& batch,
                  double label_smoothing, std::uint64_t seed, int pad_id = 0, bool train_mode = true) {
  cfg.validate();
  std::size_t positions = 0;
  for (const auto& e : batch) {
    if (e.tgt.size() >= 2) positions += e.tgt.size() - 1;
  }
  if (positions == 0) throw std::invalid_argument("batch_loss: batch has no target positions");
  Scalar total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch[i];
    detail::ForwardCache<Scalar> cache;
    Rng rng = Rng::derive(seed, {0x6c6f7373ull, i});
    detail::run_forward(p, cfg, e.src, e.tgt, FwdOptions{train_mode, seed}, rng, cache);
    Mat<Scalar> logprobs = cache.logprobs.topRows(cache.logprobs.rows() - 1);
    total += detail::sequence_loss<Scalar>(logprobs, e.tgt, label_smoothing, pad_id, nullptr);
  }
  return total / static_cast<Scalar>(positions);
}

// Elementwise arithmetic mean of parameter sets; shapes must agree.
template <typename Scalar>
ModelParams<Scalar> average_params(const std::vector<const ModelParams<Scalar>*>& sets) {
  if (sets.empty()) throw std::invalid_argument("average_params: empty sequence");
  ModelParams<Scalar> avg = *sets.front();
  auto avg_tensors = named_tensors(avg);
  for (std::size_t s = 1; s < sets.size(); ++s) {
    auto& other = const_cast<ModelParams<Scalar>&>(*sets[s]);
    auto other_tensors = named_tensors(other);
    if (other_tensors.size() != avg_tensors.size()) {
      throw std::invalid_argument("average_params: parameter sets have different structure");
    }
    for (std::size_t t = 0; t < avg_tensors.size(); ++t) {
      if (other_tensors[t].tensor->rows() != avg_tensors[t].tensor->rows() ||
          other_tensors[t].tensor->cols() != avg_tensors[t].tensor->cols()) {
        throw std::invalid_argument("average_params: shape mismatch on tensor " + avg_tensors[t].name);
      }
      *avg_tensors[t].tensor += *other_tensors[t].tensor;
    }
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(sets.size());
  for (auto& t : avg_tensors) *t.tensor *= inv;
  return avg;
}

}  // namespace minimt
