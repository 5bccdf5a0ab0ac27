#include <doctest.h>

#include <cmath>
#include <vector>

#include "minimt/model.hpp"

using namespace minimt;

namespace {

using Grid = std::vector<std::vector<double>>;  // row-major [position][feature]

Grid grid(std::size_t rows, std::size_t cols) { return Grid(rows, std::vector<double>(cols, 0.0)); }

// ---------------------------------------------------------------------------
// Straight-line re-implementation of the forward pass with plain loops.
// Written against the architecture definition, independent of the library's
// matrix code; parameters are read coefficient by coefficient.

Grid oracle_layer_norm(const Grid& x, const Mat<double>& gain, const Mat<double>& bias) {
  const std::size_t L = x.size(), d = x[0].size();
  Grid y = grid(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[i][j];
    mean /= d;
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[i][j] - mean) * (x[i][j] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < d; ++j) y[i][j] = (x[i][j] - mean) * inv * gain(j, 0) + bias(j, 0);
  }
  return y;
}

Grid oracle_linear(const Grid& x, const Mat<double>& w, const Mat<double>& b) {
  const std::size_t L = x.size(), din = x[0].size(), dout = w.cols();
  Grid y = grid(L, dout);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = b(o, 0);
      for (std::size_t j = 0; j < din; ++j) acc += x[i][j] * w(j, o);
      y[i][o] = acc;
    }
  }
  return y;
}

// Single-head attention (the toy config uses one head).
Grid oracle_attention(const Grid& query_in, const Grid& memory_in, const AttentionParams<double>& p, bool causal) {
  const std::size_t Lq = query_in.size(), Lm = memory_in.size(), d = query_in[0].size();
  const Grid q = oracle_linear(query_in, p.wq, p.bq);
  const Grid k = oracle_linear(memory_in, p.wk, p.bk);
  const Grid v = oracle_linear(memory_in, p.wv, p.bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Grid ctx = grid(Lq, d);
  for (std::size_t i = 0; i < Lq; ++i) {
    std::vector<double> scores(Lm, -std::numeric_limits<double>::infinity());
    const std::size_t limit = causal ? i + 1 : Lm;
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < limit; ++j) {
      double dot = 0.0;
      for (std::size_t f = 0; f < d; ++f) dot += q[i][f] * k[j][f];
      scores[j] = dot * scale;
      max_score = std::max(max_score, scores[j]);
    }
    double z = 0.0;
    std::vector<double> weights(Lm, 0.0);
    for (std::size_t j = 0; j < limit; ++j) {
      weights[j] = std::exp(scores[j] - max_score);
      z += weights[j];
    }
    for (std::size_t j = 0; j < limit; ++j) {
      for (std::size_t f = 0; f < d; ++f) ctx[i][f] += (weights[j] / z) * v[j][f];
    }
  }
  return oracle_linear(ctx, p.wo, p.bo);
}

Grid oracle_ff(const Grid& x, const FeedForwardParams<double>& p) {
  Grid h = oracle_linear(x, p.w1, p.b1);
  for (auto& row : h) {
    for (auto& v : row) v = std::max(0.0, v);
  }
  return oracle_linear(h, p.w2, p.b2);
}

void oracle_add(Grid& x, const Grid& y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x[i].size(); ++j) x[i][j] += y[i][j];
  }
}

Grid oracle_embed(const ModelParams<double>& p, const std::vector<int>& ids, int d_model) {
  Grid x = grid(ids.size(), d_model);
  const double scale = std::sqrt(static_cast<double>(d_model));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (int j = 0; j < d_model; ++j) {
      const double angle = i / std::pow(10000.0, static_cast<double>(2 * (j / 2)) / d_model);
      x[i][j] = p.embedding(ids[i], j) * scale + (j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return x;
}

Grid oracle_forward(const ModelParams<double>& p, const ModelConfig& cfg, const std::vector<int>& src,
                    const std::vector<int>& tgt) {
  Grid x = oracle_embed(p, src, cfg.d_model);
  for (const auto& layer : p.encoder) {
    Grid a = oracle_attention(oracle_layer_norm(x, layer.ln_attn.gain, layer.ln_attn.bias),
                              oracle_layer_norm(x, layer.ln_attn.gain, layer.ln_attn.bias), layer.attn, false);
    oracle_add(x, a);
    Grid f = oracle_ff(oracle_layer_norm(x, layer.ln_ff.gain, layer.ln_ff.bias), layer.ff);
    oracle_add(x, f);
  }
  const Grid enc_out = oracle_layer_norm(x, p.enc_norm.gain, p.enc_norm.bias);

  Grid y = oracle_embed(p, tgt, cfg.d_model);
  for (const auto& layer : p.decoder) {
    Grid a = oracle_attention(oracle_layer_norm(y, layer.ln_self.gain, layer.ln_self.bias),
                              oracle_layer_norm(y, layer.ln_self.gain, layer.ln_self.bias), layer.self_attn, true);
    oracle_add(y, a);
    Grid c = oracle_attention(oracle_layer_norm(y, layer.ln_cross.gain, layer.ln_cross.bias), enc_out,
                              layer.cross_attn, false);
    oracle_add(y, c);
    Grid f = oracle_ff(oracle_layer_norm(y, layer.ln_ff.gain, layer.ln_ff.bias), layer.ff);
    oracle_add(y, f);
  }
  const Grid h = oracle_layer_norm(y, p.dec_norm.gain, p.dec_norm.bias);

  Grid logprobs = grid(tgt.size(), cfg.vocab_size);
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    for (int v = 0; v < cfg.vocab_size; ++v) {
      double acc = 0.0;
      for (int j = 0; j < cfg.d_model; ++j) acc += h[t][j] * p.embedding(v, j);
      logprobs[t][v] = acc;
    }
    double mx = logprobs[t][0];
    for (int v = 1; v < cfg.vocab_size; ++v) mx = std::max(mx, logprobs[t][v]);
    double z = 0.0;
    for (int v = 0; v < cfg.vocab_size; ++v) z += std::exp(logprobs[t][v] - mx);
    const double lse = mx + std::log(z);
    for (int v = 0; v < cfg.vocab_size; ++v) logprobs[t][v] -= lse;
  }
  return logprobs;
}

ModelConfig toy_config(int vocab = 3) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = 4;
  cfg.d_ff = 8;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.n_heads = 1;
  cfg.dropout_rate = 0.0;
  cfg.layer_drop_rate = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("forward matches the straight-line oracle on the 3-token toy") {
  const ModelConfig cfg = toy_config();
  const auto p = init_params<double>(cfg, 421);
  const std::vector<int> src{0, 2, 1};
  const std::vector<int> tgt{1, 0, 2, 2};
  const auto got = forward(p, cfg, src, tgt);
  const auto expected = oracle_forward(p, cfg, src, tgt);
  REQUIRE(got.rows() == static_cast<Eigen::Index>(tgt.size()));
  REQUIRE(got.cols() == 3);
  for (Eigen::Index t = 0; t < got.rows(); ++t) {
    for (Eigen::Index v = 0; v < got.cols(); ++v) {
      CHECK(std::abs(got(t, v) - expected[t][v]) < 1e-6);
    }
  }
}

TEST_CASE("forward matches the oracle on a deeper single-head model") {
  ModelConfig cfg = toy_config(5);
  cfg.n_layers_enc = 2;
  cfg.n_layers_dec = 2;
  const auto p = init_params<double>(cfg, 99);
  const auto got = forward(p, cfg, {3, 4}, {1, 2, 0});
  const auto expected = oracle_forward(p, cfg, {3, 4}, {1, 2, 0});
  for (Eigen::Index t = 0; t < got.rows(); ++t) {
    for (Eigen::Index v = 0; v < got.cols(); ++v) {
      CHECK(std::abs(got(t, v) - expected[t][v]) < 1e-6);
    }
  }
}

TEST_CASE("forward: probabilities sum to one per position") {
  ModelConfig cfg;
  cfg.vocab_size = 17;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.n_layers_enc = 2;
  cfg.n_layers_dec = 2;
  cfg.n_heads = 2;
  const auto p = init_params<float>(cfg, 7);
  const auto lp = forward(p, cfg, {5, 6, 7, 2}, {1, 9, 10, 11, 2});
  for (Eigen::Index t = 0; t < lp.rows(); ++t) {
    CHECK(std::abs(lp.row(t).array().exp().sum() - 1.0f) < 1e-6);
  }
}

TEST_CASE("forward: eval is deterministic; train with zero rates equals eval") {
  ModelConfig cfg = toy_config(9);
  const auto p = init_params<double>(cfg, 3);
  const auto a = forward(p, cfg, {4, 5}, {1, 6, 7});
  const auto b = forward(p, cfg, {4, 5}, {1, 6, 7});
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  const auto t = forward(p, cfg, {4, 5}, {1, 6, 7}, FwdOptions{true, 123});
  CHECK((a - t).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: train mode with dropout is seed-deterministic and differs from eval") {
  ModelConfig cfg = toy_config(9);
  cfg.dropout_rate = 0.4;
  const auto p = init_params<double>(cfg, 3);
  const auto a = forward(p, cfg, {4, 5}, {1, 6, 7}, FwdOptions{true, 11});
  const auto b = forward(p, cfg, {4, 5}, {1, 6, 7}, FwdOptions{true, 11});
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  const auto eval = forward(p, cfg, {4, 5}, {1, 6, 7});
  CHECK((a - eval).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("forward: invalid inputs") {
  const ModelConfig cfg = toy_config();
  const auto p = init_params<double>(cfg, 1);
  CHECK_THROWS_AS(forward(p, cfg, {0, 3}, {1}), std::invalid_argument);   // id out of vocab
  CHECK_THROWS_AS(forward(p, cfg, {}, {1}), std::invalid_argument);       // empty source
  ModelConfig tight = cfg;
  tight.max_positions = 2;
  CHECK_THROWS_AS(forward(p, tight, {0, 1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("loss: zero smoothing equals plain cross-entropy") {
  const ModelConfig cfg = toy_config(6);
  const auto p = init_params<double>(cfg, 17);
  const std::vector<TrainExample> batch{{{2, 3}, {1, 4, 5, 2}}};
  const auto lg = loss_and_grad(p, cfg, batch, 0.0, 0);
  const auto lp = forward(p, cfg, batch[0].src, batch[0].tgt);
  double expected = 0.0;
  for (std::size_t t = 0; t + 1 < batch[0].tgt.size(); ++t) {
    expected -= lp(t, batch[0].tgt[t + 1]);
  }
  expected /= 3.0;
  CHECK(lg.loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(lg.positions == 3);
}

TEST_CASE("loss: uniform output distribution gives ln V for every smoothing") {
  // Zero embeddings force logits to zero, hence a uniform distribution.
  const ModelConfig cfg = toy_config(11);
  auto p = init_params<double>(cfg, 4);
  p.embedding.setZero();
  const std::vector<TrainExample> batch{{{2, 3}, {1, 4, 5}}};
  for (double eps : {0.0, 0.1, 0.5}) {
    const auto lg = loss_and_grad(p, cfg, batch, eps, 0);
    CHECK(lg.loss == doctest::Approx(std::log(11.0)).epsilon(1e-9));
  }
}

TEST_CASE("loss: batches without target positions are rejected") {
  const ModelConfig cfg = toy_config();
  const auto p = init_params<double>(cfg, 1);
  CHECK_THROWS_AS(loss_and_grad(p, cfg, {}, 0.1, 0), std::invalid_argument);
  const std::vector<TrainExample> degenerate{{{0}, {1}}};
  CHECK_THROWS_AS(loss_and_grad(p, cfg, degenerate, 0.1, 0), std::invalid_argument);
}

TEST_CASE("gradients: analytic matches central finite differences (module check)") {
  ModelConfig cfg;
  cfg.vocab_size = 9;
  cfg.d_model = 6;
  cfg.d_ff = 10;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 2;
  cfg.n_heads = 3;
  cfg.dropout_rate = 0.0;
  cfg.layer_drop_rate = 0.0;
  auto p = init_params<double>(cfg, 314);
  const std::vector<TrainExample> batch{{{4, 5, 2}, {1, 6, 7, 2}}, {{8, 2}, {1, 5, 2}}};
  const auto lg = loss_and_grad(p, cfg, batch, 0.1, 9);
  auto tensors = named_tensors(p);
  auto grads = named_tensors(const_cast<ModelParams<double>&>(lg.grads));
  const double h = 1e-4;
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Mat<double>& t = *tensors[ti].tensor;
    // Spot-check a few coordinates per tensor here; the acceptance suite
    // covers every coordinate.
    const Eigen::Index stride = std::max<Eigen::Index>(1, t.size() / 5);
    for (Eigen::Index k = 0; k < t.size(); k += stride) {
      const double orig = t(k);
      t(k) = orig + h;
      const double up = batch_loss(p, cfg, batch, 0.1, 9);
      t(k) = orig - h;
      const double down = batch_loss(p, cfg, batch, 0.1, 9);
      t(k) = orig;
      const double fd = (up - down) / (2 * h);
      const double an = (*grads[ti].tensor)(k);
      const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("average_params: closed forms and shape mismatches") {
  const ModelConfig cfg = toy_config(5);
  auto a = init_params<float>(cfg, 1);
  auto b = init_params<float>(cfg, 2);

  // Identical inputs average to themselves.
  const auto same = average_params<float>({&a, &a, &a});
  CHECK((same.embedding - a.embedding).cwiseAbs().maxCoeff() == 0.0f);

  // All-zero and all-two tensors average to all-one.
  auto zeros = a, twos = a;
  for (auto& t : named_tensors(zeros)) t.tensor->setZero();
  for (auto& t : named_tensors(twos)) t.tensor->setConstant(2.0f);
  const auto mid = average_params<float>({&zeros, &twos});
  for (auto& t : named_tensors(mid)) {
    CHECK(t.tensor->minCoeff() == doctest::Approx(1.0f));
    CHECK(t.tensor->maxCoeff() == doctest::Approx(1.0f));
  }

  // Mean of two distinct sets, elementwise.
  const auto avg = average_params<float>({&a, &b});
  CHECK(avg.embedding(0, 0) == doctest::Approx(0.5f * (a.embedding(0, 0) + b.embedding(0, 0))));

  ModelConfig bigger = cfg;
  bigger.d_ff = 16;
  auto c = init_params<float>(bigger, 3);
  CHECK_THROWS_WITH_AS((average_params<float>({&a, &c})), doctest::Contains("ff.w1"), std::invalid_argument);
}

TEST_CASE("named_tensors: stable order and complete coverage") {
  const ModelConfig cfg = toy_config(5);
  auto p = init_params<float>(cfg, 8);
  const auto tensors = named_tensors(p);
  CHECK(tensors.front().name == "embedding");
  CHECK(tensors.back().name == "decoder.norm.bias");
  // 1 embedding + enc layer (16) + enc norm (2) + dec layer (24) + dec norm (2)
  CHECK(tensors.size() == 1 + 16 + 2 + 24 + 2);
  CHECK(param_count(p) > 0);
}
