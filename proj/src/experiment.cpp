#include "minimt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "minimt/checkpoint.hpp"
#include "minimt/evaluation.hpp"
#include "minimt/text.hpp"

namespace fs = std::filesystem;

namespace minimt {

const char* tool_version() { return "minimt 0.1.0"; }

namespace {

// "la:2400, lb:900" -> {la: 2400, lb: 900}
std::map<std::string, std::size_t> parse_count_map(const std::string& value, const IniFile& ini,
                                                   const std::string& section, const std::string& key) {
  std::map<std::string, std::size_t> out;
  for (const auto& item : split_list(value)) {
    auto colon = item.find(':');
    long long n = -1;
    if (colon != std::string::npos) {
      try {
        std::size_t used = 0;
        n = std::stoll(item.substr(colon + 1), &used);
        if (used != item.size() - colon - 1) n = -1;
      } catch (const std::exception&) {
        n = -1;
      }
    }
    if (colon == std::string::npos || n < 0) {
      throw ConfigError(ini.name() + ":" + std::to_string(ini.line_of(section, key)) + ": malformed `" + key +
                        "` entry `" + item + "` (expected name:count)");
    }
    out[item.substr(0, colon)] = static_cast<std::size_t>(n);
  }
  return out;
}

std::uint64_t derived_seed(std::uint64_t global, std::uint64_t tag) { return Rng::derive(global, {tag}).next_u64(); }

constexpr std::uint64_t kSeedTask = 1, kSeedTrain = 2, kSeedRound = 3, kSeedSweep = 4, kSeedInit = 5, kSeedCompare = 6;

}  // namespace

ExperimentConfig parse_experiment(const IniFile& ini) {
  ExperimentConfig cfg;
  cfg.seed = ini.get_u64_or("run", "seed", 1);

  // [task]
  if (!ini.has_section("task")) throw ConfigError(ini.name() + ": missing [task] section");
  const std::string type = ini.get_or("task", "type", "cipher");
  if (type == "cipher") {
    cfg.task_is_cipher = true;
    cfg.cipher.n_languages = static_cast<int>(ini.get_int_or("task", "languages", 2));
    cfg.cipher.base_vocab_size = static_cast<int>(ini.get_int_or("task", "base_vocab", 60));
    cfg.cipher.overlap = ini.get_double_or("task", "overlap", 0.0);
    cfg.cipher.sentence_len_min = static_cast<int>(ini.get_int_or("task", "len_min", 3));
    cfg.cipher.sentence_len_max = static_cast<int>(ini.get_int_or("task", "len_max", 9));
    cfg.cipher.reorder = ini.get_bool_or("task", "reorder", false);
    cfg.cipher.dev_size = static_cast<std::size_t>(ini.get_int_or("task", "dev_size", 500));
    cfg.cipher.seed = ini.get_u64_or("task", "seed", derived_seed(cfg.seed, kSeedTask));
    if (ini.has("task", "parallel")) {
      cfg.cipher.parallel_sizes = parse_count_map(ini.get("task", "parallel"), ini, "task", "parallel");
    }
    if (ini.has("task", "mono")) {
      cfg.cipher.mono_sizes = parse_count_map(ini.get("task", "mono"), ini, "task", "mono");
    }
    if (cfg.cipher.parallel_sizes.empty()) {
      throw ConfigError(ini.name() + ": [task] parallel must list at least one direction");
    }
  } else if (type == "manifest") {
    cfg.task_is_cipher = false;
    cfg.task_manifest = ini.get("task", "manifest");
  } else {
    throw ConfigError(ini.name() + ":" + std::to_string(ini.line_of("task", "type")) + ": unknown task type `" + type +
                      "`");
  }

  // [tokenizer]
  cfg.vocab_size = static_cast<int>(ini.get_int_or("tokenizer", "vocab_size", 1000));
  if (ini.has("tokenizer", "compare_sizes")) {
    for (const auto& s : split_list(ini.get("tokenizer", "compare_sizes"))) {
      cfg.compare_sizes.push_back(std::stoi(s));
    }
  }
  cfg.compare_steps = static_cast<int>(ini.get_int_or("tokenizer", "compare_steps", 120));

  // [model]
  cfg.model_init_seed = ini.get_u64_or("model", "init_seed", derived_seed(cfg.seed, kSeedInit));
  if (ini.has("model", "d_model")) {
    cfg.model_preset.clear();
    cfg.model.d_model = static_cast<int>(ini.get_int("model", "d_model"));
    cfg.model.d_ff = static_cast<int>(ini.get_int_or("model", "d_ff", 4 * cfg.model.d_model));
    cfg.model.n_layers_enc = static_cast<int>(ini.get_int_or("model", "layers_enc", 2));
    cfg.model.n_layers_dec = static_cast<int>(ini.get_int_or("model", "layers_dec", 2));
    cfg.model.n_heads = static_cast<int>(ini.get_int_or("model", "heads", 4));
  } else {
    cfg.model_preset = ini.get_or("model", "preset", "small");
    cfg.model = ModelConfig::preset(cfg.model_preset, 2);
  }
  cfg.model.dropout_rate = ini.get_double_or("model", "dropout", 0.1);
  cfg.model.layer_drop_rate = ini.get_double_or("model", "layer_drop", 0.05);
  cfg.model.max_positions = static_cast<int>(ini.get_int_or("model", "max_positions", 512));

  // [train]
  cfg.train.peak_lr = ini.get_double_or("train", "peak_lr", 0.0003);
  cfg.train.warmup_steps = static_cast<int>(ini.get_int_or("train", "warmup", 200));
  cfg.train.tokens_per_batch = static_cast<int>(ini.get_int_or("train", "tokens_per_batch", 2048));
  cfg.train.max_steps = static_cast<int>(ini.get_int_or("train", "max_steps", 300));
  cfg.train.validate_every = static_cast<int>(ini.get_int_or("train", "validate_every", 200));
  cfg.train.keep_last_k = static_cast<int>(ini.get_int_or("train", "keep_last", 15));
  cfg.train.label_smoothing = ini.get_double_or("train", "label_smoothing", 0.1);
  cfg.train.beta1 = ini.get_double_or("train", "adam_beta1", 0.90);
  cfg.train.beta2 = ini.get_double_or("train", "adam_beta2", 0.98);
  cfg.train.adam_epsilon = ini.get_double_or("train", "adam_epsilon", 1e-8);
  cfg.train.weight_decay = ini.get_double_or("train", "weight_decay", 0.0001);
  cfg.train.dev_limit = static_cast<int>(ini.get_int_or("train", "dev_limit", 64));
  cfg.train.seed = ini.get_u64_or("train", "seed", derived_seed(cfg.seed, kSeedTrain));

  // [eval]
  cfg.eval_beam = static_cast<int>(ini.get_int_or("eval", "beam", 5));
  cfg.train.dev_beam = cfg.eval_beam;
  cfg.eval_dev_limit = static_cast<int>(ini.get_int_or("eval", "dev_limit", 0));
  cfg.stage_dev_limit = static_cast<int>(ini.get_int_or("eval", "stage_dev_limit", 64));
  cfg.stop.hard_cap = static_cast<int>(ini.get_int_or("eval", "hard_cap", 256));
  if (ini.has("eval", "directions")) {
    for (const auto& d : split_list(ini.get("eval", "directions"))) {
      cfg.eval_directions.push_back(parse_direction(d));
    }
  }

  // [bt.N] in strictly increasing round order.
  for (int r = 1;; ++r) {
    const std::string section = "bt." + std::to_string(r);
    if (!ini.has_section(section)) {
      // Reject stray bt sections that skip a round number.
      for (const auto& s : ini.sections()) {
        if (s.rfind("bt.", 0) == 0) {
          const int n = std::atoi(s.substr(3).c_str());
          if (n >= r) {
            throw ConfigError(ini.name() + ": [" + s + "] skips round " + std::to_string(r) +
                              " (rounds must be consecutive from 1)");
          }
        }
      }
      break;
    }
    RoundBlock block;
    block.round = r;
    block.strategy = DecodeStrategy::parse(ini.get_or(section, "strategy", "topk:10"));
    if (ini.has(section, "mono_caps")) {
      block.mono_caps = parse_count_map(ini.get(section, "mono_caps"), ini, section, "mono_caps");
    }
    block.filter.max_len = static_cast<int>(ini.get_int_or(section, "filter_max_len", 250));
    block.filter.max_ratio = ini.get_double_or(section, "filter_max_ratio", 1.8);
    block.mix_ratio = static_cast<int>(ini.get_int_or(section, "mix_ratio", 5));
    block.mixture_size = static_cast<std::size_t>(ini.get_int_or(section, "mixture_size", 0));
    block.seed = ini.get_u64_or(section, "seed", Rng::derive(cfg.seed, {kSeedRound, static_cast<std::uint64_t>(r)}).next_u64());
    block.generator = ini.get_or(section, "generator", "previous");
    block.max_steps = static_cast<int>(ini.get_int_or(section, "max_steps", 0));
    block.validate_every = static_cast<int>(ini.get_int_or(section, "validate_every", 0));
    cfg.rounds.push_back(std::move(block));
  }

  // [sweep]
  if (ini.has_section("sweep")) {
    cfg.sweep.enabled = true;
    for (const auto& s : split_list(ini.get("sweep", "strategies"))) {
      cfg.sweep.strategies.push_back(DecodeStrategy::parse(s));
    }
    for (const auto& v : split_list(ini.get("sweep", "volumes"))) {
      cfg.sweep.volumes.push_back(static_cast<std::size_t>(std::stoll(v)));
    }
    cfg.sweep.pivot = ini.get("sweep", "pivot");
    if (ini.has("sweep", "base_caps")) {
      cfg.sweep.base_caps = parse_count_map(ini.get("sweep", "base_caps"), ini, "sweep", "base_caps");
    }
    cfg.sweep.max_steps = static_cast<int>(ini.get_int_or("sweep", "max_steps", 150));
    cfg.sweep.validate_every = static_cast<int>(ini.get_int_or("sweep", "validate_every", 0));
    cfg.sweep.seed = ini.get_u64_or("sweep", "seed", derived_seed(cfg.seed, kSeedSweep));
    if (cfg.sweep.strategies.empty() || cfg.sweep.volumes.empty()) {
      throw ConfigError(ini.name() + ": [sweep] needs both strategies and volumes");
    }
  }

  cfg.train.validate();
  return cfg;
}

namespace {

struct Pipeline {
  ExperimentConfig cfg;
  IniFile ini;
  std::string run_dir;
  std::string config_path;
  bool resume = false;

  TaskData task;
  bool task_loaded = false;
  BpeVocab vocab;
  bool vocab_loaded = false;
  std::map<std::string, Corpus> train_dirs;  // both orders of every pair

  std::set<std::string> completed;

  std::string path(const std::string& rel) const { return run_dir + "/" + rel; }

  void log(const std::string& msg) const { std::cerr << "[minimt] " << msg << "\n"; }

  void load_markers() {
    const std::string manifest = path("run.manifest");
    if (!fs::exists(manifest)) return;
    const IniFile m = IniFile::parse_file(manifest);
    for (const auto& key : m.keys("stages")) {
      if (m.get("stages", key) == "done") completed.insert(key);
    }
  }

  void write_manifest() {
    IniWriter w;
    w.section("run");
    w.kv("tool", std::string(tool_version()));
    w.kv("config_hash", to_hex(fnv1a64(cfg.config_text)));
    w.kv("seed", cfg.seed);
    w.section("inputs");
    w.kv("config", to_hex(fnv1a64(cfg.config_text)));
    if (!cfg.task_is_cipher) w.kv("task_manifest", to_hex(fingerprint_file(cfg.task_manifest)));
    w.section("stages");
    for (const auto& s : completed) w.kv(s, std::string("done"));
    w.write(path("run.manifest"));
  }

  bool skip(const std::string& stage) {
    if (resume && completed.count(stage)) {
      log("stage " + stage + ": already done, skipping");
      return true;
    }
    return false;
  }

  void done(const std::string& stage) {
    completed.insert(stage);
    write_manifest();
    log("stage " + stage + ": done");
  }

  // ---- data access -------------------------------------------------------

  void need_task() {
    if (task_loaded) return;
    const std::string manifest = path("data/corpus.manifest");
    if (!fs::exists(manifest)) throw ConfigError("no prepared data in " + run_dir + " (run `prepare` first)");
    task = load_task_data(manifest);
    task_loaded = true;
    train_dirs.clear();
    for (const auto& [key, corpus] : task.parallel) {
      train_dirs[key] = corpus;
      Corpus rev = reversed(corpus);
      const std::string rkey = rev.direction.key();
      if (!train_dirs.count(rkey)) train_dirs[rkey] = std::move(rev);
    }
  }

  void need_vocab() {
    if (vocab_loaded) return;
    const std::string file = path("vocab/vocab.txt");
    if (!fs::exists(file)) throw ConfigError("no trained vocabulary in " + run_dir + " (run `train-bpe` first)");
    vocab = load_vocab(file);
    vocab_loaded = true;
  }

  std::vector<Direction> eval_dirs() {
    need_task();
    if (!cfg.eval_directions.empty()) return cfg.eval_directions;
    std::vector<Direction> dirs;
    for (const auto& a : task.languages) {
      for (const auto& b : task.languages) {
        if (!(a == b)) dirs.push_back(Direction{a, b});
      }
    }
    return dirs;
  }

  ModelConfig model_cfg() {
    need_vocab();
    ModelConfig m = cfg.model;
    m.vocab_size = vocab.size();
    m.validate();
    return m;
  }

  std::vector<std::string> bpe_training_text() {
    need_task();
    std::vector<std::string> text;
    for (const auto& [key, corpus] : task.parallel) {
      for (const auto& p : corpus.pairs) {
        text.push_back(p.src);
        text.push_back(p.tgt);
      }
    }
    for (const auto& [code, mono] : task.mono) {
      text.insert(text.end(), mono.sentences.begin(), mono.sentences.end());
    }
    return text;
  }

  std::vector<std::string> tag_tokens() {
    need_task();
    std::vector<std::string> tags;
    for (const auto& l : task.languages) tags.push_back(l.tag_token());
    return tags;
  }

  MixtureSpec baseline_mixture_spec(std::uint64_t seed) {
    need_task();
    MixtureSpec spec;
    spec.temperature = ini.get_double_or("train", "temperature", 5.0);
    spec.seed = seed;
    std::size_t total = 0;
    for (const auto& [key, corpus] : train_dirs) {
      MixtureSource src{corpus.direction, &corpus, std::nullopt};
      auto cap = task.caps.find(key);
      if (cap != task.caps.end()) src.cap = cap->second;
      spec.sources.push_back(src);
      total += src.effective_size();
    }
    const auto requested = static_cast<std::size_t>(ini.get_int_or("train", "mixture_size", 0));
    spec.total_size = requested > 0 ? requested : total;
    return spec;
  }

  DevSet limited_dev(int limit) {
    need_task();
    if (limit <= 0 || static_cast<std::size_t>(limit) >= task.dev.size()) return task.dev;
    DevSet d;
    d.languages = task.dev.languages;
    for (const auto& s : task.dev.sentences) {
      d.sentences.emplace_back(s.begin(), s.begin() + limit);
    }
    return d;
  }

  // ---- model file helpers ------------------------------------------------

  void save_model(const std::string& file, const ModelParams<float>& params, std::uint64_t step) {
    Checkpoint ckpt;
    ckpt.config = model_cfg();
    ckpt.vocab_fingerprint = vocab_fingerprint(vocab);
    ckpt.step = step;
    ckpt.params = params;
    save_checkpoint(file, ckpt);
  }

  ModelParams<float> load_model(const std::string& file) {
    need_vocab();
    Checkpoint ckpt = load_checkpoint(file, vocab_fingerprint(vocab));
    if (!(ckpt.config == model_cfg())) {
      throw ConfigError(file + ": checkpoint config does not match the experiment's model block");
    }
    return ckpt.params;
  }

  // Averages the retained checkpoints of a stage directory into model.avg.bin.
  void write_stage_average(const std::string& stage_dir, const TrainResult& tr) {
    std::vector<Checkpoint> ckpts;
    for (const auto& p : tr.checkpoint_paths) ckpts.push_back(load_checkpoint(p));
    if (ckpts.empty()) throw ConfigError("stage produced no checkpoints to average: " + stage_dir);
    ModelParams<float> avg = average_checkpoints(ckpts);
    save_model(stage_dir + "/model.avg.bin", avg, ckpts.back().step);
  }

  std::string last_raw_checkpoint(const TrainResult& tr) {
    if (tr.checkpoint_paths.empty()) throw ConfigError("training produced no checkpoints");
    return tr.checkpoint_paths.back();
  }

  void write_scores(const std::string& file, const ModelParams<float>& params, int limit) {
    const auto dirs = eval_dirs();
    Translator<float> translator(params, model_cfg(), vocab, cfg.stop);
    IniWriter w;
    w.section("dev");
    double sum = 0.0;
    DevSet dev = limited_dev(limit);
    for (const auto& dir : dirs) {
      const int si = dev.lang_index(dir.src);
      const int ti = dev.lang_index(dir.tgt);
      if (si < 0 || ti < 0) throw ConfigError("dev set lacks language for direction " + dir.key());
      const auto out = translator.translate(dev.sentences[si], dir.tgt, DecodeStrategy::beam(cfg.eval_beam), 0);
      const double s = spbleu(out.sentences, dev.sentences[ti], vocab).score;
      w.kv(dir.key(), s, 2);
      sum += s;
    }
    w.kv("avg", dirs.empty() ? 0.0 : sum / dirs.size(), 2);
    w.write(file);
  }

  // ---- stages ------------------------------------------------------------

  void stage_prepare() {
    if (skip("prepare")) return;
    log("stage prepare: generating task data");
    TaskData data;
    if (cfg.task_is_cipher) {
      data = generate_cipher_task(cfg.cipher).data;
    } else {
      data = load_task_data(cfg.task_manifest);
    }
    save_task_data(path("data"), data);
    task_loaded = false;
    done("prepare");
  }

  void stage_train_bpe() {
    if (skip("train-bpe")) return;
    log("stage train-bpe: training vocabulary of size " + std::to_string(cfg.vocab_size));
    fs::create_directories(path("vocab"));
    const BpeVocab v = bpe_train(bpe_training_text(), cfg.vocab_size, tag_tokens());
    save_vocab(path("vocab/vocab.txt"), v);
    vocab_loaded = false;
    done("train-bpe");
  }

  void stage_vocab_compare() {
    if (cfg.compare_sizes.empty() || skip("vocab-compare")) return;
    log("stage vocab-compare: " + std::to_string(cfg.compare_sizes.size()) + " vocabulary sizes");
    need_task();
    fs::create_directories(path("vocab_compare"));
    std::string table = "vocab_size\ttokens\tparams\tdev_spbleu\n";
    const auto text = bpe_training_text();
    std::size_t index = 0;
    for (int size : cfg.compare_sizes) {
      const BpeVocab v = bpe_train(text, size, tag_tokens());
      const std::string vocab_file = path("vocab_compare/vocab." + std::to_string(size) + ".txt");
      save_vocab(vocab_file, v);

      ModelConfig m = cfg.model;
      m.vocab_size = v.size();
      m.validate();
      ModelParams<float> params = init_params<float>(m, cfg.model_init_seed);
      TrainConfig tc = cfg.train;
      tc.max_steps = cfg.compare_steps;
      tc.validate_every = cfg.compare_steps;
      tc.seed = Rng::derive(cfg.train.seed, {kSeedCompare, index}).next_u64();
      const auto mixture = sample_mixture(baseline_mixture_spec(cfg.train.seed));
      const std::string stage_dir = path("vocab_compare/" + std::to_string(size));
      fs::create_directories(stage_dir);
      TrainResult tr = train_model(params, m, v, mixture, task.dev, eval_dirs(), tc, stage_dir);

      // Score the averaged model at the stage dev limit.
      std::vector<Checkpoint> ckpts;
      for (const auto& p : tr.checkpoint_paths) ckpts.push_back(load_checkpoint(p));
      ModelParams<float> avg = average_checkpoints(ckpts);
      Translator<float> translator(avg, m, v, cfg.stop);
      DevSet dev = limited_dev(cfg.stage_dev_limit);
      double sum = 0.0;
      const auto dirs = eval_dirs();
      for (const auto& dir : dirs) {
        const auto out =
            translator.translate(dev.sentences[dev.lang_index(dir.src)], dir.tgt, DecodeStrategy::beam(cfg.eval_beam), 0);
        sum += spbleu(out.sentences, dev.sentences[dev.lang_index(dir.tgt)], v).score;
      }
      char row[128];
      std::snprintf(row, sizeof(row), "%d\t%d\t%zu\t%.2f\n", size, v.size(), param_count(params),
                    dirs.empty() ? 0.0 : sum / dirs.size());
      table += row;
      ++index;
    }
    std::ofstream out(path("vocab_compare.tsv"), std::ios::binary);
    out << table;
    done("vocab-compare");
  }

  void stage_baseline() {
    if (skip("baseline")) return;
    log("stage baseline: training on parallel data");
    need_task();
    need_vocab();
    const ModelConfig m = model_cfg();
    ModelParams<float> params = init_params<float>(m, cfg.model_init_seed);
    const auto mixture = sample_mixture(baseline_mixture_spec(cfg.train.seed));
    fs::create_directories(path("baseline"));
    TrainResult tr = train_model(params, m, vocab, mixture, task.dev, eval_dirs(), cfg.train, path("baseline"));
    std::ofstream(path("baseline/train.log"), std::ios::binary) << render_train_log(tr.log);
    write_stage_average(path("baseline"), tr);
    {
      IniWriter w;
      w.section("baseline");
      w.kv("steps", static_cast<long long>(tr.steps_run));
      w.kv("mixture_size", static_cast<long long>(mixture.size()));
      w.kv("skipped_too_long", static_cast<long long>(tr.skipped_too_long));
      w.kv("final_dev_spbleu", tr.final_dev_spbleu, 2);
      w.write(path("baseline/summary"));
    }
    write_scores(path("baseline/scores"), load_model(path("baseline/model.avg.bin")), cfg.eval_dev_limit);
    done("baseline");
  }

  // The generator for a round: previous stage's averaged model, the baseline
  // average, or an explicit checkpoint path.
  ModelParams<float> generator_for(const RoundBlock& block, const std::string& prev_stage_dir) {
    if (block.generator == "previous") return load_model(prev_stage_dir + "/model.avg.bin");
    if (block.generator == "baseline") return load_model(path("baseline/model.avg.bin"));
    if (block.generator.rfind("path:", 0) == 0) return load_model(block.generator.substr(5));
    throw ConfigError("round " + std::to_string(block.round) + ": unknown generator `" + block.generator + "`");
  }

  void stage_bt_rounds() {
    need_task();
    need_vocab();
    std::string prev_stage_dir = path("baseline");
    for (const auto& block : cfg.rounds) {
      const std::string stage = "bt-round-" + std::to_string(block.round);
      const std::string stage_dir = path("bt/round" + std::to_string(block.round));
      if (skip(stage)) {
        prev_stage_dir = stage_dir;
        continue;
      }
      log("stage " + stage + ": strategy " + block.strategy.label());
      fs::create_directories(stage_dir);

      BtRoundConfig rc;
      rc.round = block.round;
      rc.strategy = block.strategy;
      rc.mono_caps = block.mono_caps;
      rc.filter.max_len = block.filter.max_len;
      rc.filter.max_ratio = block.filter.max_ratio;
      rc.mix_ratio_parallel_to_synthetic = block.mix_ratio;
      rc.mixture_size = block.mixture_size;
      rc.temperature = ini.get_double_or("train", "temperature", 5.0);
      rc.seed = block.seed;
      rc.train = cfg.train;
      rc.train.seed = block.seed;
      if (block.max_steps > 0) rc.train.max_steps = block.max_steps;
      if (block.validate_every > 0) rc.train.validate_every = block.validate_every;

      const ModelParams<float> prev = load_model(last_raw_checkpoint_in(prev_stage_dir));
      const ModelParams<float> generator = generator_for(block, prev_stage_dir);
      const ModelConfig m = model_cfg();

      BtRoundState state;
      state.parallel_by_dir = &train_dirs;
      state.mono = &task.mono;
      state.dev = &task.dev;
      state.vocab = &vocab;
      state.model_cfg = &m;
      state.prev_params = &prev;
      state.generator_params = &generator;
      state.generator_cfg = &m;
      state.eval_directions = eval_dirs();
      state.stop = cfg.stop;
      state.eval_limit = cfg.stage_dev_limit;
      state.eval_beam = cfg.eval_beam;
      state.ckpt_dir = stage_dir;

      BtRoundResult result = run_bt_round(rc, state);
      for (const auto& [key, corpus] : result.synthetic) {
        save_parallel(stage_dir + "/synthetic." + key, corpus);
      }
      std::ofstream(stage_dir + "/report.txt", std::ios::binary) << render_round_report(result.report);
      std::ofstream(stage_dir + "/train.log", std::ios::binary) << render_train_log(result.train_result.log);
      write_stage_average(stage_dir, result.train_result);
      prev_stage_dir = stage_dir;
      done(stage);
    }
  }

  // Last raw checkpoint inside a stage directory (by filename order).
  std::string last_raw_checkpoint_in(const std::string& stage_dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(stage_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("ckpt-", 0) == 0 && name.size() > 4 && name.substr(name.size() - 4) == ".bin") {
        files.push_back(entry.path().string());
      }
    }
    if (files.empty()) throw ConfigError("no checkpoints found in " + stage_dir);
    std::sort(files.begin(), files.end());
    return files.back();
  }

  void stage_sweep() {
    if (!cfg.sweep.enabled || skip("sweep")) return;
    log("stage sweep: " + std::to_string(cfg.sweep.strategies.size()) + " strategies x " +
        std::to_string(cfg.sweep.volumes.size()) + " volumes");
    need_task();
    need_vocab();
    const ModelConfig m = model_cfg();
    const ModelParams<float> start = load_model(last_raw_checkpoint_in(path("baseline")));
    const ModelParams<float> generator = load_model(path("baseline/model.avg.bin"));

    std::string table = "strategy\tvolume\tsynthetic_mixed\tdistinct2\tdev_spbleu\n";
    fs::create_directories(path("sweep"));
    for (std::size_t si = 0; si < cfg.sweep.strategies.size(); ++si) {
      for (std::size_t vi = 0; vi < cfg.sweep.volumes.size(); ++vi) {
        const DecodeStrategy strategy = cfg.sweep.strategies[si];
        const std::size_t volume = cfg.sweep.volumes[vi];
        const std::string cell = strategy.label() + "-" + std::to_string(volume);
        const std::string cell_dir = path("sweep/" + cell);
        fs::create_directories(cell_dir);
        log("sweep cell " + cell);

        BtRoundConfig rc;
        rc.round = 1;
        rc.strategy = strategy;
        rc.mono_caps = cfg.sweep.base_caps;
        rc.mono_caps[cfg.sweep.pivot] = volume;
        rc.temperature = ini.get_double_or("train", "temperature", 5.0);
        rc.seed = Rng::derive(cfg.sweep.seed, {si, vi}).next_u64();
        rc.train = cfg.train;
        rc.train.seed = rc.seed;
        rc.train.max_steps = cfg.sweep.max_steps;
        rc.train.validate_every = cfg.sweep.validate_every > 0 ? cfg.sweep.validate_every : cfg.sweep.max_steps;

        BtRoundState state;
        state.parallel_by_dir = &train_dirs;
        state.mono = &task.mono;
        state.dev = &task.dev;
        state.vocab = &vocab;
        state.model_cfg = &m;
        state.prev_params = &start;
        state.generator_params = &generator;
        state.generator_cfg = &m;
        state.eval_directions = eval_dirs();
        state.stop = cfg.stop;
        state.eval_limit = cfg.stage_dev_limit;
        state.eval_beam = cfg.eval_beam;
        state.ckpt_dir = cell_dir;
        state.score_before = false;

        BtRoundResult result = run_bt_round(rc, state);
        std::vector<std::string> sources;
        std::size_t mixed = 0;
        for (const auto& [key, corpus] : result.synthetic) {
          for (const auto& p : corpus.pairs) sources.push_back(p.src);
          mixed += corpus.size();
        }
        const double d2 = sources.empty() ? 0.0 : distinct_n(sources, 2);
        char row[160];
        std::snprintf(row, sizeof(row), "%s\t%zu\t%zu\t%.4f\t%.2f\n", strategy.label().c_str(), volume, mixed, d2,
                      result.report.avg_after);
        table += row;
      }
    }
    std::ofstream(path("sweep/table.tsv"), std::ios::binary) << table;
    done("sweep");
  }

  std::string final_model_file() {
    if (!cfg.rounds.empty()) {
      return path("bt/round" + std::to_string(cfg.rounds.back().round) + "/model.avg.bin");
    }
    return path("baseline/model.avg.bin");
  }

  void stage_matrix() {
    if (skip("matrix")) return;
    log("stage matrix: scoring all ordered language pairs");
    need_task();
    need_vocab();
    const ModelParams<float> params = load_model(final_model_file());
    const ModelConfig m = model_cfg();
    Translator<float> translator(params, m, vocab, cfg.stop);
    DevSet dev = limited_dev(cfg.eval_dev_limit);
    const ScoreMatrix matrix =
        score_matrix(dev, vocab, [&](const LanguageId& src, const LanguageId& tgt, const std::vector<std::string>& s) {
          (void)src;
          return translator.translate(s, tgt, DecodeStrategy::beam(cfg.eval_beam), 0).sentences;
        });
    fs::create_directories(path("eval"));
    std::ofstream(path("eval/matrix.tsv"), std::ios::binary) << matrix_grid_tsv(matrix);
    std::ofstream(path("eval/matrix_flat.tsv"), std::ios::binary) << matrix_flat_tsv(matrix);
    done("matrix");
  }

  void write_summary() {
    IniWriter w;
    w.section("summary");
    w.kv("tool", std::string(tool_version()));
    w.kv("stages", static_cast<long long>(completed.size()));
    if (fs::exists(path("baseline/summary"))) {
      const IniFile b = IniFile::parse_file(path("baseline/summary"));
      w.kv("baseline_dev_spbleu", b.get_or("baseline", "final_dev_spbleu", "-"));
    }
    for (const auto& block : cfg.rounds) {
      const std::string report = path("bt/round" + std::to_string(block.round) + "/report.txt");
      if (fs::exists(report)) {
        const IniFile r = IniFile::parse_file(report);
        w.kv("round" + std::to_string(block.round) + "_dev_spbleu", r.get_or("round", "dev_avg_after", "-"));
      }
    }
    w.write(path("summary.txt"));
  }

  void run_pipeline() {
    stage_prepare();
    stage_train_bpe();
    stage_vocab_compare();
    stage_baseline();
    stage_bt_rounds();
    stage_sweep();
    stage_matrix();
    write_summary();
  }

  // ---- utility subcommands (explicit blocks, paths as given) --------------

  void do_translate() {
    if (!ini.has_section("translate")) throw ConfigError(ini.name() + ": missing [translate] section");
    const BpeVocab v = load_vocab(ini.get("translate", "vocab"));
    const Checkpoint ckpt = load_checkpoint(ini.get("translate", "checkpoint"), vocab_fingerprint(v),
                                            ini.get_bool_or("translate", "ignore_vocab_mismatch", false));
    const LanguageId tgt = make_language(ini.get("translate", "tgt"));
    const DecodeStrategy strategy = DecodeStrategy::parse(ini.get_or("translate", "strategy", "beam:5"));
    const std::uint64_t seed = ini.get_u64_or("translate", "seed", 0);
    const auto lines = read_lines(ini.get("translate", "input"));
    Translator<float> translator(ckpt.params, ckpt.config, v, cfg.stop);
    const auto out = translator.translate(lines, tgt, strategy, seed);
    write_lines(ini.get("translate", "output"), out.sentences);
    if (ini.has("translate", "side")) {
      std::vector<std::string> side;
      side.reserve(out.sentences.size());
      char buf[64];
      for (std::size_t i = 0; i < out.sentences.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.4f\t%zu", out.logprobs[i], out.lengths[i]);
        side.emplace_back(buf);
      }
      write_lines(ini.get("translate", "side"), side);
    }
    log("translated " + std::to_string(lines.size()) + " sentences into " + tgt.code);
  }

  void do_average() {
    if (!ini.has_section("average")) throw ConfigError(ini.name() + ": missing [average] section");
    std::vector<std::string> files;
    if (ini.has("average", "inputs")) {
      files = split_list(ini.get("average", "inputs"));
    } else {
      const std::string dir = ini.get("average", "dir");
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt-", 0) == 0) files.push_back(entry.path().string());
      }
      std::sort(files.begin(), files.end());
      files = last_k(files, static_cast<std::size_t>(ini.get_int_or("average", "last", 15)));
    }
    if (files.empty()) throw ConfigError("average-ckpt: no input checkpoints");
    std::vector<Checkpoint> ckpts;
    ckpts.reserve(files.size());
    for (const auto& f : files) ckpts.push_back(load_checkpoint(f));
    Checkpoint out;
    out.config = ckpts.front().config;
    out.vocab_fingerprint = ckpts.front().vocab_fingerprint;
    out.step = ckpts.back().step;
    out.params = average_checkpoints(ckpts);
    save_checkpoint(ini.get("average", "out"), out);
    log("averaged " + std::to_string(files.size()) + " checkpoints");
  }
};

}  // namespace

void run_subcommand(const std::string& name, const RunOptions& options) {
  const IniFile ini = IniFile::parse_file(options.config_path);
  ExperimentConfig cfg = parse_experiment(ini);
  {
    std::ifstream f(options.config_path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    cfg.config_text = ss.str();
  }
  if (options.seed_override) {
    cfg.seed = *options.seed_override;
    // Re-derive stage seeds that were not pinned in the config file.
    if (!ini.has("task", "seed")) cfg.cipher.seed = derived_seed(cfg.seed, kSeedTask);
    if (!ini.has("train", "seed")) cfg.train.seed = derived_seed(cfg.seed, kSeedTrain);
    if (!ini.has("model", "init_seed")) cfg.model_init_seed = derived_seed(cfg.seed, kSeedInit);
    for (auto& block : cfg.rounds) {
      if (!ini.has("bt." + std::to_string(block.round), "seed")) {
        block.seed = Rng::derive(cfg.seed, {kSeedRound, static_cast<std::uint64_t>(block.round)}).next_u64();
      }
    }
    if (cfg.sweep.enabled && !ini.has("sweep", "seed")) cfg.sweep.seed = derived_seed(cfg.seed, kSeedSweep);
  }

  std::string run_dir = options.out_dir;
  if (run_dir.empty()) {
    char stamp[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm_buf;
    gmtime_r(&now, &tm_buf);
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_buf);
    run_dir = "runs/" + to_hex(fnv1a64(cfg.config_text)).substr(0, 12) + "-" + stamp;
  }

  if (options.dry_run) {
    std::cerr << "[minimt] dry run: config " << options.config_path << " is valid\n";
    std::cerr << "[minimt] run directory would be " << run_dir << "\n";
    std::cerr << "[minimt] subcommand: " << name << "\n";
    return;
  }

  fs::create_directories(run_dir);
  Pipeline pipe{std::move(cfg), ini, run_dir, options.config_path, options.resume};
  pipe.load_markers();

  if (name == "prepare") {
    pipe.stage_prepare();
  } else if (name == "train-bpe") {
    pipe.stage_train_bpe();
  } else if (name == "train") {
    pipe.stage_baseline();
  } else if (name == "backtranslate") {
    pipe.stage_bt_rounds();
  } else if (name == "translate") {
    pipe.do_translate();
  } else if (name == "evaluate") {
    pipe.stage_matrix();
  } else if (name == "average-ckpt") {
    pipe.do_average();
  } else if (name == "pipeline") {
    pipe.run_pipeline();
  } else {
    throw ConfigError("unknown subcommand `" + name + "`");
  }
}

}  // namespace minimt
