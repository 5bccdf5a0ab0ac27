// Versioned binary checkpoints and checkpoint averaging. The format is
// documented in docs/checkpoint-format.md so other implementations can
// interoperate.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "minimt/model.hpp"

namespace minimt {

struct Checkpoint {
  std::uint32_t version = 1;
  ModelConfig config;
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t step = 0;
  ModelParams<float> params;
  bool has_optimizer = false;
  std::uint64_t adam_step = 0;
  ModelParams<float> adam_m, adam_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// expected_vocab_fingerprint, when provided, must match the stored one unless
// override_fingerprint is set; a mismatch raises ConfigError.
Checkpoint load_checkpoint(const std::string& path, std::optional<std::uint64_t> expected_vocab_fingerprint = {},
                           bool override_fingerprint = false);

// Elementwise mean of the checkpoints' parameters. All checkpoints must share
// config and vocab fingerprint; mismatches raise std::invalid_argument naming
// the differing field or tensor.
ModelParams<float> average_checkpoints(const std::vector<Checkpoint>& checkpoints);

// The paper-style "last k" selection: returns the trailing k items (all of
// them when fewer exist).
template <typename T>
std::vector<T> last_k(const std::vector<T>& items, std::size_t k) {
  const std::size_t start = items.size() > k ? items.size() - k : 0;
  return std::vector<T>(items.begin() + static_cast<std::ptrdiff_t>(start), items.end());
}

}  // namespace minimt
