#pragma once

#include <cstdint>
#include <string>

#include "coldrec/error.hpp"

namespace coldrec::model {

// How a model without content represents cold items found in input sequences.
enum class ColdInputPolicy {
  Drop,  // remove them from the sequence
  Oov,   // keep the position with a zero item vector
};

inline std::string to_string(ColdInputPolicy p) { return p == ColdInputPolicy::Drop ? "drop" : "oov"; }

inline ColdInputPolicy parse_cold_input_policy(const std::string& s) {
  if (s == "drop") return ColdInputPolicy::Drop;
  if (s == "oov") return ColdInputPolicy::Oov;
  throw ValidationError("unknown cold input policy '" + s + "' (expected drop or oov)");
}

struct ModelConfig {
  std::size_t embedding_dim = 64;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 1;
  double dropout = 0.3;
  std::size_t max_seq_len = 64;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  ColdInputPolicy cold_input = ColdInputPolicy::Drop;
  bool filter_seen = false;

  void validate() const {
    if (embedding_dim == 0) throw ValidationError("model: embedding_dim must be positive");
    if (num_heads == 0 || embedding_dim % num_heads != 0) {
      throw ValidationError("model: embedding_dim must be divisible by num_heads");
    }
    if (max_seq_len < 2) throw ValidationError("model: max_seq_len must be at least 2");
    if (batch_size == 0) throw ValidationError("model: batch_size must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ValidationError("model: learning_rate must be positive");
    if (max_epochs == 0) throw ValidationError("model: max_epochs must be positive");
  }
};

}  // namespace coldrec::model
