#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stsn/tensor.hpp"

namespace stsn {

/**
 * Checkpoint container and binary format.
 *
 * Layout (all integers little-endian):
 *   magic   8 bytes  "STSNCKPT"
 *   version u16      currently 1
 *   hash    u64      architecture hash (config_hash of the resolved model)
 *   records until end of file, each:
 *     name_len u32, name bytes (UTF-8)
 *     rank u32, dims u32[rank]
 *     data f32[prod(dims)] (IEEE-754 bit patterns)
 *
 * Float payloads round-trip bit-exactly. Model parameters are stored under
 * their ParamStore names; optimizer state uses "opt.m.<name>" /
 * "opt.v.<name>" plus the scalars "opt.t" and "train.step".
 */
struct Checkpoint {
  uint16_t version = 1;
  uint64_t arch_hash = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  bool has(const std::string& name) const;
  const Tensor<float>& at(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Parses a checkpoint file; throws format_error on malformed input.
Checkpoint load_checkpoint(const std::string& path);

/// Same, but refuses files whose stored hash differs from expected_hash.
Checkpoint load_checkpoint(const std::string& path, uint64_t expected_hash);

}  // namespace stsn
