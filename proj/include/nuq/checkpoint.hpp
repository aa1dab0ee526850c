#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nuq/tensor.hpp"

namespace nuq {

/// Versioned binary container: header (magic, format version, config echo)
/// followed by named f64 blobs.
struct CheckpointData {
  uint32_t version = 1;
  std::string config_echo;  // flat key=value text
  std::vector<std::pair<std::string, Tensor>> blobs;

  const Tensor* find(const std::string& name) const;
  bool has_prefix(const std::string& prefix) const;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

}  // namespace nuq
