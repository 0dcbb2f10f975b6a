#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mam/nets.hpp"
#include "mam/tensor.hpp"

namespace mam {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// On-disk layout (little-endian): magic "MAMCKPT1", then a u32 length-prefixed
// UTF-8 JSON header (version, model kind, MlpConfig, D, K, tensor index,
// CRC32 of payload, optional optimizer/RNG state), then the raw f64 payload
// in tensor-index order. Writes are atomic (temp file + rename); loads verify
// magic, version, index/payload agreement and the payload checksum.
struct Checkpoint {
  int version = 1;
  std::string model_kind;  // "conditional" | "marginal"
  MlpConfig mlp;
  int d = 0;
  int k = 0;
  std::vector<NamedTensor> tensors;
  std::optional<std::uint64_t> optimizer_step;
  std::map<std::string, std::string> rng_states;  // stream name -> hex state
  std::map<std::string, std::string> extra;       // small trainer metadata

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Parameter snapshot with standard names; moments (when given) are stored as
// "adam.m.<name>" / "adam.v.<name>".
Checkpoint checkpoint_from_net(const ConditionalNet& net);
Checkpoint checkpoint_from_net(const MarginalNet& net);

// Restores parameters into an already-configured net; throws CheckpointError
// naming the mismatched field (kind, D, K, widths, tensor shapes).
void restore_net(const Checkpoint& c, ConditionalNet& net);
void restore_net(const Checkpoint& c, MarginalNet& net);

// Builds a net shaped like the checkpoint describes, then restores it.
ConditionalNet conditional_net_from(const Checkpoint& c);
MarginalNet marginal_net_from(const Checkpoint& c);

}  // namespace mam
