#include "mam/checkpoint.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mam/errors.hpp"

namespace mam {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'M', 'C', 'K', 'P', 'T', '1'};

std::uint32_t payload_crc(const std::vector<NamedTensor>& tensors) {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const NamedTensor& nt : tensors) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(nt.tensor.data.data()),
                static_cast<uInt>(nt.tensor.data.size() * sizeof(double)));
  }
  return static_cast<std::uint32_t>(crc);
}

nlohmann::json mlp_to_json(const MlpConfig& cfg) {
  return {{"input_width", cfg.input_width},
          {"hidden_width", cfg.hidden_width},
          {"residual_layers", cfg.residual_layers},
          {"output_width", cfg.output_width}};
}

MlpConfig mlp_from_json(const nlohmann::json& j) {
  MlpConfig cfg;
  cfg.input_width = j.at("input_width").get<std::size_t>();
  cfg.hidden_width = j.at("hidden_width").get<std::size_t>();
  cfg.residual_layers = j.at("residual_layers").get<std::size_t>();
  cfg.output_width = j.at("output_width").get<std::size_t>();
  return cfg;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& nt : tensors) {
    if (nt.name == name) return &nt.tensor;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  nlohmann::json header;
  header["version"] = c.version;
  header["model_kind"] = c.model_kind;
  header["mlp"] = mlp_to_json(c.mlp);
  header["d"] = c.d;
  header["k"] = c.k;
  nlohmann::json index = nlohmann::json::array();
  std::size_t payload_count = 0;
  for (const NamedTensor& nt : c.tensors) {
    index.push_back({{"name", nt.name}, {"shape", nt.tensor.shape}});
    payload_count += nt.tensor.numel();
  }
  header["tensors"] = index;
  header["payload_count"] = payload_count;
  header["payload_crc32"] = payload_crc(c.tensors);
  if (c.optimizer_step.has_value()) header["optimizer_step"] = *c.optimizer_step;
  if (!c.rng_states.empty()) header["rng"] = c.rng_states;
  if (!c.extra.empty()) header["extra"] = c.extra;

  const std::string header_str = header.dump();
  if (header_str.size() > 0xFFFFFFFFull) throw CheckpointError("save_checkpoint: header too large");

  const std::string tmp_path = path + ".tmp";
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot write " + tmp_path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const NamedTensor& nt : c.tensors) {
      out.write(reinterpret_cast<const char*>(nt.tensor.data.data()),
                static_cast<std::streamsize>(nt.tensor.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("save_checkpoint: write failed for " + tmp_path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp_path, path, ec);
  if (ec) throw IoError("save_checkpoint: rename to " + path + " failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("load_checkpoint: bad magic bytes in " + path);
  }
  std::uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) throw CheckpointError("load_checkpoint: truncated header length");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw CheckpointError("load_checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("load_checkpoint: header is not valid JSON: ") + e.what());
  }

  Checkpoint c;
  try {
    c.version = header.at("version").get<int>();
    if (c.version != 1) {
      throw CheckpointError("load_checkpoint: unrecognized version " +
                            std::to_string(c.version));
    }
    c.model_kind = header.at("model_kind").get<std::string>();
    c.mlp = mlp_from_json(header.at("mlp"));
    c.d = header.at("d").get<int>();
    c.k = header.at("k").get<int>();
    std::size_t payload_count = 0;
    for (const auto& entry : header.at("tensors")) {
      NamedTensor nt;
      nt.name = entry.at("name").get<std::string>();
      nt.tensor = Tensor::zeros(entry.at("shape").get<std::vector<std::size_t>>());
      payload_count += nt.tensor.numel();
      c.tensors.push_back(std::move(nt));
    }
    if (payload_count != header.at("payload_count").get<std::size_t>()) {
      throw CheckpointError("load_checkpoint: tensor index disagrees with payload_count");
    }
    if (header.contains("optimizer_step")) {
      c.optimizer_step = header.at("optimizer_step").get<std::uint64_t>();
    }
    if (header.contains("rng")) {
      c.rng_states = header.at("rng").get<std::map<std::string, std::string>>();
    }
    if (header.contains("extra")) {
      c.extra = header.at("extra").get<std::map<std::string, std::string>>();
    }

    for (NamedTensor& nt : c.tensors) {
      in.read(reinterpret_cast<char*>(nt.tensor.data.data()),
              static_cast<std::streamsize>(nt.tensor.data.size() * sizeof(double)));
      if (!in) {
        throw CheckpointError("load_checkpoint: payload truncated at tensor '" + nt.name + "'");
      }
    }
    char extra_byte;
    if (in.read(&extra_byte, 1)) {
      throw CheckpointError("load_checkpoint: trailing bytes after payload");
    }
    const std::uint32_t expected_crc = header.at("payload_crc32").get<std::uint32_t>();
    if (payload_crc(c.tensors) != expected_crc) {
      throw CheckpointError("load_checkpoint: payload checksum mismatch (payload_crc32)");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("load_checkpoint: malformed header field: ") + e.what());
  }
  return c;
}

namespace {

template <typename Net>
Checkpoint from_net_impl(const Net& net, const char* kind) {
  Checkpoint c;
  c.model_kind = kind;
  c.mlp = net.mlp().config();
  c.d = net.dim();
  c.k = net.alphabet();
  const auto params = net.mlp().params();
  const auto names = net.mlp().param_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.tensors.push_back({names[i], *params[i]});
  }
  return c;
}

template <typename Net>
void restore_net_impl(const Checkpoint& c, Net& net, const char* kind) {
  if (c.model_kind != kind) {
    throw CheckpointError("restore_net: model_kind '" + c.model_kind + "' is not '" + kind +
                          "'");
  }
  if (c.d != net.dim() || c.k != net.alphabet()) {
    throw CheckpointError("restore_net: checkpoint D/K " + std::to_string(c.d) + "/" +
                          std::to_string(c.k) + " does not match net " +
                          std::to_string(net.dim()) + "/" + std::to_string(net.alphabet()));
  }
  const MlpConfig& want = net.mlp().config();
  if (c.mlp.input_width != want.input_width || c.mlp.hidden_width != want.hidden_width ||
      c.mlp.residual_layers != want.residual_layers ||
      c.mlp.output_width != want.output_width) {
    throw CheckpointError("restore_net: MlpConfig mismatch");
  }
  auto params = net.mlp().params();
  const auto names = net.mlp().param_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* stored = c.find(names[i]);
    if (stored == nullptr) {
      throw CheckpointError("restore_net: tensor '" + names[i] + "' missing from checkpoint");
    }
    if (stored->shape != params[i]->shape) {
      throw CheckpointError("restore_net: tensor '" + names[i] + "' has shape " +
                            shape_str(*stored) + ", expected " + shape_str(*params[i]));
    }
    *params[i] = *stored;
  }
}

}  // namespace

Checkpoint checkpoint_from_net(const ConditionalNet& net) {
  return from_net_impl(net, "conditional");
}

Checkpoint checkpoint_from_net(const MarginalNet& net) { return from_net_impl(net, "marginal"); }

void restore_net(const Checkpoint& c, ConditionalNet& net) {
  restore_net_impl(c, net, "conditional");
}

void restore_net(const Checkpoint& c, MarginalNet& net) { restore_net_impl(c, net, "marginal"); }

ConditionalNet conditional_net_from(const Checkpoint& c) {
  ConditionalNet net(c.d, c.k, c.mlp.hidden_width, c.mlp.residual_layers);
  restore_net(c, net);
  return net;
}

MarginalNet marginal_net_from(const Checkpoint& c) {
  MarginalNet net(c.d, c.k, c.mlp.hidden_width, c.mlp.residual_layers);
  restore_net(c, net);
  return net;
}

}  // namespace mam
