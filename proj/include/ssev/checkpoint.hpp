#pragma once

#include <string>

#include <json.hpp>

#include "ssev/nn.hpp"

namespace ssev::nn {

// Checkpoint layout: magic "SSEV", u32 format version, u32 header length,
// UTF-8 JSON header {module, arch, params:[{name, shape}...]}, then the
// parameter values as little-endian f64 blobs in manifest order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const std::string& path, const std::string& module_name,
                     const nlohmann::json& arch, const ParamStore& store);

struct Checkpoint {
  std::string module_name;
  nlohmann::json arch;
  ParamStore store;  // Adam moments zeroed; values restored
};

Checkpoint checkpoint_load(const std::string& path);

}  // namespace ssev::nn
