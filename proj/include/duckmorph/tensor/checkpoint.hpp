#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "duckmorph/tensor/layers.hpp"

namespace duckmorph::tensor {

// On-disk layout: 8-byte little-endian header length N, N bytes of JSON
//   {"<name>": {"dtype": "F32", "shape": [...], "data_offsets": [begin, end]},
//    "__metadata__": {...}}
// then the concatenated little-endian float32 payload (offsets relative to
// the payload start).
struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const ParameterList<float>& params,
                     const nlohmann::json& metadata = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into existing parameters; names and shapes must
// match exactly.
void restore_parameters(const Checkpoint& ckpt, const ParameterList<float>& params);

} // namespace duckmorph::tensor
