#include "duckmorph/tensor/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace duckmorph::tensor {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterList<float>& params,
                     const nlohmann::json& metadata) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        if (header.contains(p.name)) throw ArgumentError("duplicate parameter name '" + p.name + "'");
        const std::uint64_t bytes = p.tensor.numel() * sizeof(float);
        header[p.name] = {{"dtype", "F32"},
                          {"shape", p.tensor.shape()},
                          {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    header["__metadata__"] = metadata;
    const std::string text = header.dump();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write checkpoint " + tmp);
        write_u64_le(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& p : params) {
            os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
                     static_cast<std::streamsize>(p.tensor.numel() * sizeof(float)));
        }
        if (!os) throw IoError("short write on checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw ParseError("checkpoint shorter than its length prefix", bytes.size());
    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i)
        header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    if (header_len > bytes.size() - 8) throw ParseError("checkpoint header runs past end of file", 8);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what(), 8 + e.byte);
    }
    const std::size_t payload = 8 + header_len;
    const std::size_t payload_size = bytes.size() - payload;

    Checkpoint ckpt;
    for (auto it = header.begin(); it != header.end(); ++it) {
        if (it.key() == "__metadata__") {
            ckpt.metadata = it.value();
            continue;
        }
        const auto& entry = it.value();
        if (entry.value("dtype", "") != "F32") {
            throw ParseError("tensor '" + it.key() + "' has unsupported dtype", 8);
        }
        const auto shape = entry.at("shape").get<Shape>();
        const auto offs = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
        if (offs.size() != 2 || offs[0] > offs[1] || offs[1] > payload_size ||
            offs[1] - offs[0] != shape_numel(shape) * sizeof(float)) {
            throw ParseError("tensor '" + it.key() + "' has inconsistent data offsets",
                             payload + (offs.empty() ? 0 : offs[0]));
        }
        std::vector<float> values(shape_numel(shape));
        std::memcpy(values.data(), bytes.data() + payload + offs[0], offs[1] - offs[0]);
        ckpt.tensors.emplace(it.key(), Tensor::from_data(shape, std::move(values)));
    }
    return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const ParameterList<float>& params) {
    for (auto p : params) {
        auto it = ckpt.tensors.find(p.name);
        if (it == ckpt.tensors.end()) throw StateError("checkpoint lacks parameter '" + p.name + "'");
        if (it->second.shape() != p.tensor.shape()) {
            throw StateError("checkpoint parameter '" + p.name + "' has shape " +
                             shape_str(it->second.shape()) + ", model expects " +
                             shape_str(p.tensor.shape()));
        }
        auto dst = p.tensor.mutable_data();
        auto src = it->second.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    if (ckpt.tensors.size() != params.size()) {
        throw StateError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                         " tensors, model has " + std::to_string(params.size()));
    }
}

} // namespace duckmorph::tensor
