#include "recoseg/safetensors.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace recoseg {

float half_to_float(uint16_t h) {
    const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
    uint32_t exponent = (h >> 10) & 0x1fu;
    uint32_t mantissa = h & 0x3ffu;
    uint32_t bits;
    if (exponent == 0) {
        if (mantissa == 0) {
            bits = sign;
        } else {
            // subnormal: renormalize
            exponent = 127 - 15 + 1;
            while ((mantissa & 0x400u) == 0) {
                mantissa <<= 1;
                --exponent;
            }
            mantissa &= 0x3ffu;
            bits = sign | (exponent << 23) | (mantissa << 13);
        }
    } else if (exponent == 0x1f) {
        bits = sign | 0x7f800000u | (mantissa << 13);
    } else {
        bits = sign | ((exponent + 127 - 15) << 23) | (mantissa << 13);
    }
    return std::bit_cast<float>(bits);
}

float bfloat16_to_float(uint16_t b) { return std::bit_cast<float>(static_cast<uint32_t>(b) << 16); }

namespace {

size_t dtype_size(const std::string& dtype) {
    if (dtype == "F32") return 4;
    if (dtype == "F16" || dtype == "BF16") return 2;
    if (dtype == "F64") return 8;
    throw ModelError("unsupported safetensors dtype " + dtype);
}

}  // namespace

SafetensorsFile::SafetensorsFile(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    const auto size = static_cast<size_t>(in.tellg());
    in.seekg(0);
    uint64_t header_len = 0;
    if (size < 8 || !in.read(reinterpret_cast<char*>(&header_len), 8) || header_len > size - 8)
        throw ModelError(path.string() + ": not a safetensors file");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    buffer_.resize(size - 8 - header_len);
    in.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!in) throw ModelError(path.string() + ": truncated safetensors file");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(path.string() + ": bad header: " + e.what());
    }
    for (auto& [name, value] : j.items()) {
        if (name == "__metadata__") {
            for (auto& [k, v] : value.items()) metadata_[k] = v.get<std::string>();
            continue;
        }
        Entry e;
        e.dtype = value.at("dtype").get<std::string>();
        e.shape = value.at("shape").get<std::vector<int64_t>>();
        auto offsets = value.at("data_offsets").get<std::vector<size_t>>();
        if (offsets.size() != 2 || offsets[1] < offsets[0] || offsets[1] > buffer_.size())
            throw ModelError(path.string() + ": bad offsets for " + name);
        e.begin = offsets[0];
        e.end = offsets[1];
        if ((e.end - e.begin) != static_cast<size_t>(shape_numel(e.shape)) * dtype_size(e.dtype))
            throw ModelError(path.string() + ": byte size mismatch for " + name);
        entries_.emplace(name, std::move(e));
    }
}

Tensor SafetensorsFile::load(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ModelError(path_.string() + ": missing tensor " + name);
    const auto& e = it->second;
    Tensor t(e.shape);
    const char* src = buffer_.data() + e.begin;
    const auto n = static_cast<size_t>(t.numel());
    if (e.dtype == "F32") {
        std::memcpy(t.data.data(), src, n * 4);
    } else if (e.dtype == "F64") {
        for (size_t i = 0; i < n; ++i) {
            double d;
            std::memcpy(&d, src + 8 * i, 8);
            t.data[i] = static_cast<float>(d);
        }
    } else {
        const bool bf16 = e.dtype == "BF16";
        for (size_t i = 0; i < n; ++i) {
            uint16_t h;
            std::memcpy(&h, src + 2 * i, 2);
            t.data[i] = bf16 ? bfloat16_to_float(h) : half_to_float(h);
        }
    }
    return t;
}

}  // namespace recoseg
