#pragma once

#include "recoseg/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace recoseg {

/// Reader for the `.safetensors` container: an 8-byte little-endian header
/// length, a JSON header, then a flat byte buffer.
class SafetensorsFile {
  public:
    struct Entry {
        std::string dtype;  // F32, F16, BF16, F64
        std::vector<int64_t> shape;
        size_t begin = 0;
        size_t end = 0;
    };

    explicit SafetensorsFile(const std::filesystem::path& path);

    const std::map<std::string, Entry>& entries() const { return entries_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    /// Decode one entry to float32. F16/BF16 widen exactly.
    Tensor load(const std::string& name) const;

  private:
    std::filesystem::path path_;
    std::map<std::string, Entry> entries_;
    std::map<std::string, std::string> metadata_;
    std::vector<char> buffer_;
};

float half_to_float(uint16_t h);
float bfloat16_to_float(uint16_t b);

}  // namespace recoseg
