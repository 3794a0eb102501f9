#pragma once

#include <opencv2/core.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace recoseg {

/// Integer label raster, row-major.
struct LabelImage {
    int height = 0;
    int width = 0;
    std::vector<int32_t> values;

    LabelImage() = default;
    LabelImage(int h, int w, int32_t fill = 0) : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

    int32_t at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    int32_t& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    bool operator==(const LabelImage&) const = default;
};

/// Decode an image file as 8-bit RGB (channel order R, G, B).
cv::Mat read_rgb_image(const std::filesystem::path& path);

/// Read a single-channel label PNG. Palette images yield their palette
/// indices, grayscale images their raw values (8 or 16 bit).
LabelImage read_label_png(const std::filesystem::path& path);

/// Write labels as an 8-bit palette PNG when every value fits in a byte,
/// otherwise as 16-bit grayscale.
void write_label_png(const std::filesystem::path& path, const LabelImage& labels);

/// Deterministic color table for label index i (the common VOC bit-spread scheme).
std::array<uint8_t, 3> label_color(int index);

}  // namespace recoseg
