#include "recoseg/image_io.hpp"

#include "recoseg/tensor.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace recoseg {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

cv::Mat read_rgb_image(const std::filesystem::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DataError("cannot read image: " + path.string());
    if (raw.depth() != CV_8U) throw DataError("expected an 8-bit image: " + path.string());
    if (raw.channels() != 3 && raw.channels() != 4)
        throw DataError("expected an RGB image, got " + std::to_string(raw.channels()) + " channel(s): " + path.string());
    cv::Mat rgb;
    cv::cvtColor(raw, rgb, raw.channels() == 4 ? cv::COLOR_BGRA2RGB : cv::COLOR_BGR2RGB);
    return rgb;
}

LabelImage read_label_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw DataError("cannot open label image: " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw DataError("label image is not a PNG: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    // Everything libpng may longjmp across is declared before setjmp.
    LabelImage out;
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    bool bad_type = false;
    int depth = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt label image: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
        bad_type = true;
    } else {
        if (depth < 8) png_set_packing(png);
        if (depth == 16) png_set_swap(png);
        png_read_update_info(png, info);
        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        const auto rowbytes = png_get_rowbytes(png, info);
        buffer.resize(rowbytes * out.height);
        rows.resize(out.height);
        for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * y;
        png_read_image(png, rows.data());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (bad_type) throw DataError("label image must be palette or grayscale: " + path.string());

    out.values.resize(static_cast<size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            if (depth == 16) {
                uint16_t s;
                std::memcpy(&s, rows[y] + 2 * x, 2);
                out.at(y, x) = s;
            } else {
                out.at(y, x) = rows[y][x];
            }
        }
    }
    return out;
}

std::array<uint8_t, 3> label_color(int index) {
    std::array<uint8_t, 3> rgb{0, 0, 0};
    int c = index;
    for (int bit = 7; bit >= 0 && c; --bit) {
        rgb[0] |= static_cast<uint8_t>(((c >> 0) & 1) << bit);
        rgb[1] |= static_cast<uint8_t>(((c >> 1) & 1) << bit);
        rgb[2] |= static_cast<uint8_t>(((c >> 2) & 1) << bit);
        c >>= 3;
    }
    return rgb;
}

void write_label_png(const std::filesystem::path& path, const LabelImage& labels) {
    const auto [lo, hi] = std::minmax_element(labels.values.begin(), labels.values.end());
    if (!labels.values.empty() && *lo < 0) throw DataError("negative label value cannot be written");
    const bool wide = !labels.values.empty() && *hi > 255;
    const int bytes = wide ? 2 : 1;

    std::vector<png_byte> pixels(labels.values.size() * bytes);
    for (size_t i = 0; i < labels.values.size(); ++i) {
        if (wide) {
            const auto s = static_cast<uint16_t>(labels.values[i]);
            std::memcpy(pixels.data() + 2 * i, &s, 2);
        } else {
            pixels[i] = static_cast<png_byte>(labels.values[i]);
        }
    }
    std::vector<png_color> palette(256);
    for (int i = 0; i < 256; ++i) {
        const auto c = label_color(i);
        palette[i] = {c[0], c[1], c[2]};
    }

    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw DataError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("failed writing PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, labels.width, labels.height, wide ? 16 : 8, wide ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_PALETTE,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (!wide) png_set_PLTE(png, info, palette.data(), 256);
    png_write_info(png, info);
    if (wide) png_set_swap(png);
    for (int y = 0; y < labels.height; ++y)
        png_write_row(png, pixels.data() + static_cast<size_t>(y) * labels.width * bytes);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace recoseg
