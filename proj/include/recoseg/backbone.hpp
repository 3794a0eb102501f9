#pragma once

#include "recoseg/nn.hpp"
#include "recoseg/tensor.hpp"
#include "recoseg/tokenizer.hpp"
#include "recoseg/weights.hpp"

#include <opencv2/core.hpp>

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace recoseg {

// Per-channel RGB statistics used by the image-text model's preprocessing.
inline constexpr std::array<float, 3> kPixelMean = {0.48145466f, 0.4578275f, 0.40821073f};
inline constexpr std::array<float, 3> kPixelStd = {0.26862954f, 0.26130258f, 0.27577711f};

struct VisionParams {
    Matrix patch_weight;  // [width, 3 * patch * patch]
    Vector class_embedding;
    Matrix positional;  // [native_grid² + 1, width]
    LayerNormParams ln_pre;
    std::vector<BlockParams> blocks;
    LayerNormParams ln_post;
    Matrix proj;  // [width, embed_dim]
};

struct TextParams {
    Matrix token_embedding;  // [vocab, width]
    Matrix positional;       // [context, width]
    std::vector<BlockParams> blocks;
    LayerNormParams ln_final;
    Matrix projection;  // [width, embed_dim]
};

/// Frozen image and text encoders. Immutable after `load_bundle`; share it
/// between threads through a const reference.
struct ModelBundle {
    ModelConfig config;
    VisionParams vision;
    TextParams text;
    float logit_scale = 1.0f;  // already exponentiated
    std::shared_ptr<const BpeTokenizer> tokenizer;
};

ModelBundle load_bundle(const std::filesystem::path& weight_dir);

/// Normalized 3×side×side pixel tensor plus the source image size.
struct ImageTensor {
    int side = 0;
    int original_height = 0;
    int original_width = 0;
    Tensor pixels;  // [3, side, side]
};

/// Square resize (aspect not preserved) and per-channel normalization.
/// Accepts CV_8UC3 (0..255) or CV_32FC3 (0..1) RGB.
ImageTensor preprocess(const cv::Mat& rgb, int side);

/// Tokens entering a transformer block, [CLS] first.
struct PatchFeatureSet {
    Matrix tokens;  // [HW + 1, width]
    GridDims grid;
    int image_height = 0;
    int image_width = 0;
    int next_block = 0;  // index of the block these tokens feed
};

struct TrunkOptions {
    bool interpolate_positions = true;
    int recovery_block = -1;  // block whose attention gets replaced; -1 = last
};

int resolve_recovery_block(const ModelBundle& bundle, int requested);

/// Positional table for a patch grid: the [CLS] slot is kept and the grid part
/// is bicubically resampled when the grid differs from the native one.
Matrix positional_table(const ModelBundle& bundle, GridDims grid);

PatchFeatureSet forward_trunk(const ImageTensor& image, const ModelBundle& bundle, const TrunkOptions& options = {});

/// Pre-norm and q/k/v projection of the block the features feed.
HeadProjections project_qkv(const PatchFeatureSet& features, const ModelBundle& bundle);

struct TextBank {
    std::vector<std::string> class_names;
    Matrix embeddings;  // [C, embed_dim], unit rows
    size_t template_count = 0;
};

/// Unit-norm joint-space embeddings for each text.
Matrix encode_texts(const std::vector<std::string>& texts, const ModelBundle& bundle);

/// Per class: encode every filled template, normalize each, average,
/// normalize again.
TextBank encode_text_bank(const std::vector<std::string>& class_names, const std::vector<std::string>& templates,
                          const ModelBundle& bundle);

}  // namespace recoseg
