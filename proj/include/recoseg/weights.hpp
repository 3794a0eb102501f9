#pragma once

#include "recoseg/tensor.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace recoseg {

enum class Activation { quick_gelu, gelu };

struct ModelConfig {
    int vision_width = 768;
    int vision_layers = 12;
    int vision_heads = 12;
    int vision_mlp_width = 3072;
    int patch_size = 16;
    int native_grid = 14;  // positional table covers native_grid x native_grid patches
    int text_width = 512;
    int text_layers = 12;
    int text_heads = 8;
    int text_mlp_width = 2048;
    int context_length = 77;
    int vocab_size = 49408;
    int embed_dim = 512;
    Activation activation = Activation::quick_gelu;

    int native_side() const { return native_grid * patch_size; }
    int vision_head_dim() const { return vision_width / vision_heads; }
};

/// Every parameter name the bundle expects, with its shape.
std::map<std::string, std::vector<int64_t>> expected_schema(const ModelConfig& config);

struct ConvertOptions {
    std::optional<int> vision_heads;  // default: width / 64
    std::optional<int> text_heads;
    Activation activation = Activation::quick_gelu;
    std::filesystem::path vocab_path;  // copied next to the tensors; empty = packaged default
};

struct ConvertSummary {
    ModelConfig config;
    size_t tensor_count = 0;
    int64_t parameter_count = 0;
};

/// Convert a `.safetensors` image-text checkpoint (open_clip naming) into the
/// neutral weight directory: one `<name>.bin` per tensor plus `manifest.json`.
ConvertSummary convert_checkpoint(const std::filesystem::path& archive, const std::filesystem::path& out_dir,
                                  const ConvertOptions& options = {});

/// Read-only view over a converted weight directory.
class WeightStore {
  public:
    explicit WeightStore(std::filesystem::path dir);

    const ModelConfig& config() const { return config_; }
    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path vocab_path() const;
    const std::map<std::string, std::vector<int64_t>>& shapes() const { return shapes_; }

    Tensor load(const std::string& name) const;
    Matrix load_matrix(const std::string& name) const;
    Vector load_vector(const std::string& name) const;

  private:
    std::filesystem::path dir_;
    ModelConfig config_;
    std::string vocab_file_;
    std::map<std::string, std::vector<int64_t>> shapes_;
};

std::filesystem::path default_vocab_path();

}  // namespace recoseg
