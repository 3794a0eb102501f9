#pragma once

#include "recoseg/backbone.hpp"
#include "recoseg/classifier.hpp"
#include "recoseg/correlation.hpp"
#include "recoseg/segmenter.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace recoseg {

/// Which stages run. `clip` is the unmodified model with per-patch argmax,
/// `scr` adds correlation recovery, `scr_pc` adds patch clustering, `full`
/// adds global-patch denoising.
enum class Ablation { clip, scr, scr_pc, full };
enum class BackgroundMode { none, gate, text };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);
std::string to_string(BackgroundMode m);
BackgroundMode parse_background_mode(const std::string& s);

struct PipelineConfig {
    int side = 224;
    DbscanParams dbscan;
    Ablation ablation = Ablation::full;
    BackgroundMode background = BackgroundMode::none;
    double tau = 0.5;
    bool fast_correlation = false;
    CorrelationKind denoise_kind = CorrelationKind::inner_product;
    int recovery_block = -1;

    nlohmann::json to_json() const;
};

/// Output label space of a run.
struct LabelSpace {
    std::vector<std::string> class_names;
    std::optional<int> background_index;
};

/// Text bank plus the output label of each bank row.
struct TextClasses {
    TextBank bank;
    std::vector<int> bank_to_label;
    LabelSpace labels;
};

/// `gate` leaves the background class out of the bank; `text` encodes it as the
/// word "background"; `none` encodes every class name as given.
TextClasses build_text_classes(const LabelSpace& labels, BackgroundMode mode, const std::vector<std::string>& templates,
                               const ModelBundle& bundle);

/// Every intermediate of one image.
struct PipelineResult {
    GridDims grid;
    PatchFeatureSet features;
    HeadProjections qkv;
    std::optional<CorrelationMatrix> w_cosine;
    std::optional<CorrelationMatrix> w_denoise;
    PatchEmbeddings embeddings;
    PatchLogits logits;
    std::optional<Segmentation> plain;        // clustering without denoising
    std::optional<DenoisedSegmentation> denoised;
    MaskGrid masks;  // masks used for voting (one per patch for clip/scr)
    std::vector<MaskVote> votes;
    SegmentationMap map;
};

/// Each patch in its own mask.
MaskGrid singleton_masks(GridDims grid);

/// Run the configured stages. The map is rendered at `output_height`×`output_width`,
/// defaulting to the source image size.
PipelineResult run_pipeline(const cv::Mat& rgb, const ModelBundle& bundle, const TextClasses& classes,
                            const PipelineConfig& config, std::optional<std::pair<int, int>> output_size = std::nullopt);

/// Write q/k/v, both correlation matrices, embeddings, cluster labels,
/// prototypes and logits in the tensor dump format.
void write_pipeline_dump(const std::filesystem::path& dir, const PipelineResult& result);

/// Sidecar describing a segmentation: class names, per-mask votes, grid, config.
nlohmann::json segmentation_sidecar(const PipelineResult& result, const TextClasses& classes, const PipelineConfig& config);

}  // namespace recoseg
