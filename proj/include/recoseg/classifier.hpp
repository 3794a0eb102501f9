#pragma once

#include "recoseg/backbone.hpp"
#include "recoseg/correlation.hpp"
#include "recoseg/image_io.hpp"
#include "recoseg/segmenter.hpp"

#include <optional>
#include <string>
#include <vector>

namespace recoseg {

/// Logit-scaled cosine between every class text and every patch, [C, HW].
struct PatchLogits {
    Matrix values;
};

PatchLogits patch_logits(const PatchEmbeddings& patches, const TextBank& bank, float logit_scale);

/// Argmax class per patch (ties to the lower class index).
std::vector<int> patch_argmax(const PatchLogits& logits);

struct MaskVote {
    int mask_id = 0;
    int class_index = 0;      // winning text-bank row
    int label = 0;            // output label; starts equal to class_index
    double confidence = 0.0;  // mean softmax probability of the winning class
    int members = 0;
    bool background = false;
};

/// Each member patch votes for its argmax class; the mask takes the mode.
/// Ties go to the class with the higher mean logit over the mask, then to the
/// lower class index. Unused mask ids are skipped.
std::vector<MaskVote> vote(const MaskGrid& masks, const PatchLogits& logits);

/// Relabel masks whose confidence is below `tau` as background. Throws when
/// the benchmark declares no background label.
std::vector<MaskVote> background_gate(std::vector<MaskVote> votes, double tau, std::optional<int> background_label);

struct SegmentationMap {
    LabelImage labels;
    std::vector<std::string> class_names;
    std::vector<MaskVote> masks;
};

/// Nearest-neighbour patch -> pixel mapping used for rendering and prompts.
int patch_row_of(int y, int image_height, int grid_rows);
int patch_col_of(int x, int image_width, int grid_cols);

/// Paint each patch with its mask's label and upsample to `height`×`width`
/// by nearest neighbour. `mask_labels[mask_id]` gives the label.
LabelImage render_labels(const MaskGrid& masks, const std::vector<int>& mask_labels, int height, int width);

/// render_labels driven by the votes' `label` fields.
SegmentationMap render_map(const MaskGrid& masks, const std::vector<MaskVote>& votes,
                           const std::vector<std::string>& class_names, int height, int width);

/// Upsample a per-patch label grid (raster order) to pixels.
LabelImage upsample_patch_labels(const std::vector<int>& patch_labels, GridDims grid, int height, int width);

}  // namespace recoseg
