#pragma once

#include "recoseg/classifier.hpp"
#include "recoseg/segmenter.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <string>
#include <vector>

namespace recoseg {

struct MaskPrompt {
    int mask_id = 0;
    std::string class_name;
    double confidence = 0.0;
    bool background = false;
    std::vector<std::array<int, 2>> fg_points;  // pixel x, y
    std::vector<std::array<int, 2>> bg_points;
};

struct PromptSet {
    int image_height = 0;
    int image_width = 0;
    std::vector<MaskPrompt> masks;

    nlohmann::json to_json() const;
};

/// Member patch indices of `mask_id`, raster order.
std::vector<int> mask_members(const MaskGrid& masks, int mask_id);

/// Up to 1 + `extra` member patches: the member closest to the mask's patch
/// centroid, then farthest-point picks among the remaining members.
std::vector<int> pick_prompt_patches(const std::vector<int>& members, GridDims grid, int extra);

/// Foreground points at the chosen patches' pixel centres; each mask's
/// background points are every other mask's foreground points.
PromptSet build_prompts(const MaskGrid& masks, const std::vector<MaskVote>& votes,
                        const std::vector<std::string>& class_names, int height, int width, int extra = 3);

}  // namespace recoseg
