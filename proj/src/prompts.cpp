#include "recoseg/prompts.hpp"

#include "recoseg/render.hpp"

#include <limits>

namespace recoseg {

using json = nlohmann::json;

json PromptSet::to_json() const {
    json list = json::array();
    for (const auto& m : masks) {
        list.push_back({{"mask_id", m.mask_id},
                        {"class", m.class_name},
                        {"confidence", m.confidence},
                        {"background", m.background},
                        {"fg_points", m.fg_points},
                        {"bg_points", m.bg_points}});
    }
    return {{"image_size", {image_height, image_width}}, {"masks", list}};
}

std::vector<int> mask_members(const MaskGrid& masks, int mask_id) {
    std::vector<int> out;
    for (size_t j = 0; j < masks.mask_ids.size(); ++j)
        if (masks.mask_ids[j] == mask_id) out.push_back(static_cast<int>(j));
    return out;
}

std::vector<int> pick_prompt_patches(const std::vector<int>& members, GridDims grid, int extra) {
    if (members.empty()) return {};
    auto rc = [&](int j) { return std::pair<double, double>(j / grid.cols, j % grid.cols); };
    double cr = 0, cc = 0;
    for (int j : members) {
        cr += rc(j).first;
        cc += rc(j).second;
    }
    cr /= static_cast<double>(members.size());
    cc /= static_cast<double>(members.size());

    auto dist2 = [&](int j, double r, double c) {
        const auto [jr, jc] = rc(j);
        return (jr - r) * (jr - r) + (jc - c) * (jc - c);
    };
    std::vector<int> picked;
    double best = std::numeric_limits<double>::infinity();
    int first = members.front();
    for (int j : members) {
        const double d = dist2(j, cr, cc);
        if (d < best) {
            best = d;
            first = j;
        }
    }
    picked.push_back(first);

    std::vector<double> nearest(members.size());
    for (size_t i = 0; i < members.size(); ++i) nearest[i] = dist2(members[i], rc(first).first, rc(first).second);
    while (static_cast<int>(picked.size()) < 1 + extra) {
        size_t arg = 0;
        for (size_t i = 1; i < members.size(); ++i)
            if (nearest[i] > nearest[arg]) arg = i;
        if (nearest[arg] <= 0) break;
        const int j = members[arg];
        picked.push_back(j);
        for (size_t i = 0; i < members.size(); ++i)
            nearest[i] = std::min(nearest[i], dist2(members[i], rc(j).first, rc(j).second));
    }
    return picked;
}

PromptSet build_prompts(const MaskGrid& masks, const std::vector<MaskVote>& votes,
                        const std::vector<std::string>& class_names, int height, int width, int extra) {
    if (votes.empty()) throw DataError("no masks to export");
    if (extra < 0) throw DataError("point count must be non-negative");
    PromptSet set;
    set.image_height = height;
    set.image_width = width;
    for (const auto& v : votes) {
        MaskPrompt m;
        m.mask_id = v.mask_id;
        m.class_name = v.label >= 0 && v.label < static_cast<int>(class_names.size()) ? class_names[v.label] : "";
        m.confidence = v.confidence;
        m.background = v.background;
        for (int j : pick_prompt_patches(mask_members(masks, v.mask_id), masks.grid, extra)) {
            const auto p = patch_center(j / masks.grid.cols, j % masks.grid.cols, masks.grid, height, width);
            m.fg_points.push_back({p.x, p.y});
        }
        set.masks.push_back(std::move(m));
    }
    for (size_t a = 0; a < set.masks.size(); ++a)
        for (size_t b = 0; b < set.masks.size(); ++b)
            if (a != b)
                set.masks[a].bg_points.insert(set.masks[a].bg_points.end(), set.masks[b].fg_points.begin(),
                                              set.masks[b].fg_points.end());
    return set;
}

}  // namespace recoseg
