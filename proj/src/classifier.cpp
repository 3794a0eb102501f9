#include "recoseg/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace recoseg {

PatchLogits patch_logits(const PatchEmbeddings& patches, const TextBank& bank, float logit_scale) {
    if (patches.rows.cols() != bank.embeddings.cols())
        throw DataError("embedding width mismatch: patches " + std::to_string(patches.rows.cols()) + ", text " +
                        std::to_string(bank.embeddings.cols()));
    PatchLogits out;
    out.values.noalias() = logit_scale * (bank.embeddings * patches.rows.transpose());
    return out;
}

std::vector<int> patch_argmax(const PatchLogits& logits) {
    const auto& v = logits.values;
    std::vector<int> out(v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < v.rows(); ++c)
            if (v(c, j) > v(best, j)) best = c;
        out[j] = static_cast<int>(best);
    }
    return out;
}

std::vector<MaskVote> vote(const MaskGrid& masks, const PatchLogits& logits) {
    const auto& v = logits.values;
    if (static_cast<Eigen::Index>(masks.mask_ids.size()) != v.cols())
        throw DataError("mask grid and logits cover different patch counts");
    const auto argmax = patch_argmax(logits);
    const auto classes = v.rows();

    // Column-wise softmax probabilities.
    Matrix prob(v.rows(), v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const float mx = v.col(j).maxCoeff();
        prob.col(j) = (v.col(j).array() - mx).exp();
        prob.col(j) /= prob.col(j).sum();
    }

    std::map<int, std::vector<int>> members;
    for (size_t j = 0; j < masks.mask_ids.size(); ++j) members[masks.mask_ids[j]].push_back(static_cast<int>(j));

    std::vector<MaskVote> out;
    for (const auto& [mask_id, patches] : members) {
        std::vector<int> tally(classes, 0);
        for (int j : patches) ++tally[argmax[j]];
        const int top = *std::max_element(tally.begin(), tally.end());
        int winner = -1;
        double winner_logit = 0.0;
        for (Eigen::Index c = 0; c < classes; ++c) {
            if (tally[c] != top) continue;
            double mean_logit = 0.0;
            for (int j : patches) mean_logit += v(c, j);
            mean_logit /= static_cast<double>(patches.size());
            if (winner < 0 || mean_logit > winner_logit) {
                winner = static_cast<int>(c);
                winner_logit = mean_logit;
            }
        }
        MaskVote mv;
        mv.mask_id = mask_id;
        mv.class_index = winner;
        mv.label = winner;
        mv.members = static_cast<int>(patches.size());
        double conf = 0.0;
        for (int j : patches) conf += prob(winner, j);
        mv.confidence = conf / static_cast<double>(patches.size());
        out.push_back(mv);
    }
    return out;
}

std::vector<MaskVote> background_gate(std::vector<MaskVote> votes, double tau, std::optional<int> background_label) {
    if (!background_label) throw DataError("background gate requested but the benchmark has no background class");
    for (auto& v : votes) {
        if (v.confidence < tau) {
            v.label = *background_label;
            v.background = true;
        }
    }
    return votes;
}

int patch_row_of(int y, int image_height, int grid_rows) {
    return static_cast<int>(static_cast<int64_t>(y) * grid_rows / image_height);
}

int patch_col_of(int x, int image_width, int grid_cols) {
    return static_cast<int>(static_cast<int64_t>(x) * grid_cols / image_width);
}

LabelImage upsample_patch_labels(const std::vector<int>& patch_labels, GridDims grid, int height, int width) {
    if (static_cast<int>(patch_labels.size()) != grid.patches()) throw DataError("label grid size mismatch");
    if (height <= 0 || width <= 0) throw DataError("output dimensions must be positive");
    LabelImage out(height, width);
    std::vector<int> cols(width);
    for (int x = 0; x < width; ++x) cols[x] = patch_col_of(x, width, grid.cols);
    for (int y = 0; y < height; ++y) {
        const int r = patch_row_of(y, height, grid.rows);
        for (int x = 0; x < width; ++x) out.at(y, x) = patch_labels[r * grid.cols + cols[x]];
    }
    return out;
}

LabelImage render_labels(const MaskGrid& masks, const std::vector<int>& mask_labels, int height, int width) {
    std::vector<int> per_patch(masks.mask_ids.size());
    for (size_t j = 0; j < per_patch.size(); ++j) {
        const int id = masks.mask_ids[j];
        if (id < 0 || id >= static_cast<int>(mask_labels.size())) throw DataError("mask id without a label");
        per_patch[j] = mask_labels[id];
    }
    return upsample_patch_labels(per_patch, masks.grid, height, width);
}

SegmentationMap render_map(const MaskGrid& masks, const std::vector<MaskVote>& votes,
                           const std::vector<std::string>& class_names, int height, int width) {
    std::vector<int> mask_labels(masks.num_masks, -1);
    for (const auto& v : votes) {
        if (v.mask_id < 0 || v.mask_id >= masks.num_masks) throw DataError("vote for an unknown mask");
        mask_labels[v.mask_id] = v.label;
    }
    SegmentationMap out;
    out.labels = render_labels(masks, mask_labels, height, width);
    out.class_names = class_names;
    out.masks = votes;
    return out;
}

}  // namespace recoseg
