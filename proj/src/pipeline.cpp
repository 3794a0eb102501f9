#include "recoseg/pipeline.hpp"

#include <fstream>

namespace recoseg {

using json = nlohmann::json;

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::clip: return "clip";
        case Ablation::scr: return "scr";
        case Ablation::scr_pc: return "scr+pc";
        case Ablation::full: return "full";
    }
    return "full";
}

Ablation parse_ablation(const std::string& s) {
    if (s == "clip") return Ablation::clip;
    if (s == "scr") return Ablation::scr;
    if (s == "scr+pc") return Ablation::scr_pc;
    if (s == "full") return Ablation::full;
    throw DataError("unknown ablation '" + s + "' (expected clip, scr, scr+pc, full)");
}

std::string to_string(BackgroundMode m) {
    switch (m) {
        case BackgroundMode::none: return "none";
        case BackgroundMode::gate: return "gate";
        case BackgroundMode::text: return "text";
    }
    return "none";
}

BackgroundMode parse_background_mode(const std::string& s) {
    if (s == "none") return BackgroundMode::none;
    if (s == "gate") return BackgroundMode::gate;
    if (s == "text") return BackgroundMode::text;
    throw DataError("unknown background mode '" + s + "' (expected gate, text, none)");
}

json PipelineConfig::to_json() const {
    return {{"side", side},
            {"eps", dbscan.eps},
            {"min_samples", dbscan.min_samples},
            {"ablation", to_string(ablation)},
            {"denoise", ablation == Ablation::full},
            {"voting", ablation == Ablation::scr_pc || ablation == Ablation::full ? "mask-mode" : "per-patch"},
            {"background", to_string(background)},
            {"tau", tau},
            {"fast_correlation", fast_correlation},
            {"denoise_kind", to_string(denoise_kind)},
            {"recovery_block", recovery_block}};
}

TextClasses build_text_classes(const LabelSpace& labels, BackgroundMode mode, const std::vector<std::string>& templates,
                               const ModelBundle& bundle) {
    TextClasses out;
    out.labels = labels;
    if (mode != BackgroundMode::none && !labels.background_index)
        throw DataError("background mode '" + to_string(mode) + "' needs a benchmark with a background class");
    std::vector<std::string> names;
    for (int i = 0; i < static_cast<int>(labels.class_names.size()); ++i) {
        const bool is_bg = labels.background_index && *labels.background_index == i;
        if (is_bg && mode == BackgroundMode::gate) continue;
        names.push_back(is_bg && mode == BackgroundMode::text ? "background" : labels.class_names[i]);
        out.bank_to_label.push_back(i);
    }
    out.bank = encode_text_bank(names, templates, bundle);
    return out;
}

MaskGrid singleton_masks(GridDims grid) {
    MaskGrid m;
    m.grid = grid;
    m.num_masks = grid.patches();
    m.mask_ids.resize(grid.patches());
    for (int i = 0; i < grid.patches(); ++i) m.mask_ids[i] = i;
    return m;
}

PipelineResult run_pipeline(const cv::Mat& rgb, const ModelBundle& bundle, const TextClasses& classes,
                            const PipelineConfig& config, std::optional<std::pair<int, int>> output_size) {
    PipelineResult r;
    const auto image = preprocess(rgb, config.side);
    TrunkOptions trunk;
    trunk.recovery_block = config.recovery_block;
    r.features = forward_trunk(image, bundle, trunk);
    r.grid = r.features.grid;
    r.qkv = project_qkv(r.features, bundle);

    if (config.ablation == Ablation::clip) {
        r.embeddings = forward_with_attention(r.features, softmax_attention(r.qkv), bundle);
    } else {
        r.w_cosine = config.fast_correlation ? self_correlation_fast(r.qkv, r.grid) : self_correlation(r.qkv, r.grid);
        r.embeddings = forward_with_w(r.features, *r.w_cosine, bundle);
        r.w_denoise = config.denoise_kind == CorrelationKind::inner_product ? inner_product_correlation(r.qkv, r.grid)
                                                                            : *r.w_cosine;
    }
    r.logits = patch_logits(r.embeddings, classes.bank, bundle.logit_scale);

    switch (config.ablation) {
        case Ablation::clip:
        case Ablation::scr:
            r.masks = singleton_masks(r.grid);
            break;
        case Ablation::scr_pc:
            r.plain = segment(*r.w_cosine, config.dbscan);
            r.masks = r.plain->masks;
            break;
        case Ablation::full:
            r.denoised = denoise_and_segment(*r.w_cosine, *r.w_denoise, config.dbscan);
            r.masks = r.denoised->masks;
            break;
    }

    r.votes = vote(r.masks, r.logits);
    for (auto& v : r.votes) v.label = classes.bank_to_label.at(v.class_index);
    if (config.background == BackgroundMode::gate)
        r.votes = background_gate(std::move(r.votes), config.tau, classes.labels.background_index);

    const auto [h, w] = output_size.value_or(std::make_pair(rgb.rows, rgb.cols));
    r.map = render_map(r.masks, r.votes, classes.labels.class_names, h, w);
    return r;
}

void write_pipeline_dump(const std::filesystem::path& dir, const PipelineResult& r) {
    write_dump(dir, "q", tensor_from_stack(r.qkv.q));
    write_dump(dir, "k", tensor_from_stack(r.qkv.k));
    write_dump(dir, "v", tensor_from_stack(r.qkv.v));
    write_dump(dir, "trunk", r.features.tokens);
    if (r.w_cosine) write_dump(dir, "w_cosine", r.w_cosine->values);
    if (r.w_denoise) write_dump(dir, "w_inner_product", r.w_denoise->values);
    write_dump(dir, "patch_embeddings", r.embeddings.rows);
    write_dump(dir, "logits", r.logits.values);
    auto dump_labels = [&](const std::string& name, const std::vector<int>& labels) {
        Tensor t({static_cast<int64_t>(labels.size())});
        for (size_t i = 0; i < labels.size(); ++i) t.data[i] = static_cast<float>(labels[i]);
        write_dump(dir, name, t);
    };
    if (r.plain) {
        dump_labels("cluster_labels", r.plain->clusters.labels);
        write_dump(dir, "prototypes", r.plain->prototypes.prototypes);
    }
    if (r.denoised) {
        dump_labels("denoised_cluster_labels", r.denoised->clusters.labels);
        write_dump(dir, "denoised_prototypes", r.denoised->prototypes.prototypes);
        Tensor scores({static_cast<int64_t>(r.denoised->report.scores.size())});
        for (size_t i = 0; i < scores.data.size(); ++i) scores.data[i] = static_cast<float>(r.denoised->report.scores[i]);
        write_dump(dir, "global_patch_scores", scores);
    }
    dump_labels("mask_ids", r.masks.mask_ids);
    json grid{{"grid", {r.grid.rows, r.grid.cols}}};
    std::ofstream(dir / "grid.json") << grid.dump() << '\n';
}

json segmentation_sidecar(const PipelineResult& r, const TextClasses& classes, const PipelineConfig& config) {
    json masks = json::array();
    for (const auto& v : r.votes) {
        masks.push_back({{"mask_id", v.mask_id},
                         {"label", v.label},
                         {"class", v.label >= 0 && v.label < static_cast<int>(classes.labels.class_names.size())
                                       ? classes.labels.class_names[v.label]
                                       : ""},
                         {"confidence", v.confidence},
                         {"patches", v.members},
                         {"background", v.background}});
    }
    json out{{"schema_version", 1},
             {"classes", classes.labels.class_names},
             {"image_size", {r.map.labels.height, r.map.labels.width}},
             {"grid", {r.grid.rows, r.grid.cols}},
             {"masks", masks},
             {"config", config.to_json()}};
    if (classes.labels.background_index) out["background_index"] = *classes.labels.background_index;
    if (r.denoised) {
        out["flagged_patches"] = r.denoised->report.flagged;
        out["denoise_fell_back"] = r.denoised->fell_back;
    }
    return out;
}

}  // namespace recoseg
