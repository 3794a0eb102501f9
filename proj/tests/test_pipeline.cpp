#include "recoseg/pipeline.hpp"
#include "recoseg/templates.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace recoseg;

namespace {

cv::Mat test_image(int h, int w, int seed) {
    cv::Mat img(h, w, CV_8UC3);
    cv::RNG rng(seed);
    rng.fill(img, cv::RNG::UNIFORM, 0, 255);
    return img;
}

const TextClasses& classes() {
    static const TextClasses c = build_text_classes({{"dog", "cat", "grass"}, std::nullopt}, BackgroundMode::none,
                                                    default_templates(), testing::tiny_bundle());
    return c;
}

PipelineConfig config(int side, Ablation ablation = Ablation::full) {
    PipelineConfig c;
    c.side = side;
    c.ablation = ablation;
    return c;
}

}  // namespace

TEST_CASE("full pipeline produces a map at the source size") {
    const auto img = test_image(50, 70, 1);
    const auto r = run_pipeline(img, testing::tiny_bundle(), classes(), config(64));
    CHECK(r.grid.rows == 4);
    CHECK(r.grid.cols == 4);
    CHECK(r.map.labels.height == 50);
    CHECK(r.map.labels.width == 70);
    CHECK(r.denoised.has_value());
    CHECK(r.w_cosine->values.rows() == 17);
    CHECK(r.w_denoise->kind == CorrelationKind::inner_product);
    for (int v : r.map.labels.values) {
        CHECK(v >= 0);
        CHECK(v < 3);
    }
    // Every mask label is constant on its patches.
    std::map<int, int> label_of_mask;
    for (const auto& v : r.votes) label_of_mask[v.mask_id] = v.label;
    const auto again = render_labels(r.masks, [&] {
        std::vector<int> l(r.masks.num_masks, -1);
        for (auto [m, lab] : label_of_mask) l[m] = lab;
        return l;
    }(), 50, 70);
    CHECK(again == r.map.labels);
}

TEST_CASE("larger side gives a proportionally larger grid") {
    const auto r = run_pipeline(test_image(30, 30, 2), testing::tiny_bundle(), classes(), config(336));
    CHECK(r.grid.rows == 21);
    CHECK(r.grid.cols == 21);
    CHECK(r.w_cosine->values.rows() == 21 * 21 + 1);
}

TEST_CASE("ablation stages") {
    const auto img = test_image(64, 64, 3);
    const auto& b = testing::tiny_bundle();
    const auto clip = run_pipeline(img, b, classes(), config(96, Ablation::clip));
    CHECK_FALSE(clip.w_cosine.has_value());
    CHECK(clip.masks.num_masks == 36);

    const auto scr = run_pipeline(img, b, classes(), config(96, Ablation::scr));
    CHECK(scr.w_cosine.has_value());
    CHECK(scr.masks.num_masks == 36);
    CHECK_FALSE(scr.plain.has_value());
    // Per-patch votes equal the per-patch argmax.
    const auto argmax = patch_argmax(scr.logits);
    for (const auto& v : scr.votes) CHECK(v.class_index == argmax[v.mask_id]);

    const auto pc = run_pipeline(img, b, classes(), config(96, Ablation::scr_pc));
    CHECK(pc.plain.has_value());
    CHECK_FALSE(pc.denoised.has_value());
    CHECK(pc.masks.mask_ids == pc.plain->masks.mask_ids);

    // Recovery changes the embeddings relative to the unmodified model.
    CHECK(testing::max_abs_diff(clip.embeddings.rows, scr.embeddings.rows) > 1e-3);
}

TEST_CASE("skipping denoising keeps the correlation, and the masks when nothing is flagged") {
    const auto img = test_image(64, 64, 4);
    const auto& b = testing::tiny_bundle();
    const auto full = run_pipeline(img, b, classes(), config(96));
    const auto plain = run_pipeline(img, b, classes(), config(96, Ablation::scr_pc));
    CHECK(testing::max_abs_diff(full.w_cosine->values, plain.w_cosine->values) == 0.0);
    if (full.denoised->report.flagged.empty()) CHECK(full.masks.mask_ids == plain.masks.mask_ids);
}

TEST_CASE("background modes") {
    const LabelSpace space{{"background", "dog", "cat"}, 0};
    const auto& b = testing::tiny_bundle();
    const auto gate = build_text_classes(space, BackgroundMode::gate, {"a {}."}, b);
    CHECK(gate.bank.embeddings.rows() == 2);
    CHECK(gate.bank_to_label == std::vector<int>{1, 2});
    const auto text = build_text_classes(space, BackgroundMode::text, {"a {}."}, b);
    CHECK(text.bank.embeddings.rows() == 3);
    CHECK(text.bank.class_names[0] == "background");

    CHECK_THROWS_AS(build_text_classes({{"dog", "cat"}, std::nullopt}, BackgroundMode::gate, {"a {}."}, b), DataError);

    auto cfg = config(64);
    cfg.background = BackgroundMode::gate;
    cfg.tau = 1.01;  // every mask falls under the gate
    const auto r = run_pipeline(test_image(20, 20, 5), b, gate, cfg);
    for (int v : r.map.labels.values) CHECK(v == 0);
    for (const auto& v : r.votes) CHECK(v.background);
}

TEST_CASE("dumped tensors reproduce the segmentation") {
    const auto img = test_image(48, 48, 6);
    const auto r = run_pipeline(img, testing::tiny_bundle(), classes(), config(64));
    const auto dir = testing::scratch_dir("pipeline_dump");
    write_pipeline_dump(dir, r);

    const auto w = read_dump(dir, "w_cosine");
    CHECK(w.shape == std::vector<int64_t>{17, 17});
    for (int i = 0; i < 17; ++i) CHECK(std::abs(w.data[i * 17 + i] - 1.0f) < 1e-6f);
    CHECK(read_dump(dir, "q").shape == std::vector<int64_t>{4, 17, 16});
    CHECK(read_dump(dir, "logits").shape == std::vector<int64_t>{3, 16});

    const CorrelationMatrix wc{matrix_from_tensor(w), CorrelationKind::cosine, r.grid};
    const CorrelationMatrix wi{matrix_from_tensor(read_dump(dir, "w_inner_product")), CorrelationKind::inner_product, r.grid};
    const auto again = denoise_and_segment(wc, wi);
    CHECK(again.masks.mask_ids == r.masks.mask_ids);
    const auto labels = read_dump(dir, "denoised_cluster_labels");
    for (size_t i = 0; i < labels.data.size(); ++i) CHECK(labels.data[i] == static_cast<float>(again.clusters.labels[i]));
}

TEST_CASE("identical inputs give identical outputs") {
    const auto img = test_image(40, 60, 7);
    const auto a = run_pipeline(img, testing::tiny_bundle(), classes(), config(96));
    const auto b = run_pipeline(img, testing::tiny_bundle(), classes(), config(96));
    CHECK(a.map.labels == b.map.labels);
    CHECK(segmentation_sidecar(a, classes(), config(96)) == segmentation_sidecar(b, classes(), config(96)));
}

TEST_CASE("ablation and background names parse") {
    CHECK(parse_ablation("scr+pc") == Ablation::scr_pc);
    CHECK(to_string(Ablation::clip) == "clip");
    CHECK_THROWS_AS(parse_ablation("crf"), DataError);
    CHECK(parse_background_mode("gate") == BackgroundMode::gate);
    CHECK_THROWS_AS(parse_background_mode("maybe"), DataError);
}
