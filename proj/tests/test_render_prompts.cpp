#include "recoseg/correlation.hpp"
#include "recoseg/prompts.hpp"
#include "recoseg/render.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace recoseg;

namespace {

MaskGrid mask_grid(std::vector<int> ids, GridDims grid) {
    MaskGrid m;
    m.num_masks = *std::max_element(ids.begin(), ids.end()) + 1;
    m.mask_ids = std::move(ids);
    m.grid = grid;
    return m;
}

std::vector<MaskVote> votes_for(const MaskGrid& m) {
    std::vector<MaskVote> v(m.num_masks);
    for (int i = 0; i < m.num_masks; ++i) {
        v[i].mask_id = i;
        v[i].label = i % 2;
        v[i].confidence = 0.9;
    }
    return v;
}

// Point-in-mask check against the rendered mask-id image.
void check_points_inside(const PromptSet& set, const MaskGrid& m) {
    std::vector<int> identity(m.num_masks);
    std::iota(identity.begin(), identity.end(), 0);
    const auto ids = render_labels(m, identity, set.image_height, set.image_width);
    for (const auto& mp : set.masks) {
        CHECK_FALSE(mp.fg_points.empty());
        for (const auto& [x, y] : mp.fg_points) {
            REQUIRE(x >= 0);
            REQUIRE(y >= 0);
            REQUIRE(x < set.image_width);
            REQUIRE(y < set.image_height);
            CHECK(ids.at(y, x) == mp.mask_id);
        }
    }
}

}  // namespace

TEST_CASE("correlation rows upsample from the patch grid to the image") {
    std::vector<float> row(196, 0.0f);
    row[3 * 14 + 5] = 1.0f;
    const auto up = upsample_row(row, {14, 14}, 224, 224);
    CHECK(up.rows() == 224);
    CHECK(up.cols() == 224);
    Eigen::Index r, c;
    up.maxCoeff(&r, &c);
    CHECK(r / 16 == 3);
    CHECK(c / 16 == 5);
    CHECK_THROWS_AS(upsample_row(row, {13, 14}, 224, 224), DataError);
}

TEST_CASE("the selected patch is the heatmap maximum under cosine correlation") {
    std::mt19937_64 rng(41);
    const GridDims grid{14, 14};
    const auto w = self_correlation(testing::random_qkv(rng, 2, 197, 8), grid).patch_block();
    for (int sel : {0, 17, 100, 195}) {
        std::vector<float> row(196);
        for (int j = 0; j < 196; ++j) row[j] = w(sel, j);
        const auto up = upsample_row(row, grid, 224, 224);
        Eigen::Index r, c;
        up.maxCoeff(&r, &c);
        CHECK(patch_row_of(static_cast<int>(r), 224, 14) == sel / 14);
        CHECK(patch_col_of(static_cast<int>(c), 224, 14) == sel % 14);
    }
}

TEST_CASE("heatmap overlay is deterministic and marks the patch") {
    cv::Mat rgb(32, 48, CV_8UC3, cv::Scalar(10, 200, 30));
    Matrix map = Matrix::Zero(32, 48);
    map(5, 7) = 1.0f;
    const auto centre = patch_center(1, 2, {4, 4}, 32, 48);
    const auto a = heatmap_overlay(rgb, map, centre);
    const auto b = heatmap_overlay(rgb, map, centre);
    CHECK(a.size() == rgb.size());
    CHECK(cv::norm(a, b, cv::NORM_INF) == 0);
    CHECK(a.at<cv::Vec3b>(centre) == cv::Vec3b(255, 0, 0));
    CHECK_THROWS_AS(heatmap_overlay(rgb, Matrix::Zero(3, 3), centre), DataError);
}

TEST_CASE("patch centres land in their patch") {
    for (auto [h, w, rows, cols] : std::vector<std::array<int, 4>>{{224, 224, 14, 14}, {375, 500, 14, 14}, {50, 61, 7, 9}}) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const auto p = patch_center(r, c, {rows, cols}, h, w);
                CHECK(patch_row_of(p.y, h, rows) == r);
                CHECK(patch_col_of(p.x, w, cols) == c);
            }
    }
    CHECK(patch_center(0, 0, {14, 14}, 224, 224) == cv::Point(7, 7));
    CHECK_THROWS_AS(patch_center(14, 0, {14, 14}, 224, 224), DataError);
}

TEST_CASE("cluster and score images") {
    const auto img = cluster_image({-1, 0, 1, 0}, {2, 2}, 4, 4);
    CHECK(img.at<cv::Vec3b>(0, 0) == cv::Vec3b(0, 0, 0));
    CHECK(img.at<cv::Vec3b>(0, 3) == cv::Vec3b(128, 0, 0));
    CHECK(img.at<cv::Vec3b>(3, 0) == cv::Vec3b(0, 128, 0));
    const auto s = score_image({-1.0, 0.0, 2.0, 0.5}, {2, 2}, 6, 6);
    CHECK(s.size() == cv::Size(6, 6));
    CHECK(s.at<cv::Vec3b>(5, 0) != s.at<cv::Vec3b>(0, 0));
}

TEST_CASE("two masks use each other's foreground points as background") {
    const auto m = mask_grid({0, 0, 1, 1, 0, 0, 1, 1}, {2, 4});
    const auto set = build_prompts(m, votes_for(m), {"dog", "cat"}, 40, 80);
    REQUIRE(set.masks.size() == 2);
    CHECK(set.masks[0].bg_points == set.masks[1].fg_points);
    CHECK(set.masks[1].bg_points == set.masks[0].fg_points);
    CHECK(set.masks[0].class_name == "dog");
    CHECK(set.masks[1].class_name == "cat");
    check_points_inside(set, m);

    const auto j = set.to_json();
    CHECK(j["masks"][0]["fg_points"][0].size() == 2);
    CHECK(j["masks"][1].contains("bg_points"));
}

TEST_CASE("a single mask has no background points") {
    const auto m = mask_grid(std::vector<int>(9, 0), {3, 3});
    const auto set = build_prompts(m, votes_for(m), {"dog"}, 30, 30);
    REQUIRE(set.masks.size() == 1);
    CHECK(set.masks[0].bg_points.empty());
    CHECK(set.masks[0].fg_points.size() == 4);
    // Centroid member first.
    CHECK(set.masks[0].fg_points[0] == std::array<int, 2>{14, 14});
}

TEST_CASE("prompt points respect k and stay inside their masks") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> pick(0, 4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> ids(7 * 9);
        for (auto& x : ids) x = pick(rng);
        for (int i = 0; i < 5; ++i) ids[i] = i;  // every id used
        const auto m = mask_grid(ids, {7, 9});
        const int k = trial % 5;
        const auto set = build_prompts(m, votes_for(m), {"a", "b"}, 70 + trial, 95, k);
        for (const auto& mp : set.masks) CHECK(static_cast<int>(mp.fg_points.size()) <= 1 + k);
        check_points_inside(set, m);
    }
    const auto m = mask_grid({0}, {1, 1});
    CHECK_THROWS_AS(build_prompts(m, {}, {}, 10, 10), DataError);
}

TEST_CASE("farthest-point picks spread out") {
    const std::vector<int> members{0, 1, 2, 3, 4};  // one row of five patches
    const auto picked = pick_prompt_patches(members, {1, 5}, 2);
    CHECK(picked == std::vector<int>{2, 0, 4});
    CHECK(pick_prompt_patches({7}, {3, 3}, 3) == std::vector<int>{7});
}
