#include "recoseg/classifier.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace recoseg;

namespace {

PatchLogits logits(std::initializer_list<std::initializer_list<float>> rows) {
    PatchLogits l;
    l.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (float v : row) l.values(r, c++) = v;
        ++r;
    }
    return l;
}

MaskGrid masks(std::vector<int> ids, GridDims grid) {
    MaskGrid m;
    m.num_masks = *std::max_element(ids.begin(), ids.end()) + 1;
    m.mask_ids = std::move(ids);
    m.grid = grid;
    return m;
}

}  // namespace

TEST_CASE("patch logits are scaled cosine similarities") {
    PatchEmbeddings e;
    e.rows.resize(2, 2);
    e.rows << 1, 0, 0, 1;
    TextBank bank;
    bank.embeddings.resize(3, 2);
    bank.embeddings << 1, 0, 0.6f, 0.8f, 0, -1;
    const auto l = patch_logits(e, bank, 100.0f);
    CHECK(l.values.rows() == 3);
    CHECK(l.values(1, 1) == doctest::Approx(80.0));
    CHECK(l.values(2, 1) == doctest::Approx(-100.0));
    CHECK(patch_argmax(l) == std::vector<int>{0, 1});

    bank.embeddings.resize(1, 3);
    CHECK_THROWS_AS(patch_logits(e, bank, 1.0f), DataError);
}

TEST_CASE("a mask takes the most frequent patch class") {
    // Patches 0..3 argmax: 0, 1, 1, 2.
    const auto l = logits({{5, 0, 0, 0}, {0, 5, 5, 0}, {0, 0, 0, 5}});
    const auto v = vote(masks({0, 0, 0, 0}, {2, 2}), l);
    REQUIRE(v.size() == 1);
    CHECK(v[0].class_index == 1);
    CHECK(v[0].members == 4);
}

TEST_CASE("vote ties go to the higher mean logit, then the lower index") {
    // argmax: 0, 1 -> tie; mean logit class 1 higher.
    auto v = vote(masks({0, 0}, {1, 2}), logits({{3, 0}, {2.5f, 4}}));
    CHECK(v[0].class_index == 1);
    // Exact tie on counts and means: lower index.
    v = vote(masks({0, 0}, {1, 2}), logits({{2, 1}, {1, 2}}));
    CHECK(v[0].class_index == 0);
}

TEST_CASE("confidence is the mean softmax probability of the winner") {
    const auto v = vote(masks({0, 0}, {1, 2}), logits({{0, 0}, {std::log(3.0f), 0}}));
    // Patch 0: p(1) = 3/4, patch 1: tie 1/2 -> argmax 0 for patch 1; counts 1/1,
    // mean logits favour class 1.
    REQUIRE(v.size() == 1);
    CHECK(v[0].class_index == 1);
    CHECK(v[0].confidence == doctest::Approx((0.75 + 0.5) / 2));
}

TEST_CASE("votes cover masks in id order and skip unused ids") {
    MaskGrid m;
    m.mask_ids = {2, 0, 2};
    m.num_masks = 3;
    m.grid = {1, 3};
    const auto v = vote(m, logits({{1, 0, 1}, {0, 1, 0}}));
    REQUIRE(v.size() == 2);
    CHECK(v[0].mask_id == 0);
    CHECK(v[0].class_index == 1);
    CHECK(v[1].mask_id == 2);
    CHECK(v[1].class_index == 0);
}

TEST_CASE("one mask over the grid is whole-image classification") {
    const auto l = logits({{1, 1, 0, 0, 0, 1}, {0, 0, 1, 1, 1, 0}});
    const auto v = vote(masks(std::vector<int>(6, 0), {2, 3}), l);
    REQUIRE(v.size() == 1);
    CHECK(v[0].class_index == 0);
    const auto map = render_map(masks(std::vector<int>(6, 0), {2, 3}), v, {"a", "b"}, 4, 6);
    for (int x : map.labels.values) CHECK(x == 0);
}

TEST_CASE("background gate relabels low-confidence masks") {
    std::vector<MaskVote> votes(2);
    votes[0].label = 1;
    votes[0].confidence = 0.4;
    votes[1].label = 2;
    votes[1].confidence = 0.5;
    const auto gated = background_gate(votes, 0.5, 0);
    CHECK(gated[0].label == 0);
    CHECK(gated[0].background);
    CHECK(gated[1].label == 2);
    CHECK_FALSE(gated[1].background);
    CHECK_THROWS_AS(background_gate(votes, 0.5, std::nullopt), DataError);
}

TEST_CASE("nearest-neighbour patch mapping") {
    CHECK(patch_row_of(0, 224, 14) == 0);
    CHECK(patch_row_of(15, 224, 14) == 0);
    CHECK(patch_row_of(16, 224, 14) == 1);
    CHECK(patch_row_of(223, 224, 14) == 13);
    CHECK(patch_col_of(99, 100, 3) == 2);
    CHECK(patch_col_of(33, 100, 3) == 0);
    CHECK(patch_col_of(34, 100, 3) == 1);
}

TEST_CASE("label upsampling is blockwise constant") {
    const auto img = upsample_patch_labels({0, 1, 2, 3}, {2, 2}, 4, 6);
    CHECK(img.height == 4);
    CHECK(img.width == 6);
    CHECK(img.at(0, 0) == 0);
    CHECK(img.at(1, 2) == 0);
    CHECK(img.at(1, 3) == 1);
    CHECK(img.at(2, 0) == 2);
    CHECK(img.at(3, 5) == 3);
    CHECK_THROWS_AS(upsample_patch_labels({0, 1}, {2, 2}, 4, 4), DataError);
}

TEST_CASE("render paints masks with their labels") {
    const auto m = masks({0, 1, 1, 0}, {2, 2});
    std::vector<MaskVote> v(2);
    v[0].mask_id = 0;
    v[0].label = 4;
    v[1].mask_id = 1;
    v[1].label = 7;
    const auto map = render_map(m, v, {}, 2, 2);
    CHECK(map.labels.values == std::vector<int32_t>{4, 7, 7, 4});
}
