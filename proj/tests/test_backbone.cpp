#include "recoseg/backbone.hpp"
#include "recoseg/correlation.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace recoseg;
using testing::max_abs_diff;
using testing::reference_matrix;

namespace {

constexpr double kTol = 1e-4;

ImageTensor reference_image(int side) {
    ImageTensor image;
    image.side = side;
    image.original_height = side;
    image.original_width = side;
    image.pixels = read_dump(testing::tiny_dir() / "reference", "image_" + std::to_string(side));
    return image;
}

void check_vision_parity(int side) {
    const auto& bundle = testing::tiny_bundle();
    const auto suffix = std::to_string(side);
    const auto features = forward_trunk(reference_image(side), bundle);
    CHECK(features.grid.rows == side / 16);
    CHECK(features.next_block == 2);
    CHECK(max_abs_diff(features.tokens, reference_matrix("trunk_" + suffix)) < kTol);

    const auto qkv = project_qkv(features, bundle);
    REQUIRE(qkv.heads() == 4);
    const auto q = stack_from_tensor(read_dump(testing::tiny_dir() / "reference", "q_" + suffix));
    const auto k = stack_from_tensor(read_dump(testing::tiny_dir() / "reference", "k_" + suffix));
    const auto v = stack_from_tensor(read_dump(testing::tiny_dir() / "reference", "v_" + suffix));
    for (int h = 0; h < 4; ++h) {
        CHECK(max_abs_diff(qkv.q[h], q[h]) < kTol);
        CHECK(max_abs_diff(qkv.k[h], k[h]) < kTol);
        CHECK(max_abs_diff(qkv.v[h], v[h]) < kTol);
    }

    const auto tokens = forward_standard(features, bundle);
    CHECK(max_abs_diff(tokens.rows, reference_matrix("tokens_" + suffix)) < kTol);

    // Per-head softmax passed explicitly is the same path.
    const auto explicit_softmax = forward_with_attention(features, softmax_attention(qkv), bundle);
    CHECK(max_abs_diff(explicit_softmax.rows, tokens.rows) < 1e-6);
}

}  // namespace

TEST_CASE("vision tower matches the reference at the native grid") { check_vision_parity(64); }

TEST_CASE("vision tower matches the reference with a resampled positional table") { check_vision_parity(96); }

TEST_CASE("bicubic positional table matches the reference resize") {
    const auto& bundle = testing::tiny_bundle();
    const auto table = positional_table(bundle, {6, 6});
    CHECK(max_abs_diff(table, reference_matrix("posembed_96")) < 1e-5);
    // Native grid is returned untouched.
    CHECK(positional_table(bundle, {4, 4}) == bundle.vision.positional);
}

TEST_CASE("grid mismatch without interpolation is an error") {
    TrunkOptions opts;
    opts.interpolate_positions = false;
    CHECK_THROWS_AS(forward_trunk(reference_image(96), testing::tiny_bundle(), opts), DataError);
    CHECK_NOTHROW(forward_trunk(reference_image(64), testing::tiny_bundle(), opts));
}

TEST_CASE("text embeddings match the reference") {
    const auto& bundle = testing::tiny_bundle();
    const auto expected = testing::tiny_expected();
    const auto strings = expected["strings"].get<std::vector<std::string>>();
    CHECK(max_abs_diff(encode_texts(strings, bundle), reference_matrix("text_strings")) < kTol);

    const auto bank = encode_text_bank(expected["classes"].get<std::vector<std::string>>(),
                                       expected["templates"].get<std::vector<std::string>>(), bundle);
    CHECK(bank.template_count == 3);
    CHECK(max_abs_diff(bank.embeddings, reference_matrix("text_bank")) < kTol);
    for (Eigen::Index c = 0; c < bank.embeddings.rows(); ++c) CHECK(bank.embeddings.row(c).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("logit scale is exponentiated at load") {
    CHECK(testing::tiny_bundle().logit_scale == doctest::Approx(testing::tiny_expected()["logit_scale"].get<double>()).epsilon(1e-6));
}

TEST_CASE("text bank errors name the class") {
    try {
        std::string longer;
        for (int i = 0; i < 90; ++i) longer += "word ";
        encode_text_bank({"dog", longer}, {"a {}."}, testing::tiny_bundle());
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("word word") != std::string::npos);
    }
    CHECK_THROWS_AS(encode_text_bank({}, {"a {}."}, testing::tiny_bundle()), DataError);
}

TEST_CASE("preprocessing normalizes with the published channel statistics") {
    cv::Mat mean_colour(10, 20, CV_8UC3);
    // A pixel equal to mean*255 maps to ~0 after normalization.
    mean_colour.setTo(cv::Scalar(std::lround(kPixelMean[0] * 255), std::lround(kPixelMean[1] * 255),
                                 std::lround(kPixelMean[2] * 255)));
    const auto img = preprocess(mean_colour, 32);
    CHECK(img.side == 32);
    CHECK(img.original_height == 10);
    CHECK(img.original_width == 20);
    CHECK(img.pixels.shape == std::vector<int64_t>{3, 32, 32});
    for (float x : img.pixels.data) CHECK(std::abs(x) < 0.01f);

    cv::Mat white(8, 8, CV_8UC3, cv::Scalar(255, 255, 255));
    const auto w = preprocess(white, 16);
    CHECK(w.pixels.data[0] == doctest::Approx((1.0 - kPixelMean[0]) / kPixelStd[0]).epsilon(1e-5));
    CHECK(w.pixels.data[16 * 16 * 2] == doctest::Approx((1.0 - kPixelMean[2]) / kPixelStd[2]).epsilon(1e-5));

    cv::Mat gray(8, 8, CV_8UC1, cv::Scalar(3));
    CHECK_THROWS_AS(preprocess(gray, 16), DataError);
    CHECK_THROWS_AS(preprocess(white, 0), DataError);
}

TEST_CASE("preprocessing keeps channel order") {
    cv::Mat red(4, 4, CV_8UC3, cv::Scalar(255, 0, 0));  // RGB: pure red
    const auto img = preprocess(red, 4);
    CHECK(img.pixels.data[0] > 1.0f);
    CHECK(img.pixels.data[16] < 0.0f);
    CHECK(img.pixels.data[32] < 0.0f);
}

TEST_CASE("recovery block resolution") {
    const auto& bundle = testing::tiny_bundle();
    CHECK(resolve_recovery_block(bundle, -1) == 2);
    CHECK(resolve_recovery_block(bundle, 0) == 0);
    CHECK_THROWS_AS(resolve_recovery_block(bundle, 3), DataError);
}
