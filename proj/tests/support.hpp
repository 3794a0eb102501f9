#pragma once

#include "recoseg/backbone.hpp"
#include "recoseg/nn.hpp"
#include "recoseg/weights.hpp"

#include <nlohmann/json.hpp>

#include <unistd.h>

#include <filesystem>
#include <limits>
#include <random>
#include <string>

namespace testing {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(RECOSEG_TEST_DATA); }
inline fs::path tiny_dir() { return data_dir() / "tiny_clip"; }

inline nlohmann::json tiny_expected() {
    return nlohmann::json::parse(recoseg::read_text_file(tiny_dir() / "expected.json"));
}

/// Fresh directory under the build tree, emptied on creation.
inline fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::path(RECOSEG_TEST_SCRATCH) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// The tiny fixture model converted once per process.
inline const fs::path& tiny_weights() {
    static const fs::path dir = [] {
        auto out = scratch_dir("tiny_weights_" + std::to_string(::getpid()));
        recoseg::ConvertOptions opts;
        opts.vision_heads = 4;
        opts.text_heads = 4;
        recoseg::convert_checkpoint(tiny_dir() / "model.safetensors", out, opts);
        return out;
    }();
    return dir;
}

inline const recoseg::ModelBundle& tiny_bundle() {
    static const recoseg::ModelBundle bundle = recoseg::load_bundle(tiny_weights());
    return bundle;
}

inline recoseg::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    recoseg::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(n(rng));
    return m;
}

inline recoseg::HeadProjections random_qkv(std::mt19937_64& rng, int heads, Eigen::Index tokens, Eigen::Index dim) {
    recoseg::HeadProjections p;
    for (int h = 0; h < heads; ++h) {
        p.q.push_back(random_matrix(rng, tokens, dim));
        p.k.push_back(random_matrix(rng, tokens, dim));
        p.v.push_back(random_matrix(rng, tokens, dim));
    }
    return p;
}

inline double max_abs_diff(const recoseg::Matrix& a, const recoseg::Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
    return (a.cast<double>() - b.cast<double>()).cwiseAbs().maxCoeff();
}

inline recoseg::Matrix reference_matrix(const std::string& name) {
    return recoseg::matrix_from_tensor(recoseg::read_dump(tiny_dir() / "reference", name));
}

}  // namespace testing
