#include "recoseg/safetensors.hpp"
#include "recoseg/weights.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>

using namespace recoseg;

namespace {

// Minimal float32 safetensors writer, independent of the reader under test.
void write_safetensors(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors) {
    nlohmann::json header = nlohmann::json::object();
    size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const size_t bytes = t.data.size() * sizeof(float);
        header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    const std::string text = header.dump();
    const uint64_t len = text.size();
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

std::map<std::string, Tensor> tiny_tensors() {
    SafetensorsFile file(testing::tiny_dir() / "model.safetensors");
    std::map<std::string, Tensor> out;
    for (const auto& [name, entry] : file.entries()) out.emplace(name, file.load(name));
    return out;
}

ConvertOptions tiny_options() {
    ConvertOptions o;
    o.vision_heads = 4;
    o.text_heads = 4;
    return o;
}

}  // namespace

TEST_CASE("converting the fixture checkpoint reports the published counts") {
    const auto expected = testing::tiny_expected();
    const auto out = testing::scratch_dir("convert_counts");
    const auto summary = convert_checkpoint(testing::tiny_dir() / "model.safetensors", out, tiny_options());
    CHECK(summary.tensor_count == expected["tensor_count"].get<size_t>());
    CHECK(summary.parameter_count == expected["parameter_count"].get<int64_t>());
    CHECK(summary.config.vision_layers == 3);
    CHECK(summary.config.vision_width == 64);
    CHECK(summary.config.native_grid == 4);
    CHECK(summary.config.text_layers == 2);
    CHECK(summary.config.embed_dim == 32);
    CHECK(std::filesystem::exists(out / "manifest.json"));
}

TEST_CASE("converted tensors reload bit-identical") {
    const auto out = testing::scratch_dir("convert_reload");
    convert_checkpoint(testing::tiny_dir() / "model.safetensors", out, tiny_options());
    WeightStore store(out);
    SafetensorsFile file(testing::tiny_dir() / "model.safetensors");
    int compared = 0;
    for (const auto& [name, entry] : file.entries()) {
        if (!store.shapes().count(name)) continue;
        const auto a = file.load(name);
        const auto b = store.load(name);
        REQUIRE(a.data.size() == b.data.size());
        CHECK_MESSAGE(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0, name);
        ++compared;
    }
    CHECK(compared == 74);
}

TEST_CASE("unmapped keys are rejected by name") {
    const auto dir = testing::scratch_dir("convert_unmapped");
    auto tensors = tiny_tensors();
    tensors.emplace("visual.extra_head.weight", Tensor({2, 2}));
    write_safetensors(dir / "bad.safetensors", tensors);
    try {
        convert_checkpoint(dir / "bad.safetensors", dir / "out", tiny_options());
        FAIL("expected an error");
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("visual.extra_head.weight") != std::string::npos);
    }
}

TEST_CASE("shape mismatches and missing tensors are model errors") {
    const auto dir = testing::scratch_dir("convert_shapes");
    auto tensors = tiny_tensors();
    tensors["visual.ln_post.weight"] = Tensor({63});
    write_safetensors(dir / "shape.safetensors", tensors);
    CHECK_THROWS_AS(convert_checkpoint(dir / "shape.safetensors", dir / "o1", tiny_options()), ModelError);

    auto missing = tiny_tensors();
    missing.erase("text_projection");
    write_safetensors(dir / "missing.safetensors", missing);
    CHECK_THROWS_AS(convert_checkpoint(dir / "missing.safetensors", dir / "o2", tiny_options()), ModelError);
}

TEST_CASE("float32 checkpoints convert the same as half") {
    const auto dir = testing::scratch_dir("convert_f32");
    write_safetensors(dir / "f32.safetensors", tiny_tensors());
    const auto summary = convert_checkpoint(dir / "f32.safetensors", dir / "out", tiny_options());
    CHECK(summary.parameter_count == 1812577);
}

TEST_CASE("weight store validates its manifest") {
    const auto dir = testing::scratch_dir("store_validate");
    CHECK_THROWS_AS(WeightStore{dir}, ModelError);

    const auto out = dir / "w";
    convert_checkpoint(testing::tiny_dir() / "model.safetensors", out, tiny_options());
    std::filesystem::remove(out / "visual.proj.bin");
    WeightStore store(out);
    CHECK_THROWS_AS(store.load("visual.proj"), ModelError);
}

TEST_CASE("expected schema matches the published base model size") {
    const ModelConfig base;  // defaults describe the 16-pixel-patch base model
    const auto schema = expected_schema(base);
    int64_t params = 0;
    for (const auto& [name, shape] : schema) params += shape_numel(shape);
    // 149.6M parameters in the public base checkpoint with 16-pixel patches.
    CHECK(params == 149620737);
    CHECK(schema.size() == 302);
    CHECK(schema.at("visual.positional_embedding") == std::vector<int64_t>{197, 768});
}
