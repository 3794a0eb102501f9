#include "recoseg/weights.hpp"

#include "recoseg/safetensors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace recoseg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

// Entries some published archives carry that are not parameters.
const std::set<std::string> kIgnoredKeys = {"input_resolution", "context_length", "vocab_size"};

void add_block(std::map<std::string, std::vector<int64_t>>& s, const std::string& prefix, int64_t width,
               int64_t mlp) {
    s[prefix + "ln_1.weight"] = {width};
    s[prefix + "ln_1.bias"] = {width};
    s[prefix + "attn.in_proj_weight"] = {3 * width, width};
    s[prefix + "attn.in_proj_bias"] = {3 * width};
    s[prefix + "attn.out_proj.weight"] = {width, width};
    s[prefix + "attn.out_proj.bias"] = {width};
    s[prefix + "ln_2.weight"] = {width};
    s[prefix + "ln_2.bias"] = {width};
    s[prefix + "mlp.c_fc.weight"] = {mlp, width};
    s[prefix + "mlp.c_fc.bias"] = {mlp};
    s[prefix + "mlp.c_proj.weight"] = {width, mlp};
    s[prefix + "mlp.c_proj.bias"] = {width};
}

std::string activation_name(Activation a) { return a == Activation::gelu ? "gelu" : "quick_gelu"; }

Activation parse_activation(const std::string& s) {
    if (s == "gelu") return Activation::gelu;
    if (s == "quick_gelu") return Activation::quick_gelu;
    throw ModelError("unknown activation " + s);
}

json config_to_json(const ModelConfig& c) {
    return {{"vision_width", c.vision_width},     {"vision_layers", c.vision_layers},
            {"vision_heads", c.vision_heads},     {"vision_mlp_width", c.vision_mlp_width},
            {"patch_size", c.patch_size},         {"native_grid", c.native_grid},
            {"text_width", c.text_width},         {"text_layers", c.text_layers},
            {"text_heads", c.text_heads},         {"text_mlp_width", c.text_mlp_width},
            {"context_length", c.context_length}, {"vocab_size", c.vocab_size},
            {"embed_dim", c.embed_dim},           {"activation", activation_name(c.activation)}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vision_width = j.at("vision_width");
    c.vision_layers = j.at("vision_layers");
    c.vision_heads = j.at("vision_heads");
    c.vision_mlp_width = j.at("vision_mlp_width");
    c.patch_size = j.at("patch_size");
    c.native_grid = j.at("native_grid");
    c.text_width = j.at("text_width");
    c.text_layers = j.at("text_layers");
    c.text_heads = j.at("text_heads");
    c.text_mlp_width = j.at("text_mlp_width");
    c.context_length = j.at("context_length");
    c.vocab_size = j.at("vocab_size");
    c.embed_dim = j.at("embed_dim");
    c.activation = parse_activation(j.at("activation"));
    return c;
}

int count_blocks(const SafetensorsFile& file, const std::string& prefix) {
    const std::regex re("^" + std::regex_replace(prefix, std::regex(R"(\.)"), R"(\.)") + R"((\d+)\.)");
    int max_index = -1;
    for (const auto& [name, entry] : file.entries()) {
        std::smatch m;
        if (std::regex_search(name, m, re)) max_index = std::max(max_index, std::stoi(m[1]));
    }
    return max_index + 1;
}

const std::vector<int64_t>& shape_of(const SafetensorsFile& file, const std::string& name) {
    auto it = file.entries().find(name);
    if (it == file.entries().end()) throw ModelError("checkpoint lacks required tensor " + name);
    return it->second.shape;
}

ModelConfig infer_config(const SafetensorsFile& file, const ConvertOptions& options) {
    ModelConfig c;
    c.vision_width = static_cast<int>(shape_of(file, "visual.class_embedding").at(0));
    c.patch_size = static_cast<int>(shape_of(file, "visual.conv1.weight").at(3));
    c.vision_layers = count_blocks(file, "visual.transformer.resblocks.");
    c.vision_mlp_width = static_cast<int>(shape_of(file, "visual.transformer.resblocks.0.mlp.c_fc.weight").at(0));
    const auto tokens = shape_of(file, "visual.positional_embedding").at(0);
    c.native_grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens - 1))));
    if (static_cast<int64_t>(c.native_grid) * c.native_grid + 1 != tokens)
        throw ModelError("visual positional table is not a square grid plus [CLS]");
    c.embed_dim = static_cast<int>(shape_of(file, "visual.proj").at(1));
    c.text_width = static_cast<int>(shape_of(file, "ln_final.weight").at(0));
    c.text_layers = count_blocks(file, "transformer.resblocks.");
    c.text_mlp_width = static_cast<int>(shape_of(file, "transformer.resblocks.0.mlp.c_fc.weight").at(0));
    c.context_length = static_cast<int>(shape_of(file, "positional_embedding").at(0));
    c.vocab_size = static_cast<int>(shape_of(file, "token_embedding.weight").at(0));
    c.vision_heads = options.vision_heads.value_or(c.vision_width / 64);
    c.text_heads = options.text_heads.value_or(c.text_width / 64);
    c.activation = options.activation;
    if (c.vision_heads <= 0 || c.vision_width % c.vision_heads != 0)
        throw ModelError("vision head count does not divide width");
    if (c.text_heads <= 0 || c.text_width % c.text_heads != 0)
        throw ModelError("text head count does not divide width");
    return c;
}

}  // namespace

fs::path default_vocab_path() { return fs::path(RECOSEG_DATA_DIR) / "bpe_simple_vocab_16e6.txt.gz"; }

std::map<std::string, std::vector<int64_t>> expected_schema(const ModelConfig& c) {
    std::map<std::string, std::vector<int64_t>> s;
    const int64_t vw = c.vision_width;
    const int64_t tw = c.text_width;
    s["visual.class_embedding"] = {vw};
    s["visual.positional_embedding"] = {static_cast<int64_t>(c.native_grid) * c.native_grid + 1, vw};
    s["visual.conv1.weight"] = {vw, 3, c.patch_size, c.patch_size};
    s["visual.ln_pre.weight"] = {vw};
    s["visual.ln_pre.bias"] = {vw};
    for (int i = 0; i < c.vision_layers; ++i)
        add_block(s, "visual.transformer.resblocks." + std::to_string(i) + ".", vw, c.vision_mlp_width);
    s["visual.ln_post.weight"] = {vw};
    s["visual.ln_post.bias"] = {vw};
    s["visual.proj"] = {vw, c.embed_dim};
    s["token_embedding.weight"] = {c.vocab_size, tw};
    s["positional_embedding"] = {c.context_length, tw};
    for (int i = 0; i < c.text_layers; ++i)
        add_block(s, "transformer.resblocks." + std::to_string(i) + ".", tw, c.text_mlp_width);
    s["ln_final.weight"] = {tw};
    s["ln_final.bias"] = {tw};
    s["text_projection"] = {tw, c.embed_dim};
    s["logit_scale"] = {};
    return s;
}

ConvertSummary convert_checkpoint(const fs::path& archive, const fs::path& out_dir, const ConvertOptions& options) {
    SafetensorsFile file(archive);
    ConvertSummary summary;
    summary.config = infer_config(file, options);
    const auto schema = expected_schema(summary.config);

    std::vector<std::string> unmapped;
    for (const auto& [name, entry] : file.entries())
        if (!schema.count(name) && !kIgnoredKeys.count(name)) unmapped.push_back(name);
    if (!unmapped.empty()) {
        std::ostringstream os;
        os << "unmapped checkpoint keys (" << unmapped.size() << "):";
        for (const auto& k : unmapped) os << ' ' << k;
        throw ModelError(os.str());
    }
    for (const auto& [name, shape] : schema) {
        auto it = file.entries().find(name);
        if (it == file.entries().end()) throw ModelError("checkpoint lacks required tensor " + name);
        // Scalars may be stored as shape [] or [1].
        if (it->second.shape != shape && !(shape.empty() && shape_numel(it->second.shape) == 1)) {
            std::ostringstream os;
            os << "shape mismatch for " << name << ": checkpoint " << Tensor(it->second.shape).shape_string()
               << ", expected " << Tensor(shape).shape_string();
            throw ModelError(os.str());
        }
    }

    fs::create_directories(out_dir);
    json manifest;
    for (const auto& [name, shape] : schema) {
        auto t = file.load(name);
        write_raw_f32(out_dir / (name + ".bin"), t.data);
        manifest[name] = {{"shape", shape}, {"dtype", "float32"}};
        ++summary.tensor_count;
        summary.parameter_count += t.numel();
    }

    const auto vocab_src = options.vocab_path.empty() ? default_vocab_path() : options.vocab_path;
    if (!fs::exists(vocab_src)) throw DataError("tokenizer vocabulary not found: " + vocab_src.string());
    const auto vocab_name = vocab_src.filename().string();
    fs::copy_file(vocab_src, out_dir / vocab_name, fs::copy_options::overwrite_existing);

    manifest["__metadata__"] = {{"format", "recoseg-weights"},
                                {"version", kManifestVersion},
                                {"source", archive.filename().string()},
                                {"vocab", vocab_name},
                                {"config", config_to_json(summary.config)}};
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("cannot write manifest in " + out_dir.string());
    return summary;
}

WeightStore::WeightStore(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::is_regular_file(dir_ / "manifest.json"))
        throw ModelError("no weight manifest in " + dir_.string() + " (run the convert command first)");
    json manifest;
    try {
        manifest = json::parse(read_text_file(dir_ / "manifest.json"));
    } catch (const json::exception& e) {
        throw ModelError((dir_ / "manifest.json").string() + ": " + e.what());
    }
    if (!manifest.contains("__metadata__")) throw ModelError("manifest has no __metadata__ section");
    const auto& meta = manifest["__metadata__"];
    try {
        config_ = config_from_json(meta.at("config"));
    } catch (const json::exception& e) {
        throw ModelError(std::string("manifest config: ") + e.what());
    }
    vocab_file_ = meta.value("vocab", "");
    for (auto& [name, value] : manifest.items()) {
        if (name == "__metadata__") continue;
        if (value.value("dtype", "float32") != "float32") throw ModelError(name + ": unsupported dtype");
        shapes_[name] = value.at("shape").get<std::vector<int64_t>>();
    }
    for (const auto& [name, shape] : expected_schema(config_)) {
        auto it = shapes_.find(name);
        if (it == shapes_.end()) throw ModelError("weight directory is missing tensor " + name);
        if (it->second != shape) throw ModelError("manifest shape mismatch for " + name);
    }
}

fs::path WeightStore::vocab_path() const {
    if (!vocab_file_.empty() && fs::exists(dir_ / vocab_file_)) return dir_ / vocab_file_;
    return default_vocab_path();
}

Tensor WeightStore::load(const std::string& name) const {
    auto it = shapes_.find(name);
    if (it == shapes_.end()) throw ModelError("weight directory is missing tensor " + name);
    const auto file = dir_ / (name + ".bin");
    if (!fs::exists(file)) throw ModelError("weight directory is missing tensor file " + file.string());
    return Tensor(it->second, read_raw_f32(file, shape_numel(it->second)));
}

Matrix WeightStore::load_matrix(const std::string& name) const {
    auto t = load(name);
    if (t.shape.size() == 4) t.shape = {t.shape[0], t.shape[1] * t.shape[2] * t.shape[3]};
    if (t.shape.size() != 2) throw ModelError(name + " is not a matrix");
    return matrix_from_tensor(t);
}

Vector WeightStore::load_vector(const std::string& name) const {
    auto t = load(name);
    return Eigen::Map<const Vector>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

}  // namespace recoseg
