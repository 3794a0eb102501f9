#include "recoseg/backbone.hpp"

#include "recoseg/templates.hpp"

#include <opencv2/imgproc.hpp>

#include <cmath>

namespace recoseg {

namespace {

LayerNormParams load_ln(const WeightStore& store, const std::string& prefix) {
    return {store.load_vector(prefix + ".weight"), store.load_vector(prefix + ".bias")};
}

BlockParams load_block(const WeightStore& store, const std::string& prefix) {
    BlockParams b;
    b.ln_1 = load_ln(store, prefix + "ln_1");
    b.in_proj_weight = store.load_matrix(prefix + "attn.in_proj_weight");
    b.in_proj_bias = store.load_vector(prefix + "attn.in_proj_bias");
    b.out_proj_weight = store.load_matrix(prefix + "attn.out_proj.weight");
    b.out_proj_bias = store.load_vector(prefix + "attn.out_proj.bias");
    b.ln_2 = load_ln(store, prefix + "ln_2");
    b.fc_weight = store.load_matrix(prefix + "mlp.c_fc.weight");
    b.fc_bias = store.load_vector(prefix + "mlp.c_fc.bias");
    b.proj_weight = store.load_matrix(prefix + "mlp.c_proj.weight");
    b.proj_bias = store.load_vector(prefix + "mlp.c_proj.bias");
    return b;
}

constexpr size_t kTextChunk = 256;

// Causal text transformer over a batch of variable-length sequences stacked
// row-wise. Every sequence ends in the end-of-text token, so its last row is
// the pooled output.
Matrix encode_token_batch(const std::vector<std::vector<int>>& batch, const ModelBundle& bundle) {
    const auto& text = bundle.text;
    const auto& cfg = bundle.config;
    Eigen::Index total = 0;
    for (const auto& ids : batch) total += static_cast<Eigen::Index>(ids.size());
    Matrix x(total, cfg.text_width);
    Eigen::Index row = 0;
    for (const auto& ids : batch) {
        for (size_t pos = 0; pos < ids.size(); ++pos, ++row) {
            if (ids[pos] < 0 || ids[pos] >= cfg.vocab_size) throw DataError("token id outside vocabulary");
            x.row(row) = text.token_embedding.row(ids[pos]) + text.positional.row(static_cast<Eigen::Index>(pos));
        }
    }
    for (const auto& block : text.blocks) {
        const auto qkv = block_qkv(x, block, cfg.text_heads);
        Matrix context(total, cfg.text_width);
        Eigen::Index start = 0;
        for (const auto& ids : batch) {
            const auto n = static_cast<Eigen::Index>(ids.size());
            HeadProjections seq;
            for (int h = 0; h < qkv.heads(); ++h) {
                seq.q.emplace_back(qkv.q[h].middleRows(start, n));
                seq.k.emplace_back(qkv.k[h].middleRows(start, n));
                seq.v.emplace_back(qkv.v[h].middleRows(start, n));
            }
            const auto attn = softmax_attention(seq, /*causal=*/true);
            context.middleRows(start, n) = attention_context(seq, attn);
            start += n;
        }
        x = finish_block(x, context, block, cfg.activation);
    }
    Matrix pooled(static_cast<Eigen::Index>(batch.size()), cfg.text_width);
    Eigen::Index end = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
        end += static_cast<Eigen::Index>(batch[i].size());
        pooled.row(static_cast<Eigen::Index>(i)) = x.row(end - 1);
    }
    Matrix out = layer_norm(pooled, text.ln_final) * text.projection;
    normalize_rows(out);
    return out;
}

}  // namespace

ModelBundle load_bundle(const std::filesystem::path& weight_dir) {
    WeightStore store(weight_dir);
    ModelBundle b;
    b.config = store.config();
    const auto& c = b.config;
    if (c.vision_heads * c.vision_head_dim() != c.vision_width) throw ModelError("vision heads do not divide width");

    b.vision.patch_weight = store.load_matrix("visual.conv1.weight");
    b.vision.class_embedding = store.load_vector("visual.class_embedding");
    b.vision.positional = store.load_matrix("visual.positional_embedding");
    b.vision.ln_pre = load_ln(store, "visual.ln_pre");
    for (int i = 0; i < c.vision_layers; ++i)
        b.vision.blocks.push_back(load_block(store, "visual.transformer.resblocks." + std::to_string(i) + "."));
    b.vision.ln_post = load_ln(store, "visual.ln_post");
    b.vision.proj = store.load_matrix("visual.proj");

    b.text.token_embedding = store.load_matrix("token_embedding.weight");
    b.text.positional = store.load_matrix("positional_embedding");
    for (int i = 0; i < c.text_layers; ++i)
        b.text.blocks.push_back(load_block(store, "transformer.resblocks." + std::to_string(i) + "."));
    b.text.ln_final = load_ln(store, "ln_final");
    b.text.projection = store.load_matrix("text_projection");

    const auto stored = store.load("logit_scale");
    b.logit_scale = std::exp(stored.data.at(0));
    if (!(b.logit_scale > 0.0f) || !std::isfinite(b.logit_scale)) throw ModelError("invalid logit scale");

    b.tokenizer = std::make_shared<const BpeTokenizer>(store.vocab_path());
    return b;
}

ImageTensor preprocess(const cv::Mat& rgb, int side) {
    if (rgb.empty()) throw DataError("empty image");
    if (rgb.channels() != 3) throw DataError("expected a 3-channel RGB image, got " + std::to_string(rgb.channels()));
    if (side <= 0) throw DataError("image side must be positive");
    cv::Mat unit;
    if (rgb.depth() == CV_8U) {
        rgb.convertTo(unit, CV_32FC3, 1.0 / 255.0);
    } else if (rgb.depth() == CV_32F) {
        unit = rgb;
    } else {
        throw DataError("unsupported pixel depth");
    }
    cv::Mat resized;
    if (unit.rows == side && unit.cols == side) {
        resized = unit;
    } else {
        const bool shrink = unit.rows >= side && unit.cols >= side;
        cv::resize(unit, resized, cv::Size(side, side), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_CUBIC);
    }

    ImageTensor out;
    out.side = side;
    out.original_height = rgb.rows;
    out.original_width = rgb.cols;
    out.pixels = Tensor({3, side, side});
    const size_t plane = static_cast<size_t>(side) * side;
    for (int y = 0; y < side; ++y) {
        const auto* px = resized.ptr<cv::Vec3f>(y);
        for (int x = 0; x < side; ++x) {
            for (int c = 0; c < 3; ++c)
                out.pixels.data[c * plane + static_cast<size_t>(y) * side + x] = (px[x][c] - kPixelMean[c]) / kPixelStd[c];
        }
    }
    return out;
}

int resolve_recovery_block(const ModelBundle& bundle, int requested) {
    const int layers = static_cast<int>(bundle.vision.blocks.size());
    const int block = requested < 0 ? layers - 1 : requested;
    if (block < 0 || block >= layers)
        throw DataError("recovery block " + std::to_string(requested) + " outside [0, " + std::to_string(layers) + ")");
    return block;
}

Matrix positional_table(const ModelBundle& bundle, GridDims grid) {
    const auto& table = bundle.vision.positional;
    const int native = bundle.config.native_grid;
    if (grid.rows == native && grid.cols == native) return table;
    Matrix out(grid.patches() + 1, table.cols());
    out.row(0) = table.row(0);
    out.bottomRows(grid.patches()) = bicubic_resize(table.bottomRows(table.rows() - 1), {native, native}, grid);
    return out;
}

PatchFeatureSet forward_trunk(const ImageTensor& image, const ModelBundle& bundle, const TrunkOptions& options) {
    const auto& cfg = bundle.config;
    const int p = cfg.patch_size;
    if (image.pixels.shape != std::vector<int64_t>{3, image.side, image.side})
        throw DataError("image tensor must be [3, side, side]");
    if (image.side % p != 0)
        throw DataError("image side " + std::to_string(image.side) + " is not a multiple of patch size " + std::to_string(p));
    const GridDims grid{image.side / p, image.side / p};
    if (!options.interpolate_positions && (grid.rows != cfg.native_grid || grid.cols != cfg.native_grid))
        throw DataError("grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                        " does not match the positional table and interpolation is disabled");

    Matrix patches(grid.patches(), 3 * p * p);
    const size_t plane = static_cast<size_t>(image.side) * image.side;
    for (int gy = 0; gy < grid.rows; ++gy) {
        for (int gx = 0; gx < grid.cols; ++gx) {
            float* dst = patches.row(gy * grid.cols + gx).data();
            for (int c = 0; c < 3; ++c)
                for (int ky = 0; ky < p; ++ky)
                    for (int kx = 0; kx < p; ++kx)
                        *dst++ = image.pixels.data[c * plane + static_cast<size_t>(gy * p + ky) * image.side + gx * p + kx];
        }
    }

    Matrix x(grid.patches() + 1, cfg.vision_width);
    x.row(0) = bundle.vision.class_embedding.transpose();
    x.bottomRows(grid.patches()).noalias() = patches * bundle.vision.patch_weight.transpose();
    x += positional_table(bundle, grid);
    x = layer_norm(x, bundle.vision.ln_pre);

    const int stop = resolve_recovery_block(bundle, options.recovery_block);
    for (int i = 0; i < stop; ++i) x = run_block(x, bundle.vision.blocks[i], cfg.vision_heads, cfg.activation);

    PatchFeatureSet out;
    out.tokens = std::move(x);
    out.grid = grid;
    out.image_height = image.original_height;
    out.image_width = image.original_width;
    out.next_block = stop;
    if (!out.tokens.allFinite()) throw ModelError("non-finite activations in vision trunk");
    return out;
}

HeadProjections project_qkv(const PatchFeatureSet& features, const ModelBundle& bundle) {
    if (features.next_block < 0 || features.next_block >= static_cast<int>(bundle.vision.blocks.size()))
        throw DataError("features do not feed a vision block");
    if (features.tokens.rows() != features.grid.patches() + 1 || features.tokens.cols() != bundle.config.vision_width)
        throw DataError("patch features do not match grid/width");
    return block_qkv(features.tokens, bundle.vision.blocks[features.next_block], bundle.config.vision_heads);
}

Matrix encode_texts(const std::vector<std::string>& texts, const ModelBundle& bundle) {
    Matrix out(static_cast<Eigen::Index>(texts.size()), bundle.config.embed_dim);
    for (size_t begin = 0; begin < texts.size(); begin += kTextChunk) {
        const size_t end = std::min(texts.size(), begin + kTextChunk);
        std::vector<std::vector<int>> batch;
        for (size_t i = begin; i < end; ++i) batch.push_back(bundle.tokenizer->tokenize(texts[i], bundle.config.context_length));
        out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = encode_token_batch(batch, bundle);
    }
    return out;
}

TextBank encode_text_bank(const std::vector<std::string>& class_names, const std::vector<std::string>& templates,
                          const ModelBundle& bundle) {
    if (class_names.empty()) throw DataError("class list is empty");
    if (templates.empty()) throw DataError("template list is empty");
    TextBank bank;
    bank.class_names = class_names;
    bank.template_count = templates.size();
    bank.embeddings.resize(static_cast<Eigen::Index>(class_names.size()), bundle.config.embed_dim);
    for (size_t c = 0; c < class_names.size(); ++c) {
        const auto& name = class_names[c];
        if (name.empty()) throw DataError("class " + std::to_string(c) + " has an empty name");
        std::vector<std::string> prompts;
        for (const auto& t : templates) prompts.push_back(fill_template(t, name));
        Matrix embedded;
        try {
            embedded = encode_texts(prompts, bundle);
        } catch (const DataError& e) {
            throw DataError("class \"" + name + "\": " + e.what());
        }
        RowVector mean = embedded.colwise().mean();
        mean /= std::max(mean.norm(), 1e-12f);
        bank.embeddings.row(static_cast<Eigen::Index>(c)) = mean;
    }
    return bank;
}

}  // namespace recoseg
