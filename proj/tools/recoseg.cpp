#include "recoseg/evalharness.hpp"
#include "recoseg/image_io.hpp"
#include "recoseg/prompts.hpp"
#include "recoseg/render.hpp"
#include "recoseg/templates.hpp"
#include "recoseg/weights.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace recoseg;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string weights;
    std::string image;
    std::string classes;
    std::string manifest;
    std::string templates;
    std::string out;
    std::string dump_dir;
    int side = 224;
    double eps = 0.7;
    int min_samples = 3;
    bool no_denoise = false;
    std::string background = "none";
    double tau = 0.5;
    bool fast_corr = false;
    int recovery_block = -1;
    std::string denoise_kind = "inner_product";

    std::string patch;
    std::string ablation = "full";
    std::optional<int> limit;
    std::optional<int> sample;
    uint64_t seed = 0;
    int jobs = 1;
    bool check_labels = false;
    int k = 3;

    std::string archive;
    std::optional<int> vision_heads;
    std::optional<int> text_heads;
    std::string activation = "quick_gelu";
    std::string vocab;
};

void add_model_flag(CLI::App* cmd, Options& o) {
    cmd->add_option("--weights", o.weights, "Converted weight directory")->envname("RECOSEG_WEIGHTS")->required();
}

void add_pipeline_flags(CLI::App* cmd, Options& o, bool with_background) {
    cmd->add_option("--side", o.side, "Square input side in pixels")->capture_default_str();
    cmd->add_option("--eps", o.eps, "DBSCAN neighbourhood radius")->capture_default_str();
    cmd->add_option("--min-samples", o.min_samples, "DBSCAN core-point count")->capture_default_str();
    cmd->add_flag("--fast-corr", o.fast_corr, "Concatenate heads before the cosine");
    cmd->add_option("--recovery-block", o.recovery_block, "Block whose attention is replaced (-1: last)")
        ->capture_default_str();
    cmd->add_option("--denoise-kind", o.denoise_kind, "Correlation used to score global patches")
        ->check(CLI::IsMember({"inner_product", "cosine"}))
        ->capture_default_str();
    if (with_background) {
        cmd->add_option("--background", o.background, "Background handling")
            ->check(CLI::IsMember({"gate", "text", "none"}))
            ->capture_default_str();
        cmd->add_option("--tau", o.tau, "Confidence gate threshold")->capture_default_str();
    }
}

void add_class_flags(CLI::App* cmd, Options& o) {
    auto* c = cmd->add_option("--classes", o.classes, "Comma-separated class names")
                  ->multi_option_policy(CLI::MultiOptionPolicy::Join);
    auto* m = cmd->add_option("--manifest", o.manifest, "Take classes and background index from a dataset manifest");
    c->excludes(m);
    cmd->add_option("--templates", o.templates, "Prompt template file, one template with {} per line");
}

PipelineConfig pipeline_config(const Options& o) {
    PipelineConfig c;
    if (o.side <= 0) throw UsageError("--side must be positive");
    c.side = o.side;
    c.dbscan.eps = o.eps;
    c.dbscan.min_samples = o.min_samples;
    if (o.eps <= 0 || o.min_samples < 1) throw UsageError("--eps must be positive and --min-samples at least 1");
    c.ablation = o.no_denoise ? Ablation::scr_pc : parse_ablation(o.ablation);
    c.background = parse_background_mode(o.background);
    c.tau = o.tau;
    c.fast_correlation = o.fast_corr;
    c.recovery_block = o.recovery_block;
    c.denoise_kind = o.denoise_kind == "cosine" ? CorrelationKind::cosine : CorrelationKind::inner_product;
    return c;
}

std::vector<std::string> templates_of(const Options& o) {
    return o.templates.empty() ? default_templates() : load_templates(o.templates);
}

LabelSpace label_space_of(const Options& o) {
    if (!o.manifest.empty()) return ingest(o.manifest, false).label_space();
    if (o.classes.empty()) throw UsageError("one of --classes or --manifest is required");
    LabelSpace space;
    // Config files hand over a comma list as separate values, joined by newlines.
    std::string joined = o.classes;
    std::replace(joined.begin(), joined.end(), '\n', ',');
    std::stringstream ss(joined);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) throw UsageError("empty class name in --classes");
        space.class_names.push_back(item.substr(b, e - b + 1));
    }
    if (space.class_names.empty()) throw UsageError("--classes is empty");
    return space;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write " + path.string());
}

struct Loaded {
    ModelBundle bundle;
    TextClasses classes;
    PipelineConfig config;
    cv::Mat rgb;
};

Loaded load_for_image(const Options& o) {
    Loaded l;
    l.config = pipeline_config(o);
    const auto space = label_space_of(o);
    l.rgb = read_rgb_image(o.image);
    l.bundle = load_bundle(o.weights);
    l.classes = build_text_classes(space, l.config.background, templates_of(o), l.bundle);
    return l;
}

int cmd_convert(const Options& o) {
    ConvertOptions opts;
    opts.vision_heads = o.vision_heads;
    opts.text_heads = o.text_heads;
    opts.activation = o.activation == "gelu" ? Activation::gelu : Activation::quick_gelu;
    opts.vocab_path = o.vocab;
    const auto s = convert_checkpoint(o.archive, o.out, opts);
    std::cout << "converted " << s.tensor_count << " tensors, " << s.parameter_count << " parameters into " << o.out
              << '\n';
    return kOk;
}

int cmd_segment(const Options& o) {
    auto l = load_for_image(o);
    const auto r = run_pipeline(l.rgb, l.bundle, l.classes, l.config);
    const fs::path out = o.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_label_png(out, r.map.labels);
    auto sidecar_path = out;
    write_json(sidecar_path.replace_extension(".json"), segmentation_sidecar(r, l.classes, l.config));
    if (!o.dump_dir.empty()) {
        fs::create_directories(o.dump_dir);
        write_pipeline_dump(o.dump_dir, r);
    }
    return kOk;
}

int cmd_inspect(const Options& o) {
    int row = 0, col = 0;
    char comma = 0;
    std::istringstream ps(o.patch);
    if (!(ps >> row >> comma >> col) || comma != ',' || !ps.eof()) throw UsageError("--patch expects r,c");

    auto config = pipeline_config(o);
    config.ablation = Ablation::full;
    const auto rgb = read_rgb_image(o.image);
    const auto bundle = load_bundle(o.weights);

    // Only the correlation and clustering stages are needed.
    const auto image = preprocess(rgb, config.side);
    TrunkOptions trunk;
    trunk.recovery_block = config.recovery_block;
    const auto features = forward_trunk(image, bundle, trunk);
    const auto grid = features.grid;
    if (row < 0 || row >= grid.rows || col < 0 || col >= grid.cols)
        throw DataError("patch " + o.patch + " outside the " + std::to_string(grid.rows) + "x" +
                        std::to_string(grid.cols) + " grid");
    const auto qkv = project_qkv(features, bundle);
    const auto w = config.fast_correlation ? self_correlation_fast(qkv, grid) : self_correlation(qkv, grid);
    const auto w_d = config.denoise_kind == CorrelationKind::inner_product ? inner_product_correlation(qkv, grid) : w;
    const auto plain = segment(w, config.dbscan);
    const auto denoised = denoise_and_segment(w, w_d, config.dbscan);

    const int h = rgb.rows, wd = rgb.cols;
    const Matrix block = w.patch_block();
    const int sel = row * grid.cols + col;
    std::vector<float> corr_row(block.cols());
    for (Eigen::Index j = 0; j < block.cols(); ++j) corr_row[j] = block(sel, j);

    const fs::path dir = o.out;
    fs::create_directories(dir);
    cv::Mat rgb8;
    rgb.convertTo(rgb8, CV_8UC3);
    write_rgb_png(dir / "heatmap.png",
                  heatmap_overlay(rgb8, upsample_row(corr_row, grid, h, wd), patch_center(row, col, grid, h, wd)));
    write_rgb_png(dir / "clusters_plain.png", cluster_image(plain.clusters.labels, grid, h, wd));
    write_rgb_png(dir / "clusters_denoised.png", cluster_image(denoised.clusters.labels, grid, h, wd));
    write_rgb_png(dir / "global_scores.png", score_image(denoised.report.scores, grid, h, wd));
    write_json(dir / "inspect.json", {{"grid", {grid.rows, grid.cols}},
                                      {"patch", {row, col}},
                                      {"flagged_patches", denoised.report.flagged},
                                      {"global_patch_scores", denoised.report.scores},
                                      {"clusters_plain", plain.clusters.labels},
                                      {"clusters_denoised", denoised.clusters.labels},
                                      {"denoise_fell_back", denoised.fell_back},
                                      {"config", config.to_json()}});
    return kOk;
}

int cmd_evaluate(const Options& o) {
    RunConfig run;
    run.manifest = o.manifest;
    run.pipeline = pipeline_config(o);
    if (!o.templates.empty()) run.templates = load_templates(o.templates);
    run.limit = o.limit;
    run.sample = o.sample;
    run.seed = o.seed;
    run.jobs = o.jobs;
    run.report_path = o.out;
    run.check_labels = o.check_labels;
    const auto bundle = load_bundle(o.weights);
    const auto report = run_benchmark(run, bundle);
    std::cout << std::fixed << std::setprecision(2) << "images " << report.image_count << "  failures "
              << report.failures << "  mIoU " << report.core.miou << "  pAcc " << report.core.pacc << "  mAcc "
              << report.core.macc << "  fwIoU " << report.core.fwiou << '\n';
    return kOk;
}

int cmd_export_prompts(const Options& o) {
    if (o.k < 0) throw UsageError("--k must be non-negative");
    auto l = load_for_image(o);
    l.config.ablation = Ablation::full;  // prompts always come from denoised masks
    const auto r = run_pipeline(l.rgb, l.bundle, l.classes, l.config);
    const auto prompts = build_prompts(r.masks, r.votes, l.classes.labels.class_names, l.rgb.rows, l.rgb.cols, o.k);
    write_json(o.out, prompts.to_json());
    return kOk;
}

int cmd_dump(const Options& o) {
    auto l = load_for_image(o);
    const auto r = run_pipeline(l.rgb, l.bundle, l.classes, l.config);
    fs::create_directories(o.out);
    write_pipeline_dump(o.out, r);
    write_json(fs::path(o.out) / "config.json", l.config.to_json());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-free open-vocabulary semantic segmentation"};
    app.set_config("--config", "", "TOML/INI file with flag defaults; command-line flags take precedence");
    app.require_subcommand(1);
    Options o;

    auto* convert = app.add_subcommand("convert", "Convert a .safetensors checkpoint into a weight directory");
    convert->add_option("archive", o.archive, "Checkpoint (.safetensors, open_clip naming)")->required();
    convert->add_option("out", o.out, "Output weight directory")->required();
    convert->add_option("--vision-heads", o.vision_heads, "Image tower heads (default: width / 64)");
    convert->add_option("--text-heads", o.text_heads, "Text tower heads (default: width / 64)");
    convert->add_option("--activation", o.activation, "MLP activation")->check(CLI::IsMember({"quick_gelu", "gelu"}))->capture_default_str();
    convert->add_option("--vocab", o.vocab, "BPE vocabulary (.txt.gz) to copy alongside the weights");

    auto* seg = app.add_subcommand("segment", "Segment one image");
    seg->add_option("image", o.image)->required();
    seg->add_option("--out,-o", o.out, "Indexed label PNG; the sidecar goes next to it as .json")->required();
    seg->add_flag("--no-denoise", o.no_denoise, "Skip global-patch denoising");
    seg->add_option("--dump-dir", o.dump_dir, "Also write intermediate tensors here");
    add_model_flag(seg, o);
    add_class_flags(seg, o);
    add_pipeline_flags(seg, o, true);

    auto* inspect = app.add_subcommand("inspect", "Write correlation, cluster and global-patch figures");
    inspect->add_option("image", o.image)->required();
    inspect->add_option("--patch", o.patch, "Selected patch as row,col")->required();
    inspect->add_option("--out,-o", o.out, "Output directory")->required();
    add_model_flag(inspect, o);
    add_pipeline_flags(inspect, o, false);

    auto* evaluate = app.add_subcommand("evaluate", "Score the pipeline on a dataset manifest");
    evaluate->add_option("manifest", o.manifest)->required();
    evaluate->add_option("--report,-o", o.out, "Report JSON path");
    evaluate->add_option("--ablation", o.ablation, "Stages to run")
        ->check(CLI::IsMember({"clip", "scr", "scr+pc", "full"}))
        ->capture_default_str();
    evaluate->add_flag("--no-denoise", o.no_denoise, "Same as --ablation scr+pc");
    evaluate->add_option("--limit", o.limit, "Only the first N pairs");
    evaluate->add_option("--sample", o.sample, "Random subset of N pairs");
    evaluate->add_option("--seed", o.seed, "Seed for --sample")->capture_default_str();
    evaluate->add_option("--jobs,-j", o.jobs, "Parallel image workers")->capture_default_str();
    evaluate->add_flag("--check-labels", o.check_labels, "Range-check every label image before running");
    evaluate->add_option("--templates", o.templates, "Prompt template file");
    add_model_flag(evaluate, o);
    add_pipeline_flags(evaluate, o, true);

    auto* prompts = app.add_subcommand("export-prompts", "Export point prompts for a promptable mask model");
    prompts->add_option("image", o.image)->required();
    prompts->add_option("--out,-o", o.out, "PromptSet JSON path")->required();
    prompts->add_option("--k", o.k, "Extra member-patch points per mask")->capture_default_str();
    add_model_flag(prompts, o);
    add_class_flags(prompts, o);
    add_pipeline_flags(prompts, o, true);

    auto* dump = app.add_subcommand("dump", "Dump intermediate tensors for external comparison");
    dump->add_option("image", o.image)->required();
    dump->add_option("--out,-o", o.out, "Output directory")->required();
    dump->add_flag("--no-denoise", o.no_denoise, "Skip global-patch denoising");
    add_model_flag(dump, o);
    add_class_flags(dump, o);
    add_pipeline_flags(dump, o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*convert) return cmd_convert(o);
        if (*seg) return cmd_segment(o);
        if (*inspect) return cmd_inspect(o);
        if (*evaluate) return cmd_evaluate(o);
        if (*prompts) return cmd_export_prompts(o);
        if (*dump) return cmd_dump(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return kModel;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
