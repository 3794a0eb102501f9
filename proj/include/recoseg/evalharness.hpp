#pragma once

#include "recoseg/image_io.hpp"
#include "recoseg/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace recoseg {

struct DatasetManifest {
    std::filesystem::path root;
    std::string split;
    std::vector<std::string> classes;
    std::optional<int> background_index;
    int ignore_index = 255;
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;  // image, label (absolute)

    LabelSpace label_space() const { return {classes, background_index}; }
};

/// Parse and validate a dataset manifest. A relative `root` resolves against
/// the manifest's directory, pair paths against `root`. With `check_labels`
/// every label image is read and range-checked.
DatasetManifest ingest(const std::filesystem::path& manifest_path, bool check_labels = true);

/// counts(g, p): pixels with ground truth g predicted as p.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<int64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int c) : classes(c), counts(static_cast<size_t>(c) * c, 0) {}

    int64_t at(int g, int p) const { return counts[static_cast<size_t>(g) * classes + p]; }
    int64_t& at(int g, int p) { return counts[static_cast<size_t>(g) * classes + p]; }
    int64_t total() const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    bool operator==(const ConfusionMatrix&) const = default;
};

void accumulate_confusion(ConfusionMatrix& confusion, const LabelImage& pred, const LabelImage& gt, int ignore_index);
ConfusionMatrix accumulate_confusion(const LabelImage& pred, const LabelImage& gt, int classes, int ignore_index);

/// Metrics in percent. Per-class values are empty for classes without ground
/// truth pixels; those classes are left out of mIoU and mAcc.
struct MetricCore {
    std::vector<std::optional<double>> iou;
    std::vector<std::optional<double>> accuracy;
    double miou = 0;
    double pacc = 0;
    double macc = 0;
    double fwiou = 0;

    bool operator==(const MetricCore&) const = default;
};

MetricCore metrics(const ConfusionMatrix& confusion);

struct MetricReport {
    static constexpr int kSchemaVersion = 1;

    std::vector<std::string> class_names;
    MetricCore core;
    nlohmann::json config;
    double wall_seconds = 0;
    int image_count = 0;
    int failures = 0;

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
    bool operator==(const MetricReport&) const = default;
};

struct RunConfig {
    std::filesystem::path manifest;
    PipelineConfig pipeline;
    std::vector<std::string> templates;  // empty: default 80
    std::optional<int> limit;            // first N pairs
    std::optional<int> sample;           // random subset of N pairs
    uint64_t seed = 0;
    int jobs = 1;
    std::filesystem::path report_path;   // empty: not written
    bool check_labels = false;
};

/// Deterministic subset of `count` indices out of `n` (sorted).
std::vector<size_t> sample_indices(size_t n, size_t count, uint64_t seed);

/// Run the pipeline over a manifest and score it. `classes` may carry a
/// precomputed text bank for the manifest's label space. More than 1% failed
/// images fails the run.
MetricReport run_benchmark(const RunConfig& config, const ModelBundle& bundle, const TextClasses* classes = nullptr);

}  // namespace recoseg
