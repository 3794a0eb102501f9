#include "recoseg/evalharness.hpp"

#include "recoseg/templates.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace recoseg {

namespace fs = std::filesystem;
using json = nlohmann::json;

DatasetManifest ingest(const fs::path& manifest_path, bool check_labels) {
    json j;
    try {
        j = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        fs::path root = j.value("root", std::string("."));
        m.root = root.is_absolute() ? root : manifest_path.parent_path() / root;
        m.split = j.value("split", std::string());
        m.classes = j.at("classes").get<std::vector<std::string>>();
        if (j.contains("background_index") && !j["background_index"].is_null())
            m.background_index = j["background_index"].get<int>();
        m.ignore_index = j.value("ignore_index", 255);
        for (const auto& pair : j.at("pairs")) {
            if (!pair.is_array() || pair.size() != 2) throw DataError(manifest_path.string() + ": pairs must be [image, label]");
            m.pairs.emplace_back(m.root / pair[0].get<std::string>(), m.root / pair[1].get<std::string>());
        }
    } catch (const json::exception& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    }
    if (m.classes.empty()) throw DataError(manifest_path.string() + ": no classes");
    if (m.pairs.empty()) throw DataError(manifest_path.string() + ": no image/label pairs");
    const int c = static_cast<int>(m.classes.size());
    if (m.background_index && (*m.background_index < 0 || *m.background_index >= c))
        throw DataError(manifest_path.string() + ": background_index outside the class list");
    if (m.ignore_index >= 0 && m.ignore_index < c)
        throw DataError(manifest_path.string() + ": ignore_index collides with a class index");

    for (const auto& [image, label] : m.pairs) {
        if (!fs::exists(image)) throw DataError("missing image: " + image.string());
        if (!fs::exists(label)) throw DataError("missing label: " + label.string());
        if (!check_labels) continue;
        const auto gt = read_label_png(label);
        for (auto v : gt.values) {
            if ((v < 0 || v >= c) && v != m.ignore_index)
                throw DataError("label value " + std::to_string(v) + " outside [0, " + std::to_string(c) +
                                ") and not ignore in " + label.string());
        }
    }
    return m;
}

int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), int64_t{0}); }

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.classes != classes) throw DataError("cannot merge confusion matrices of different sizes");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    return *this;
}

void accumulate_confusion(ConfusionMatrix& confusion, const LabelImage& pred, const LabelImage& gt, int ignore_index) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw DataError("prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                        " does not match ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
    const int c = confusion.classes;
    for (size_t i = 0; i < gt.values.size(); ++i) {
        const int g = gt.values[i];
        if (g == ignore_index) continue;
        const int p = pred.values[i];
        if (g < 0 || g >= c) throw DataError("ground-truth label " + std::to_string(g) + " out of range");
        if (p < 0 || p >= c) throw DataError("predicted label " + std::to_string(p) + " out of range");
        ++confusion.at(g, p);
    }
}

ConfusionMatrix accumulate_confusion(const LabelImage& pred, const LabelImage& gt, int classes, int ignore_index) {
    ConfusionMatrix m(classes);
    accumulate_confusion(m, pred, gt, ignore_index);
    return m;
}

MetricCore metrics(const ConfusionMatrix& confusion) {
    const int c = confusion.classes;
    const auto total = confusion.total();
    if (total == 0) throw DataError("confusion matrix is empty");
    std::vector<int64_t> gt(c, 0), pred(c, 0);
    int64_t trace = 0;
    for (int g = 0; g < c; ++g) {
        for (int p = 0; p < c; ++p) {
            gt[g] += confusion.at(g, p);
            pred[p] += confusion.at(g, p);
        }
        trace += confusion.at(g, g);
    }
    MetricCore m;
    m.iou.resize(c);
    m.accuracy.resize(c);
    double iou_sum = 0, acc_sum = 0;
    int present = 0;
    for (int k = 0; k < c; ++k) {
        if (gt[k] == 0) continue;
        const double tp = static_cast<double>(confusion.at(k, k));
        const double iou = tp / static_cast<double>(gt[k] + pred[k] - confusion.at(k, k));
        const double acc = tp / static_cast<double>(gt[k]);
        m.iou[k] = 100.0 * iou;
        m.accuracy[k] = 100.0 * acc;
        iou_sum += iou;
        acc_sum += acc;
        m.fwiou += static_cast<double>(gt[k]) / static_cast<double>(total) * iou;
        ++present;
    }
    m.miou = 100.0 * iou_sum / present;
    m.macc = 100.0 * acc_sum / present;
    m.pacc = 100.0 * static_cast<double>(trace) / static_cast<double>(total);
    m.fwiou *= 100.0;
    return m;
}

namespace {

json optional_list(const std::vector<std::optional<double>>& v) {
    json out = json::array();
    for (const auto& x : v) out.push_back(x ? json(*x) : json(nullptr));
    return out;
}

std::vector<std::optional<double>> optional_list(const json& j) {
    std::vector<std::optional<double>> out;
    for (const auto& x : j) out.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
    return out;
}

}  // namespace

json MetricReport::to_json() const {
    return {{"schema_version", kSchemaVersion},
            {"classes", class_names},
            {"metrics",
             {{"mIoU", core.miou},
              {"pAcc", core.pacc},
              {"mAcc", core.macc},
              {"fwIoU", core.fwiou},
              {"per_class_iou", optional_list(core.iou)},
              {"per_class_acc", optional_list(core.accuracy)}}},
            {"config", config},
            {"timing", {{"wall_seconds", wall_seconds}, {"images", image_count}, {"failures", failures}}}};
}

MetricReport MetricReport::from_json(const json& j) {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw DataError("unsupported report schema version");
    MetricReport r;
    r.class_names = j.at("classes").get<std::vector<std::string>>();
    const auto& m = j.at("metrics");
    r.core.miou = m.at("mIoU");
    r.core.pacc = m.at("pAcc");
    r.core.macc = m.at("mAcc");
    r.core.fwiou = m.at("fwIoU");
    r.core.iou = optional_list(m.at("per_class_iou"));
    r.core.accuracy = optional_list(m.at("per_class_acc"));
    r.config = j.at("config");
    const auto& t = j.at("timing");
    r.wall_seconds = t.at("wall_seconds");
    r.image_count = t.at("images");
    r.failures = t.at("failures");
    return r;
}

std::vector<size_t> sample_indices(size_t n, size_t count, uint64_t seed) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    count = std::min(count, n);
    // Partial Fisher-Yates with an explicit engine so the subset does not
    // depend on the standard library's shuffle.
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < count; ++i) {
        const size_t j = i + static_cast<size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

MetricReport run_benchmark(const RunConfig& config, const ModelBundle& bundle, const TextClasses* classes) {
    const auto started = std::chrono::steady_clock::now();
    const auto manifest = ingest(config.manifest, config.check_labels);

    std::vector<size_t> order;
    if (config.sample) {
        order = sample_indices(manifest.pairs.size(), static_cast<size_t>(*config.sample), config.seed);
    } else {
        order.resize(manifest.pairs.size());
        std::iota(order.begin(), order.end(), size_t{0});
    }
    if (config.limit) order.resize(std::min(order.size(), static_cast<size_t>(std::max(0, *config.limit))));
    if (order.empty()) throw DataError("benchmark selection is empty");

    TextClasses own;
    if (!classes) {
        own = build_text_classes(manifest.label_space(), config.pipeline.background,
                                 config.templates.empty() ? default_templates() : config.templates, bundle);
        classes = &own;
    }
    if (classes->labels.class_names != manifest.classes) throw DataError("text bank was built for another label space");

    const int c = static_cast<int>(manifest.classes.size());
    const int jobs = std::max(1, config.jobs);
    std::vector<ConfusionMatrix> partial(jobs, ConfusionMatrix(c));
    std::atomic<size_t> next{0};
    std::atomic<int> failures{0};
    std::mutex log_mutex;

    auto worker = [&](int id) {
        for (size_t i = next++; i < order.size(); i = next++) {
            const auto& [image_path, label_path] = manifest.pairs[order[i]];
            try {
                const auto gt = read_label_png(label_path);
                const auto rgb = read_rgb_image(image_path);
                const auto result = run_pipeline(rgb, bundle, *classes, config.pipeline, std::make_pair(gt.height, gt.width));
                ConfusionMatrix local(c);
                accumulate_confusion(local, result.map.labels, gt, manifest.ignore_index);
                partial[id] += local;
            } catch (const std::exception& e) {
                ++failures;
                std::lock_guard lock(log_mutex);
                std::cerr << "failed: " << image_path.string() << ": " << e.what() << '\n';
            }
        }
    };
    if (jobs == 1) {
        worker(0);
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker, t);
        for (auto& t : threads) t.join();
    }

    ConfusionMatrix total(c);
    for (const auto& p : partial) total += p;
    const int images = static_cast<int>(order.size());
    if (failures * 100 > images)
        throw DataError(std::to_string(failures.load()) + " of " + std::to_string(images) + " images failed");

    MetricReport report;
    report.class_names = manifest.classes;
    report.core = metrics(total);
    report.config = config.pipeline.to_json();
    report.config["manifest"] = config.manifest.filename().string();
    report.config["split"] = manifest.split;
    if (config.sample) {
        report.config["sample"] = *config.sample;
        report.config["seed"] = config.seed;
    }
    if (config.limit) report.config["limit"] = *config.limit;
    report.config["templates"] = classes->bank.template_count;
    report.image_count = images;
    report.failures = failures;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (!config.report_path.empty()) {
        if (config.report_path.has_parent_path()) fs::create_directories(config.report_path.parent_path());
        std::ofstream out(config.report_path);
        out << report.to_json().dump(2) << '\n';
        if (!out) throw DataError("cannot write report " + config.report_path.string());
    }
    return report;
}

}  // namespace recoseg
