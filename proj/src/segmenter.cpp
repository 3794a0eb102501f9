#include "recoseg/segmenter.hpp"

#include <deque>

namespace recoseg {

namespace {

Matrix normalized_rows(Matrix m) {
    normalize_rows(m);
    return m;
}

// Fewer points than min_samples, or nothing dense enough: one cluster.
void apply_fallback(ClusterResult& result) {
    const bool too_small = static_cast<int>(result.labels.size()) < result.params.min_samples;
    if (too_small || result.num_clusters == 0) {
        std::fill(result.labels.begin(), result.labels.end(), 0);
        result.num_clusters = result.labels.empty() ? 0 : 1;
    }
}

}  // namespace

ClusterResult dbscan(const Matrix& points, const DbscanParams& params) {
    if (params.eps < 0 || params.min_samples < 1) throw DataError("invalid DBSCAN parameters");
    const auto n = points.rows();
    const double eps2 = params.eps * params.eps;

    std::vector<std::vector<int>> neighbours(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d2 = (points.row(i).cast<double>() - points.row(j).cast<double>()).squaredNorm();
            if (d2 <= eps2) neighbours[i].push_back(static_cast<int>(j));
        }
    }

    ClusterResult result;
    result.params = params;
    result.labels.assign(n, kNoise);
    std::vector<char> core(n);
    for (Eigen::Index i = 0; i < n; ++i) core[i] = static_cast<int>(neighbours[i].size()) >= params.min_samples;

    int next = 0;
    std::deque<int> queue;
    for (Eigen::Index seed = 0; seed < n; ++seed) {
        if (result.labels[seed] != kNoise || !core[seed]) continue;
        const int label = next++;
        result.labels[seed] = label;
        queue.assign(1, static_cast<int>(seed));
        while (!queue.empty()) {
            const int p = queue.front();
            queue.pop_front();
            for (int q : neighbours[p]) {
                if (result.labels[q] != kNoise) continue;
                result.labels[q] = label;
                if (core[q]) queue.push_back(q);
            }
        }
    }
    result.num_clusters = next;
    return result;
}

ClusterResult cluster(const CorrelationMatrix& w, const DbscanParams& params) {
    auto result = dbscan(normalized_rows(w.patch_block()), params);
    apply_fallback(result);
    return result;
}

PrototypeStack prototypes(const CorrelationMatrix& w, const ClusterResult& clusters) {
    if (clusters.num_clusters <= 0) throw DataError("cannot build prototypes without clusters");
    const Matrix block = w.patch_block();
    if (static_cast<Eigen::Index>(clusters.labels.size()) != block.rows())
        throw DataError("cluster labels do not match the correlation matrix");
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters.num_clusters, block.cols());
    PrototypeStack out;
    out.member_counts.assign(clusters.num_clusters, 0);
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
        const int label = clusters.labels[i];
        if (label == kNoise) continue;
        if (label < 0 || label >= clusters.num_clusters) throw DataError("cluster label out of range");
        sums.row(label) += block.row(i).cast<double>();
        ++out.member_counts[label];
    }
    for (int k = 0; k < clusters.num_clusters; ++k) {
        if (out.member_counts[k] == 0) throw DataError("cluster " + std::to_string(k) + " has no members");
        sums.row(k) /= out.member_counts[k];
    }
    out.prototypes = sums.cast<float>();
    return out;
}

MaskGrid assign_masks(const PrototypeStack& stack, GridDims grid) {
    const auto& p = stack.prototypes;
    if (p.rows() < 1) throw DataError("no prototypes to assign");
    if (p.cols() != grid.patches()) throw DataError("prototype length does not match the patch grid");
    MaskGrid out;
    out.grid = grid;
    out.num_masks = static_cast<int>(p.rows());
    out.mask_ids.resize(grid.patches());
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < p.rows(); ++k)
            if (p(k, j) > p(best, j)) best = k;
        out.mask_ids[j] = static_cast<int>(best);
    }
    return out;
}

GlobalPatchReport global_patch_filter(const CorrelationMatrix& w) {
    const Matrix block = w.patch_block();
    const auto hw = block.rows();
    GlobalPatchReport report;
    report.scores.resize(hw);
    for (Eigen::Index i = 0; i < hw; ++i) {
        const double mean = block.row(i).cast<double>().sum() / static_cast<double>(hw);
        report.scores[i] = mean - static_cast<double>(block(i, i));
        (report.scores[i] > 0 ? report.flagged : report.retained).push_back(static_cast<int>(i));
    }
    return report;
}

Segmentation segment(const CorrelationMatrix& w_cosine, const DbscanParams& params) {
    Segmentation s;
    s.clusters = cluster(w_cosine, params);
    s.prototypes = prototypes(w_cosine, s.clusters);
    s.masks = assign_masks(s.prototypes, w_cosine.grid);
    return s;
}

DenoisedSegmentation denoise_and_segment(const CorrelationMatrix& w_cosine, const CorrelationMatrix& w_for_denoise,
                                         const DbscanParams& params) {
    if (w_cosine.grid != w_for_denoise.grid) throw DataError("correlation matrices cover different grids");
    DenoisedSegmentation out;
    out.report = global_patch_filter(w_for_denoise);
    if (out.report.retained.empty()) {
        auto plain = segment(w_cosine, params);
        out.masks = std::move(plain.masks);
        out.prototypes = std::move(plain.prototypes);
        out.clusters = std::move(plain.clusters);
        out.fell_back = true;
        return out;
    }

    const Matrix block = w_cosine.patch_block();
    const auto& kept = out.report.retained;
    Matrix rows(static_cast<Eigen::Index>(kept.size()), block.cols());
    for (size_t r = 0; r < kept.size(); ++r) rows.row(static_cast<Eigen::Index>(r)) = block.row(kept[r]);
    auto sub = dbscan(normalized_rows(std::move(rows)), params);
    apply_fallback(sub);

    out.clusters.params = params;
    out.clusters.num_clusters = sub.num_clusters;
    out.clusters.labels.assign(block.rows(), kNoise);
    for (size_t r = 0; r < kept.size(); ++r) out.clusters.labels[kept[r]] = sub.labels[r];

    out.prototypes = prototypes(w_cosine, out.clusters);
    out.masks = assign_masks(out.prototypes, w_cosine.grid);
    return out;
}

}  // namespace recoseg
