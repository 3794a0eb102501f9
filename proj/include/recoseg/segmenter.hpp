#pragma once

#include "recoseg/correlation.hpp"
#include "recoseg/tensor.hpp"

#include <vector>

namespace recoseg {

struct DbscanParams {
    double eps = 0.7;
    int min_samples = 3;  // neighbourhood size including the point itself
};

inline constexpr int kNoise = -1;

struct ClusterResult {
    std::vector<int> labels;  // kNoise or 0..num_clusters-1
    int num_clusters = 0;
    DbscanParams params;
};

/// Plain DBSCAN over the rows of `points`, Euclidean distance, `dist <= eps`
/// counts as a neighbour. Clusters are numbered in order of their
/// lowest-index core point; a border point joins the first cluster that
/// reaches it.
ClusterResult dbscan(const Matrix& points, const DbscanParams& params);

/// Row-normalize the patch block of `w` and run DBSCAN. Falls back to a single
/// cluster when there are fewer patches than `min_samples` or every patch is
/// density noise.
ClusterResult cluster(const CorrelationMatrix& w, const DbscanParams& params = {});

struct PrototypeStack {
    Matrix prototypes;  // [N, HW]: mean patch-block row per cluster
    std::vector<int> member_counts;
};

PrototypeStack prototypes(const CorrelationMatrix& w, const ClusterResult& clusters);

struct MaskGrid {
    std::vector<int> mask_ids;  // per patch, raster order
    GridDims grid;
    int num_masks = 0;
};

/// Patch j joins the prototype with the largest value in column j; ties go to
/// the lowest prototype index.
MaskGrid assign_masks(const PrototypeStack& stack, GridDims grid);

struct GlobalPatchReport {
    std::vector<double> scores;  // row mean minus self weight
    std::vector<int> retained;   // score <= 0
    std::vector<int> flagged;    // score > 0
};

GlobalPatchReport global_patch_filter(const CorrelationMatrix& w);

struct Segmentation {
    MaskGrid masks;
    PrototypeStack prototypes;
    ClusterResult clusters;
};

/// cluster -> prototypes -> assign_masks.
Segmentation segment(const CorrelationMatrix& w_cosine, const DbscanParams& params = {});

struct DenoisedSegmentation {
    MaskGrid masks;
    PrototypeStack prototypes;
    ClusterResult clusters;  // labels over all patches; flagged patches are kNoise
    GlobalPatchReport report;
    bool fell_back = false;  // every patch flagged: plain segmentation used
};

/// Drop global patches (scored on `w_for_denoise`), re-cluster the retained
/// cosine rows, build prototypes from retained members over all columns and
/// assign every patch, flagged ones included.
DenoisedSegmentation denoise_and_segment(const CorrelationMatrix& w_cosine, const CorrelationMatrix& w_for_denoise,
                                         const DbscanParams& params = {});

}  // namespace recoseg
