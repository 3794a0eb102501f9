#pragma once

#include "recoseg/tensor.hpp"

#include <opencv2/core.hpp>

#include <filesystem>
#include <vector>

namespace recoseg {

/// Overlay weight of the heatmap over the photo.
inline constexpr double kHeatmapAlpha = 0.5;
/// Radius in pixels of the selected-patch marker.
inline constexpr int kMarkerRadius = 4;

/// Centre pixel of a patch under the nearest-neighbour patch mapping: the
/// midpoint of the pixel span that maps to it.
cv::Point patch_center(int row, int col, GridDims grid, int height, int width);

/// One correlation row (HW values, raster order) bilinearly upsampled to
/// `height`×`width`.
Matrix upsample_row(const std::vector<float>& row, GridDims grid, int height, int width);

/// Min-max scaled JET heatmap of `map` blended over `rgb` (CV_8UC3, RGB) and
/// a red marker at `marker`. Result is RGB.
cv::Mat heatmap_overlay(const cv::Mat& rgb, const Matrix& map, cv::Point marker);

/// Per-patch cluster ids painted with the label colormap; noise (< 0) black.
cv::Mat cluster_image(const std::vector<int>& labels, GridDims grid, int height, int width);

/// Per-patch scores min-max scaled through JET, nearest-neighbour upsampled.
cv::Mat score_image(const std::vector<double>& scores, GridDims grid, int height, int width);

/// Write an RGB CV_8UC3 image as PNG.
void write_rgb_png(const std::filesystem::path& path, const cv::Mat& rgb);

}  // namespace recoseg
