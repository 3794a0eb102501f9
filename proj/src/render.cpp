#include "recoseg/render.hpp"

#include "recoseg/classifier.hpp"
#include "recoseg/image_io.hpp"
#include "recoseg/nn.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>

namespace recoseg {

namespace {

// First and last pixel index whose nearest patch is `p`.
std::pair<int, int> pixel_span(int p, int cells, int pixels) {
    int lo = static_cast<int>((static_cast<int64_t>(p) * pixels + cells - 1) / cells);
    int hi = static_cast<int>((static_cast<int64_t>(p + 1) * pixels + cells - 1) / cells) - 1;
    return {lo, std::max(lo, hi)};
}

cv::Mat jet(const Matrix& map) {
    const float lo = map.minCoeff();
    const float hi = map.maxCoeff();
    const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
    cv::Mat gray(static_cast<int>(map.rows()), static_cast<int>(map.cols()), CV_8UC1);
    for (int y = 0; y < gray.rows; ++y)
        for (int x = 0; x < gray.cols; ++x)
            gray.at<uint8_t>(y, x) = cv::saturate_cast<uint8_t>(std::lround((map(y, x) - lo) * scale));
    cv::Mat bgr, rgb;
    cv::applyColorMap(gray, bgr, cv::COLORMAP_JET);
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

}  // namespace

cv::Point patch_center(int row, int col, GridDims grid, int height, int width) {
    if (row < 0 || row >= grid.rows || col < 0 || col >= grid.cols)
        throw DataError("patch " + std::to_string(row) + "," + std::to_string(col) + " outside the " +
                        std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " grid");
    const auto [y0, y1] = pixel_span(row, grid.rows, height);
    const auto [x0, x1] = pixel_span(col, grid.cols, width);
    return {(x0 + x1) / 2, (y0 + y1) / 2};
}

Matrix upsample_row(const std::vector<float>& row, GridDims grid, int height, int width) {
    if (static_cast<int>(row.size()) != grid.patches()) throw DataError("correlation row does not match the grid");
    Matrix cells(grid.rows, grid.cols);
    for (int i = 0; i < grid.patches(); ++i) cells(i / grid.cols, i % grid.cols) = row[i];
    return bilinear_resize(cells, height, width);
}

cv::Mat heatmap_overlay(const cv::Mat& rgb, const Matrix& map, cv::Point marker) {
    if (rgb.type() != CV_8UC3 || rgb.rows != map.rows() || rgb.cols != map.cols())
        throw DataError("heatmap and image sizes differ");
    cv::Mat out;
    cv::addWeighted(jet(map), kHeatmapAlpha, rgb, 1.0 - kHeatmapAlpha, 0.0, out);
    cv::circle(out, marker, kMarkerRadius, cv::Scalar(255, 0, 0), cv::FILLED, cv::LINE_8);
    return out;
}

cv::Mat cluster_image(const std::vector<int>& labels, GridDims grid, int height, int width) {
    std::vector<int> shifted(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) shifted[i] = labels[i] < 0 ? 0 : labels[i] + 1;
    const auto painted = upsample_patch_labels(shifted, grid, height, width);
    cv::Mat out(height, width, CV_8UC3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto c = label_color(painted.at(y, x));
            out.at<cv::Vec3b>(y, x) = {c[0], c[1], c[2]};
        }
    }
    return out;
}

cv::Mat score_image(const std::vector<double>& scores, GridDims grid, int height, int width) {
    if (static_cast<int>(scores.size()) != grid.patches()) throw DataError("score vector does not match the grid");
    Matrix map(height, width);
    for (int y = 0; y < height; ++y) {
        const int r = patch_row_of(y, height, grid.rows);
        for (int x = 0; x < width; ++x)
            map(y, x) = static_cast<float>(scores[r * grid.cols + patch_col_of(x, width, grid.cols)]);
    }
    return jet(map);
}

void write_rgb_png(const std::filesystem::path& path, const cv::Mat& rgb) {
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write " + path.string());
}

}  // namespace recoseg
