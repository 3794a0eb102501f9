#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace recoseg {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXf;
using RowVector = Eigen::RowVectorXf;

/// Input data problem: unreadable files, malformed manifests, shape errors.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Weights or model configuration problem.
class ModelError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct GridDims {
    int rows = 0;
    int cols = 0;

    int patches() const { return rows * cols; }
    bool operator==(const GridDims&) const = default;
};

/// Dense float32 tensor, row-major.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape_);
    Tensor(std::vector<int64_t> shape_, std::vector<float> data_);

    int64_t numel() const;
    int64_t dim(size_t i) const { return shape.at(i); }
    std::string shape_string() const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

Tensor tensor_from_matrix(const Matrix& m);
Matrix matrix_from_tensor(const Tensor& t);
/// Stack equally sized matrices along a new leading axis.
Tensor tensor_from_stack(const std::vector<Matrix>& slices);
std::vector<Matrix> stack_from_tensor(const Tensor& t);

// Dump format: `<name>.bin` raw little-endian float32 plus `<name>.json`
// sidecar {shape, dtype, layout}.
void write_dump(const std::filesystem::path& dir, std::string_view name, const Tensor& t);
void write_dump(const std::filesystem::path& dir, std::string_view name, const Matrix& m);
Tensor read_dump(const std::filesystem::path& dir, std::string_view name);

// Raw little-endian float32 blobs.
void write_raw_f32(const std::filesystem::path& file, const std::vector<float>& data);
std::vector<float> read_raw_f32(const std::filesystem::path& file, int64_t expected_count);

std::string read_text_file(const std::filesystem::path& file);

}  // namespace recoseg
