#include "recoseg/tensor.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <fstream>
#include <sstream>

namespace recoseg {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "raw tensor files are little-endian");

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw DataError("negative tensor dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape_) : shape(std::move(shape_)), data(shape_numel(shape), 0.0f) {}

Tensor::Tensor(std::vector<int64_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw DataError("tensor data size does not match shape " + shape_string());
}

int64_t Tensor::numel() const { return shape_numel(shape); }

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor tensor_from_matrix(const Matrix& m) {
    Tensor t({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), t.data.begin());
    return t;
}

Matrix matrix_from_tensor(const Tensor& t) {
    if (t.shape.size() != 2) throw DataError("expected a 2-D tensor, got " + t.shape_string());
    Matrix m(t.shape[0], t.shape[1]);
    std::copy(t.data.begin(), t.data.end(), m.data());
    return m;
}

Tensor tensor_from_stack(const std::vector<Matrix>& slices) {
    if (slices.empty()) return Tensor({0});
    const auto rows = slices.front().rows();
    const auto cols = slices.front().cols();
    Tensor t({static_cast<int64_t>(slices.size()), rows, cols});
    auto* out = t.data.data();
    for (const auto& s : slices) {
        if (s.rows() != rows || s.cols() != cols) throw DataError("stack slices differ in shape");
        out = std::copy(s.data(), s.data() + s.size(), out);
    }
    return t;
}

std::vector<Matrix> stack_from_tensor(const Tensor& t) {
    if (t.shape.size() != 3) throw DataError("expected a 3-D tensor, got " + t.shape_string());
    std::vector<Matrix> out;
    const auto rows = t.shape[1];
    const auto cols = t.shape[2];
    const auto* src = t.data.data();
    for (int64_t i = 0; i < t.shape[0]; ++i) {
        Matrix m(rows, cols);
        std::copy(src, src + rows * cols, m.data());
        src += rows * cols;
        out.push_back(std::move(m));
    }
    return out;
}

void write_raw_f32(const fs::path& file, const std::vector<float>& data) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + file.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw DataError("write failed: " + file.string());
}

std::vector<float> read_raw_f32(const fs::path& file, int64_t expected_count) {
    std::ifstream in(file, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open: " + file.string());
    const auto bytes = static_cast<int64_t>(in.tellg());
    if (bytes != expected_count * static_cast<int64_t>(sizeof(float)))
        throw DataError(file.string() + ": expected " + std::to_string(expected_count) + " float32 values, file has " +
                        std::to_string(bytes) + " bytes");
    in.seekg(0);
    std::vector<float> data(expected_count);
    in.read(reinterpret_cast<char*>(data.data()), bytes);
    return data;
}

std::string read_text_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open: " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_dump(const fs::path& dir, std::string_view name, const Tensor& t) {
    fs::create_directories(dir);
    write_raw_f32(dir / (std::string(name) + ".bin"), t.data);
    nlohmann::json meta{{"shape", t.shape}, {"dtype", "float32"}, {"layout", "row-major"}};
    std::ofstream out(dir / (std::string(name) + ".json"));
    out << meta.dump() << '\n';
    if (!out) throw DataError("cannot write dump sidecar for " + std::string(name));
}

void write_dump(const fs::path& dir, std::string_view name, const Matrix& m) {
    write_dump(dir, name, tensor_from_matrix(m));
}

Tensor read_dump(const fs::path& dir, std::string_view name) {
    const auto sidecar = dir / (std::string(name) + ".json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text_file(sidecar));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(sidecar.string() + ": " + e.what());
    }
    if (meta.value("dtype", "float32") != "float32") throw DataError(sidecar.string() + ": unsupported dtype");
    auto shape = meta.at("shape").get<std::vector<int64_t>>();
    auto data = read_raw_f32(dir / (std::string(name) + ".bin"), shape_numel(shape));
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace recoseg
