#include "recoseg/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace recoseg {

Matrix layer_norm(const Matrix& x, const LayerNormParams& p) {
    Matrix out(x.rows(), x.cols());
    const auto n = static_cast<float>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        const float mean = row.sum() / n;
        const float var = (row.array() - mean).square().sum() / n;
        const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
        out.row(r) = ((row.array() - mean) * inv) * p.weight.transpose().array() + p.bias.transpose().array();
    }
    return out;
}

Matrix linear(const Matrix& x, const Matrix& weight, const Vector& bias) {
    Matrix out = x * weight.transpose();
    out.rowwise() += bias.transpose();
    return out;
}

void activate(Matrix& x, Activation act) {
    if (act == Activation::quick_gelu) {
        x = x.array() * (1.0f / (1.0f + (-1.702f * x.array()).exp()));
    } else {
        x = x.unaryExpr([](float v) { return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f)); });
    }
}

HeadProjections block_qkv(const Matrix& x, const BlockParams& block, int heads) {
    const Matrix h = layer_norm(x, block.ln_1);
    const Matrix qkv = linear(h, block.in_proj_weight, block.in_proj_bias);
    const auto width = qkv.cols() / 3;
    const auto head_dim = width / heads;
    HeadProjections out;
    for (int i = 0; i < heads; ++i) {
        out.q.emplace_back(qkv.middleCols(i * head_dim, head_dim));
        out.k.emplace_back(qkv.middleCols(width + i * head_dim, head_dim));
        out.v.emplace_back(qkv.middleCols(2 * width + i * head_dim, head_dim));
    }
    return out;
}

std::vector<Matrix> softmax_attention(const HeadProjections& qkv, bool causal) {
    std::vector<Matrix> out;
    const float scale = 1.0f / std::sqrt(static_cast<float>(qkv.head_dim()));
    for (int h = 0; h < qkv.heads(); ++h) {
        Matrix logits = (qkv.q[h] * scale) * qkv.k[h].transpose();
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const Eigen::Index visible = causal ? r + 1 : logits.cols();
            auto row = logits.row(r);
            const float mx = row.head(visible).maxCoeff();
            row.head(visible) = (row.head(visible).array() - mx).exp();
            row.head(visible) /= row.head(visible).sum();
            if (visible < logits.cols()) row.tail(logits.cols() - visible).setZero();
        }
        out.push_back(std::move(logits));
    }
    return out;
}

Matrix attention_context(const HeadProjections& qkv, std::span<const Matrix> attention) {
    if (attention.size() != 1 && static_cast<int>(attention.size()) != qkv.heads())
        throw DataError("attention count does not match head count");
    const auto d = qkv.head_dim();
    Matrix out(qkv.tokens(), d * qkv.heads());
    for (int h = 0; h < qkv.heads(); ++h) {
        const auto& a = attention.size() == 1 ? attention[0] : attention[h];
        if (a.rows() != qkv.tokens() || a.cols() != qkv.tokens())
            throw DataError("attention matrix does not match token count");
        out.middleCols(h * d, d).noalias() = a * qkv.v[h];
    }
    return out;
}

Matrix finish_block(const Matrix& x, const Matrix& context, const BlockParams& block, Activation act) {
    Matrix y = x + linear(context, block.out_proj_weight, block.out_proj_bias);
    Matrix hidden = linear(layer_norm(y, block.ln_2), block.fc_weight, block.fc_bias);
    activate(hidden, act);
    y += linear(hidden, block.proj_weight, block.proj_bias);
    return y;
}

Matrix run_block(const Matrix& x, const BlockParams& block, int heads, Activation act, bool causal) {
    const auto qkv = block_qkv(x, block, heads);
    const auto attn = softmax_attention(qkv, causal);
    return finish_block(x, attention_context(qkv, attn), block, act);
}

namespace {

// Antialiased bicubic as in torch interpolate(antialias=True): the kernel
// widens when shrinking and border weights are renormalised.
constexpr double kCubicA = -0.5;

double cubic(double x) {
    x = std::abs(x);
    if (x < 1) return ((kCubicA + 2) * x - (kCubicA + 3)) * x * x + 1;
    if (x < 2) return (((x - 5) * x + 8) * x - 4) * kCubicA;
    return 0;
}

struct Taps {
    std::vector<int> index;
    std::vector<float> weight;
};

Taps cubic_taps(int out_index, int in_size, int out_size) {
    const double scale = static_cast<double>(in_size) / out_size;
    const double support = scale >= 1 ? 2 * scale : 2.0;
    const double invscale = scale >= 1 ? 1 / scale : 1.0;
    const double center = scale * (out_index + 0.5);
    const int lo = std::max(static_cast<int>(center - support + 0.5), 0);
    const int hi = std::min(static_cast<int>(center + support + 0.5), in_size);
    Taps taps;
    double total = 0;
    std::vector<double> w;
    for (int j = lo; j < hi; ++j) {
        w.push_back(cubic((j - center + 0.5) * invscale));
        total += w.back();
    }
    for (int j = lo; j < hi; ++j) {
        taps.index.push_back(j);
        taps.weight.push_back(static_cast<float>(total != 0 ? w[j - lo] / total : 0));
    }
    return taps;
}

}  // namespace

Matrix bicubic_resize(const Matrix& grid, GridDims from, GridDims to) {
    if (grid.rows() != from.patches()) throw DataError("grid rows do not match source dims");
    if (from == to) return grid;
    // Horizontal pass, then vertical.
    Matrix horiz(static_cast<Eigen::Index>(from.rows) * to.cols, grid.cols());
    for (int x = 0; x < to.cols; ++x) {
        const auto tx = cubic_taps(x, from.cols, to.cols);
        for (int y = 0; y < from.rows; ++y) {
            auto dst = horiz.row(static_cast<Eigen::Index>(y) * to.cols + x);
            dst.setZero();
            for (size_t k = 0; k < tx.index.size(); ++k)
                dst += tx.weight[k] * grid.row(static_cast<Eigen::Index>(y) * from.cols + tx.index[k]);
        }
    }
    Matrix out(to.patches(), grid.cols());
    for (int y = 0; y < to.rows; ++y) {
        const auto ty = cubic_taps(y, from.rows, to.rows);
        for (int x = 0; x < to.cols; ++x) {
            auto dst = out.row(static_cast<Eigen::Index>(y) * to.cols + x);
            dst.setZero();
            for (size_t k = 0; k < ty.index.size(); ++k)
                dst += ty.weight[k] * horiz.row(static_cast<Eigen::Index>(ty.index[k]) * to.cols + x);
        }
    }
    return out;
}

Matrix bilinear_resize(const Matrix& map, int out_rows, int out_cols) {
    Matrix out(out_rows, out_cols);
    const auto in_rows = static_cast<int>(map.rows());
    const auto in_cols = static_cast<int>(map.cols());
    auto source = [](int o, int in, int outn, int& i0, int& i1, float& t) {
        float real = (static_cast<float>(o) + 0.5f) * static_cast<float>(in) / static_cast<float>(outn) - 0.5f;
        real = std::max(real, 0.0f);
        i0 = std::min(static_cast<int>(real), in - 1);
        i1 = std::min(i0 + 1, in - 1);
        t = real - static_cast<float>(i0);
    };
    for (int y = 0; y < out_rows; ++y) {
        int y0, y1;
        float ty;
        source(y, in_rows, out_rows, y0, y1, ty);
        for (int x = 0; x < out_cols; ++x) {
            int x0, x1;
            float tx;
            source(x, in_cols, out_cols, x0, x1, tx);
            const float top = (1 - tx) * map(y0, x0) + tx * map(y0, x1);
            const float bottom = (1 - tx) * map(y1, x0) + tx * map(y1, x1);
            out(y, x) = (1 - ty) * top + ty * bottom;
        }
    }
    return out;
}

void normalize_rows(Matrix& m, float eps) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= std::max(m.row(r).norm(), eps);
}

}  // namespace recoseg
