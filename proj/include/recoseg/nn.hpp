#pragma once

#include "recoseg/tensor.hpp"
#include "recoseg/weights.hpp"

#include <span>
#include <vector>

namespace recoseg {

struct LayerNormParams {
    Vector weight;
    Vector bias;
};

/// Pre-norm residual attention block.
struct BlockParams {
    LayerNormParams ln_1;
    Matrix in_proj_weight;  // [3W, W], rows ordered q | k | v
    Vector in_proj_bias;
    Matrix out_proj_weight;
    Vector out_proj_bias;
    LayerNormParams ln_2;
    Matrix fc_weight;
    Vector fc_bias;
    Matrix proj_weight;
    Vector proj_bias;
};

/// Per-head projections, each [tokens, head_dim].
struct HeadProjections {
    std::vector<Matrix> q;
    std::vector<Matrix> k;
    std::vector<Matrix> v;

    int heads() const { return static_cast<int>(q.size()); }
    Eigen::Index tokens() const { return q.empty() ? 0 : q.front().rows(); }
    Eigen::Index head_dim() const { return q.empty() ? 0 : q.front().cols(); }
};

constexpr float kLayerNormEps = 1e-5f;

Matrix layer_norm(const Matrix& x, const LayerNormParams& p);
/// x · Wᵀ + b, with W stored [out, in].
Matrix linear(const Matrix& x, const Matrix& weight, const Vector& bias);
void activate(Matrix& x, Activation act);

/// ln_1 followed by the fused q/k/v projection, split into heads.
HeadProjections block_qkv(const Matrix& x, const BlockParams& block, int heads);

/// Standard scaled dot-product attention weights per head:
/// softmax(q kᵀ / √d). With `causal`, token i only sees tokens ≤ i.
std::vector<Matrix> softmax_attention(const HeadProjections& qkv, bool causal = false);

/// Per-head `attention[h] · v[h]`, concatenated over heads. A single attention
/// matrix is shared by every head.
Matrix attention_context(const HeadProjections& qkv, std::span<const Matrix> attention);

/// Remainder of a block once the attention context is known: output
/// projection, residual, ln_2, MLP, residual.
Matrix finish_block(const Matrix& x, const Matrix& context, const BlockParams& block, Activation act);

/// Full standard block.
Matrix run_block(const Matrix& x, const BlockParams& block, int heads, Activation act, bool causal = false);

/// Antialiased bicubic resampling of a positional grid (half-pixel centres,
/// a = −0.5, border weights renormalised), matching open_clip's default
/// positional-table resize.
/// `grid` holds rows in raster order, one row per cell.
Matrix bicubic_resize(const Matrix& grid, GridDims from, GridDims to);

/// Bilinear resampling of a single-channel map, half-pixel centres.
Matrix bilinear_resize(const Matrix& map, int out_rows, int out_cols);

void normalize_rows(Matrix& m, float eps = 1e-12f);

}  // namespace recoseg
