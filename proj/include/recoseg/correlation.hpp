#pragma once

#include "recoseg/backbone.hpp"
#include "recoseg/nn.hpp"
#include "recoseg/tensor.hpp"

#include <string>

namespace recoseg {

enum class CorrelationKind { cosine, inner_product };

std::string to_string(CorrelationKind kind);

/// Token-pairwise correlation averaged over heads and the q/k/v branches.
/// Holds either all HW+1 tokens ([CLS] first) or only the HW patches.
struct CorrelationMatrix {
    Matrix values;
    CorrelationKind kind = CorrelationKind::cosine;
    GridDims grid;

    bool has_cls() const { return values.rows() == grid.patches() + 1; }
    /// Patch-by-patch block with the [CLS] row and column removed.
    Matrix patch_block() const;
};

/// Lower bound on vector norms in cosine denominators.
inline constexpr double kCosineNormFloor = 1e-8;

/// Mean over heads and branches of the per-head cosine self-similarity.
CorrelationMatrix self_correlation(const HeadProjections& qkv, GridDims grid);

/// Heads concatenated per branch before one cosine per branch; mean of three.
CorrelationMatrix self_correlation_fast(const HeadProjections& qkv, GridDims grid);

/// Same averaging with raw dot products.
CorrelationMatrix inner_product_correlation(const HeadProjections& qkv, GridDims grid);

/// Unit-norm joint-space patch embeddings, [CLS] excluded.
struct PatchEmbeddings {
    Matrix rows;  // [HW, embed_dim]
    GridDims grid;
};

/// Finish the vision tower with `attention` (one matrix shared by all heads,
/// or one per head) replacing the softmax attention of the features' block.
/// Later blocks, if any, run unchanged. Then final norm, projection, [CLS]
/// dropped, rows normalized.
PatchEmbeddings forward_with_attention(const PatchFeatureSet& features, std::span<const Matrix> attention,
                                       const ModelBundle& bundle);

/// forward_with_attention with the recovered cosine matrix used as-is.
PatchEmbeddings forward_with_w(const PatchFeatureSet& features, const CorrelationMatrix& w, const ModelBundle& bundle);

/// Unmodified model: per-head softmax attention.
PatchEmbeddings forward_standard(const PatchFeatureSet& features, const ModelBundle& bundle);

}  // namespace recoseg
