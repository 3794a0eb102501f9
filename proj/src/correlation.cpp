#include "recoseg/correlation.hpp"

#include <algorithm>

namespace recoseg {

namespace {

using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatrixD cosine_gram(const Matrix& x) {
    MatrixD u = x.cast<double>();
    for (Eigen::Index r = 0; r < u.rows(); ++r) u.row(r) /= std::max(u.row(r).norm(), kCosineNormFloor);
    return u * u.transpose();
}

MatrixD inner_gram(const Matrix& x) {
    const MatrixD u = x.cast<double>();
    return u * u.transpose();
}

void check_qkv(const HeadProjections& qkv, GridDims grid) {
    if (qkv.heads() == 0 || qkv.k.size() != qkv.q.size() || qkv.v.size() != qkv.q.size())
        throw DataError("q/k/v must carry the same non-zero number of heads");
    const auto tokens = qkv.tokens();
    if (tokens != grid.patches() + 1 && tokens != grid.patches())
        throw DataError("token count does not match the patch grid");
    for (int h = 0; h < qkv.heads(); ++h) {
        for (const Matrix* m : {&qkv.q[h], &qkv.k[h], &qkv.v[h]})
            if (m->rows() != tokens) throw DataError("heads disagree on token count");
    }
}

template <typename Gram>
CorrelationMatrix average_over_branches(const HeadProjections& qkv, GridDims grid, CorrelationKind kind, Gram gram) {
    check_qkv(qkv, grid);
    const auto t = qkv.tokens();
    MatrixD acc = MatrixD::Zero(t, t);
    for (int h = 0; h < qkv.heads(); ++h) {
        acc += gram(qkv.q[h]);
        acc += gram(qkv.k[h]);
        acc += gram(qkv.v[h]);
    }
    acc /= 3.0 * qkv.heads();
    // Symmetrize away any asymmetric rounding from the blocked product.
    acc = 0.5 * (acc + acc.transpose()).eval();
    if (kind == CorrelationKind::cosine) acc = acc.cwiseMax(-1.0).cwiseMin(1.0);
    return {acc.cast<float>(), kind, grid};
}

Matrix concat_heads(const std::vector<Matrix>& heads) {
    const auto d = heads.front().cols();
    Matrix out(heads.front().rows(), d * static_cast<Eigen::Index>(heads.size()));
    for (size_t h = 0; h < heads.size(); ++h) out.middleCols(static_cast<Eigen::Index>(h) * d, d) = heads[h];
    return out;
}

}  // namespace

std::string to_string(CorrelationKind kind) { return kind == CorrelationKind::cosine ? "cosine" : "inner_product"; }

Matrix CorrelationMatrix::patch_block() const {
    const auto hw = grid.patches();
    if (values.rows() != values.cols()) throw DataError("correlation matrix is not square");
    if (values.rows() == hw) return values;
    if (values.rows() == hw + 1) return values.bottomRightCorner(hw, hw);
    throw DataError("correlation matrix size does not match the patch grid");
}

CorrelationMatrix self_correlation(const HeadProjections& qkv, GridDims grid) {
    return average_over_branches(qkv, grid, CorrelationKind::cosine, cosine_gram);
}

CorrelationMatrix inner_product_correlation(const HeadProjections& qkv, GridDims grid) {
    return average_over_branches(qkv, grid, CorrelationKind::inner_product, inner_gram);
}

CorrelationMatrix self_correlation_fast(const HeadProjections& qkv, GridDims grid) {
    check_qkv(qkv, grid);
    HeadProjections joined;
    joined.q.push_back(concat_heads(qkv.q));
    joined.k.push_back(concat_heads(qkv.k));
    joined.v.push_back(concat_heads(qkv.v));
    return self_correlation(joined, grid);
}

PatchEmbeddings forward_with_attention(const PatchFeatureSet& features, std::span<const Matrix> attention,
                                       const ModelBundle& bundle) {
    const auto& cfg = bundle.config;
    const auto qkv = project_qkv(features, bundle);
    const auto& blocks = bundle.vision.blocks;
    Matrix x = finish_block(features.tokens, attention_context(qkv, attention), blocks[features.next_block], cfg.activation);
    for (size_t i = static_cast<size_t>(features.next_block) + 1; i < blocks.size(); ++i)
        x = run_block(x, blocks[i], cfg.vision_heads, cfg.activation);
    Matrix projected = layer_norm(x.bottomRows(features.grid.patches()), bundle.vision.ln_post) * bundle.vision.proj;
    normalize_rows(projected);
    return {std::move(projected), features.grid};
}

PatchEmbeddings forward_with_w(const PatchFeatureSet& features, const CorrelationMatrix& w, const ModelBundle& bundle) {
    if (w.kind != CorrelationKind::cosine)
        throw DataError("forward_with_w needs a cosine correlation matrix, got " + to_string(w.kind));
    if (!w.has_cls() || w.grid != features.grid) throw DataError("correlation matrix must cover all HW+1 tokens");
    return forward_with_attention(features, std::span<const Matrix>(&w.values, 1), bundle);
}

PatchEmbeddings forward_standard(const PatchFeatureSet& features, const ModelBundle& bundle) {
    const auto attn = softmax_attention(project_qkv(features, bundle));
    return forward_with_attention(features, attn, bundle);
}

}  // namespace recoseg
