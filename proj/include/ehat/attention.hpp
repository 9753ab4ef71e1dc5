#pragma once

#include <vector>

#include "ehat/tensor.hpp"

namespace ehat {

enum class MaskKind { none, causal, padding, combined };

// Attention mask over an m x n score matrix, kept as an explicit allowed
// table. Materialized either as a -1e9 additive bias (pre-softmax masking)
// or as a 0/1 multiplier (post-softmax zeroing).
struct MaskSpec {
    MaskKind kind = MaskKind::none;
    Mat allow; // m x n, entries 0 or 1

    std::size_t rows() const { return allow.rows; }
    std::size_t cols() const { return allow.cols; }
    bool allowed(std::size_t i, std::size_t j) const { return allow.at(i, j) != 0.0; }

    Mat bias() const;              // 0 where allowed, -1e9 where not
    const Mat& multiplier() const { return allow; }
    std::size_t allowed_in_row(std::size_t i) const;
};

// causal: square m x m, query t sees keys <= t.
MaskSpec build_mask_causal(std::size_t m);
// padding: m x n, keys at positions >= valid_length forbidden for all rows.
MaskSpec build_mask_padding(std::size_t m, std::size_t n, std::size_t valid_length);
// combined causal+padding on a square m x m grid.
MaskSpec build_mask_combined(std::size_t m, std::size_t valid_length);
// Block-causal over the spliced [E, C] stream (2M x 2M): position t of either
// block sees positions <= t of both blocks, clipped by each block's valid
// length.
MaskSpec build_block_causal(std::size_t m_per_block, std::size_t valid_a, std::size_t valid_b);

struct MultiHeadParams {
    std::vector<Param*> w_q; // one d_model -> d_head projection per head
    std::vector<Param*> w_k;
    std::vector<Param*> w_v;
    Param* w_o = nullptr;    // (h * d_head) -> d_model
    std::size_t heads = 1;
};

struct FfnParams {
    Param* w1 = nullptr; // d_model -> d_ff
    Param* b1 = nullptr;
    Param* w2 = nullptr; // d_ff -> d_model
    Param* b2 = nullptr;
};

// softmax(Q Kt / sqrt(d) + mask bias) V. Throws ContractError when a query
// row has no allowed key.
Tensor scaled_dot_attention(Tensor q, Tensor k, Tensor v, const MaskSpec* mask);

Tensor multi_head(Graph& g, Tensor q, Tensor k, Tensor v, const MultiHeadParams& p,
                  const MaskSpec* mask);

Tensor ffn(Graph& g, Tensor x, const FfnParams& p);

// Self-attention over the spliced language stream under a block-causal (+
// padding) mask, and cross-attention from the stream to region features.
Tensor self_attend_language(Graph& g, Tensor l, const MultiHeadParams& p, const MaskSpec& mask);
Tensor cross_attend(Graph& g, Tensor l, Tensor o, const MultiHeadParams& p, const MaskSpec* mask);

} // namespace ehat
