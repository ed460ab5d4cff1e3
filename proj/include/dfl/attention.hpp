#pragma once

#include "dfl/core.hpp"

#include <vector>

namespace dfl {

/// Parameters of one multi-head cross-attention block.
///
/// Queries come from the transposed temporal input (N x L), lifted into the
/// d_llm query space by `input_proj` before W^Q is applied:
///   Q = (X^T input_proj) W^Q,  K = Y W^K,  V = Y W^V,  out = concat(Z_b) W^O.
struct AttnParams {
    Matrix input_proj; ///< L x d_llm
    Matrix wq;         ///< d_llm x d_llm
    Matrix wk;
    Matrix wv;
    Matrix wo;
    int heads = 1;
    /// Sample-size constant c in U = c * ceil(ln M).
    int sample_const = 5;

    [[nodiscard]] int d_llm() const { return static_cast<int>(wq.rows()); }
    [[nodiscard]] int head_dim() const { return d_llm() / heads; }
    [[nodiscard]] int lookback() const { return static_cast<int>(input_proj.rows()); }

    /// Symmetric-uniform initialization with scale 1/sqrt(d_llm).
    static AttnParams init(int lookback, int d_llm, int heads, int sample_const, Rng& rng);

    /// Throws std::invalid_argument if shapes are inconsistent or entries non-finite.
    void validate() const;

    [[nodiscard]] Eigen::Index parameter_count() const;
    /// Flattened in the order input_proj, wq, wk, wv, wo (each column-major).
    [[nodiscard]] Vector flatten() const;
    void assign(const Eigen::Ref<const Vector>& flat);
};

/// Number of sampled keys per (head, query): min(max(c * ceil(ln M), 1), M).
int sampled_key_count(int sample_const, Eigen::Index keys);

/// Frozen sampling pattern: keys[head][query] lists distinct key indices.
struct SparsePlan {
    std::vector<std::vector<std::vector<int>>> keys;
    std::uint64_t seed = 0;
    int heads = 0;
    Eigen::Index queries = 0;
    Eigen::Index key_count = 0;
};

/// Uniform sampling without replacement per (head, query).
SparsePlan make_sparse_plan(int heads, Eigen::Index queries, Eigen::Index key_count, int sample_const,
                            std::uint64_t seed);

/// Plan that keeps every key for every query.
SparsePlan full_plan(int heads, Eigen::Index queries, Eigen::Index key_count);

/// Forward pass intermediates retained for the backward pass.
struct AttnCache {
    Matrix lifted;  ///< N x d  (X^T input_proj)
    Matrix q, k, v; ///< N x d, M x d, M x d
    /// weights[b][i] aligned with plan.keys[b][i].
    std::vector<std::vector<Vector>> weights;
    Matrix concat; ///< N x d, head outputs side by side
};

/// Prob-sparse cross-attention of an L x N temporal matrix against an
/// M x d_llm embedding matrix. Returns N x d_llm.
Matrix cross_attn(const Matrix& x, const Matrix& y, const AttnParams& params, const SparsePlan& plan,
                  AttnCache* cache = nullptr);

/// Convenience overload that draws the plan from `seed`.
Matrix cross_attn(const Matrix& x, const Matrix& y, const AttnParams& params, std::uint64_t seed);

/// Dense multi-head attention computed independently of the sparse path.
Matrix dense_cross_attn(const Matrix& x, const Matrix& y, const AttnParams& params);

struct AttnGrad {
    Matrix input_proj, wq, wk, wv, wo;

    [[nodiscard]] Vector flatten() const;
};

/// Gradient of <upstream, cross_attn(x, y)> with respect to the parameters,
/// using the cache of a forward pass with the same plan.
AttnGrad cross_attn_backward(const Matrix& x, const Matrix& y, const AttnParams& params, const SparsePlan& plan,
                             const AttnCache& cache, const Matrix& upstream);

struct FusedContexts {
    Matrix market;
    Matrix stock;
};

/// C_market = CrossAttn(trend, E_macro), C_stock = CrossAttn(residual, E_stocks).
FusedContexts fuse_contexts(const Matrix& trend, const Matrix& residual, const Matrix& e_macro,
                            const Matrix& e_stocks, const AttnParams& market_params, const AttnParams& stock_params,
                            std::uint64_t seed);

} // namespace dfl
