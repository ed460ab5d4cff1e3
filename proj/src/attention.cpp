#include "dfl/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dfl {

namespace {

Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, double scale, Rng& rng)
{
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i)
            m(i, j) = rng.uniform(-scale, scale);
    return m;
}

void check_inputs(const Matrix& x, const Matrix& y, const AttnParams& p)
{
    p.validate();
    if (x.rows() != p.lookback())
        throw std::invalid_argument("cross_attn: temporal input has " + std::to_string(x.rows()) +
                                    " rows, expected lookback " + std::to_string(p.lookback()));
    if (y.rows() < 1)
        throw std::invalid_argument("cross_attn: embedding matrix has no rows");
    if (y.cols() != p.d_llm())
        throw std::invalid_argument("cross_attn: embedding width does not match d_llm");
    if (!x.allFinite() || !y.allFinite())
        throw std::invalid_argument("cross_attn: non-finite input");
}

} // namespace

AttnParams AttnParams::init(int lookback, int d_llm, int heads, int sample_const, Rng& rng)
{
    if (lookback < 1 || d_llm < 1 || heads < 1 || d_llm % heads != 0)
        throw std::invalid_argument("AttnParams::init: need heads dividing d_llm");
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_llm));
    AttnParams p;
    p.heads = heads;
    p.sample_const = sample_const;
    p.input_proj = uniform_matrix(lookback, d_llm, 1.0 / std::sqrt(static_cast<double>(lookback)), rng);
    p.wq = uniform_matrix(d_llm, d_llm, scale, rng);
    p.wk = uniform_matrix(d_llm, d_llm, scale, rng);
    p.wv = uniform_matrix(d_llm, d_llm, scale, rng);
    p.wo = uniform_matrix(d_llm, d_llm, scale, rng);
    return p;
}

void AttnParams::validate() const
{
    const Eigen::Index d = wq.rows();
    if (d < 1 || wq.cols() != d || wk.rows() != d || wk.cols() != d || wv.rows() != d || wv.cols() != d ||
        wo.rows() != d || wo.cols() != d || input_proj.cols() != d || input_proj.rows() < 1)
        throw std::invalid_argument("AttnParams: inconsistent shapes");
    if (heads < 1 || d % heads != 0)
        throw std::invalid_argument("AttnParams: heads * head_dim must equal d_llm");
    if (sample_const < 1)
        throw std::invalid_argument("AttnParams: sample constant must be positive");
    if (!input_proj.allFinite() || !wq.allFinite() || !wk.allFinite() || !wv.allFinite() || !wo.allFinite())
        throw std::invalid_argument("AttnParams: non-finite parameter");
}

Eigen::Index AttnParams::parameter_count() const { return input_proj.size() + 4 * wq.size(); }

Vector AttnParams::flatten() const
{
    Vector out(parameter_count());
    Eigen::Index o = 0;
    for (const Matrix* m : {&input_proj, &wq, &wk, &wv, &wo}) {
        out.segment(o, m->size()) = m->reshaped();
        o += m->size();
    }
    return out;
}

void AttnParams::assign(const Eigen::Ref<const Vector>& flat)
{
    if (flat.size() != parameter_count())
        throw std::invalid_argument("AttnParams::assign: size mismatch");
    Eigen::Index o = 0;
    for (Matrix* m : {&input_proj, &wq, &wk, &wv, &wo}) {
        m->reshaped() = flat.segment(o, m->size());
        o += m->size();
    }
}

Vector AttnGrad::flatten() const
{
    Vector out(input_proj.size() + wq.size() + wk.size() + wv.size() + wo.size());
    Eigen::Index o = 0;
    for (const Matrix* m : {&input_proj, &wq, &wk, &wv, &wo}) {
        out.segment(o, m->size()) = m->reshaped();
        o += m->size();
    }
    return out;
}

int sampled_key_count(int sample_const, Eigen::Index keys)
{
    if (keys < 1)
        throw std::invalid_argument("sampled_key_count: no keys");
    const auto log_m = static_cast<long>(std::ceil(std::log(static_cast<double>(keys))));
    const long u = std::max<long>(static_cast<long>(sample_const) * log_m, 1);
    return static_cast<int>(std::min<long>(u, static_cast<long>(keys)));
}

SparsePlan make_sparse_plan(int heads, Eigen::Index queries, Eigen::Index key_count, int sample_const,
                            std::uint64_t seed)
{
    const int u = sampled_key_count(sample_const, key_count);
    SparsePlan plan;
    plan.seed = seed;
    plan.heads = heads;
    plan.queries = queries;
    plan.key_count = key_count;
    plan.keys.resize(static_cast<std::size_t>(heads));
    Rng rng(seed);
    std::vector<int> pool(static_cast<std::size_t>(key_count));
    for (int b = 0; b < heads; ++b) {
        auto& per_head = plan.keys[static_cast<std::size_t>(b)];
        per_head.resize(static_cast<std::size_t>(queries));
        for (Eigen::Index i = 0; i < queries; ++i) {
            // Partial Fisher-Yates: first u entries are a uniform sample without replacement.
            std::iota(pool.begin(), pool.end(), 0);
            for (int s = 0; s < u; ++s) {
                const std::size_t pick = static_cast<std::size_t>(s) + rng.below(pool.size() - static_cast<std::size_t>(s));
                std::swap(pool[static_cast<std::size_t>(s)], pool[pick]);
            }
            std::vector<int> chosen(pool.begin(), pool.begin() + u);
            std::sort(chosen.begin(), chosen.end());
            per_head[static_cast<std::size_t>(i)] = std::move(chosen);
        }
    }
    return plan;
}

SparsePlan full_plan(int heads, Eigen::Index queries, Eigen::Index key_count)
{
    SparsePlan plan;
    plan.heads = heads;
    plan.queries = queries;
    plan.key_count = key_count;
    std::vector<int> all(static_cast<std::size_t>(key_count));
    std::iota(all.begin(), all.end(), 0);
    plan.keys.assign(static_cast<std::size_t>(heads), std::vector<std::vector<int>>(static_cast<std::size_t>(queries), all));
    return plan;
}

Matrix cross_attn(const Matrix& x, const Matrix& y, const AttnParams& params, const SparsePlan& plan,
                  AttnCache* cache)
{
    check_inputs(x, y, params);
    const Eigen::Index n = x.cols();
    if (plan.heads != params.heads || plan.queries != n || plan.key_count != y.rows())
        throw std::invalid_argument("cross_attn: sparse plan does not match input shapes");

    const int db = params.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(db));
    AttnCache local;
    AttnCache& c = cache ? *cache : local;
    c.lifted = x.transpose() * params.input_proj;
    c.q = c.lifted * params.wq;
    c.k = y * params.wk;
    c.v = y * params.wv;
    c.concat = Matrix::Zero(n, params.d_llm());
    c.weights.assign(static_cast<std::size_t>(params.heads), std::vector<Vector>(static_cast<std::size_t>(n)));

    for (int b = 0; b < params.heads; ++b) {
        const Eigen::Index off = static_cast<Eigen::Index>(b) * db;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& keys = plan.keys[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
            Vector scores(static_cast<Eigen::Index>(keys.size()));
            for (std::size_t s = 0; s < keys.size(); ++s)
                scores(static_cast<Eigen::Index>(s)) =
                    c.q.row(i).segment(off, db).dot(c.k.row(keys[s]).segment(off, db)) * scale;
            const double top = scores.maxCoeff();
            Vector w = (scores.array() - top).exp();
            w /= w.sum();
            for (std::size_t s = 0; s < keys.size(); ++s)
                c.concat.row(i).segment(off, db) += w(static_cast<Eigen::Index>(s)) * c.v.row(keys[s]).segment(off, db);
            c.weights[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)] = std::move(w);
        }
    }
    Matrix out = c.concat * params.wo;
    if (!out.allFinite())
        throw std::runtime_error("cross_attn: non-finite output");
    return out;
}

Matrix cross_attn(const Matrix& x, const Matrix& y, const AttnParams& params, std::uint64_t seed)
{
    const SparsePlan plan = make_sparse_plan(params.heads, x.cols(), y.rows(), params.sample_const, seed);
    return cross_attn(x, y, params, plan);
}

Matrix dense_cross_attn(const Matrix& x, const Matrix& y, const AttnParams& params)
{
    check_inputs(x, y, params);
    const int db = params.head_dim();
    const Matrix q = (x.transpose() * params.input_proj) * params.wq;
    const Matrix k = y * params.wk;
    const Matrix v = y * params.wv;
    Matrix concat(x.cols(), params.d_llm());
    for (int b = 0; b < params.heads; ++b) {
        const Eigen::Index off = static_cast<Eigen::Index>(b) * db;
        Matrix scores = q.middleCols(off, db) * k.middleCols(off, db).transpose() / std::sqrt(static_cast<double>(db));
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
            scores.row(i).array() -= scores.row(i).maxCoeff();
            scores.row(i) = scores.row(i).array().exp().matrix();
            scores.row(i) /= scores.row(i).sum();
        }
        concat.middleCols(off, db) = scores * v.middleCols(off, db);
    }
    return concat * params.wo;
}

AttnGrad cross_attn_backward(const Matrix& x, const Matrix& y, const AttnParams& params, const SparsePlan& plan,
                             const AttnCache& cache, const Matrix& upstream)
{
    const Eigen::Index n = x.cols();
    if (upstream.rows() != n || upstream.cols() != params.d_llm())
        throw std::invalid_argument("cross_attn_backward: upstream shape mismatch");
    const int db = params.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(db));

    AttnGrad g;
    g.wo = cache.concat.transpose() * upstream;
    const Matrix d_concat = upstream * params.wo.transpose();
    Matrix dq = Matrix::Zero(cache.q.rows(), cache.q.cols());
    Matrix dk = Matrix::Zero(cache.k.rows(), cache.k.cols());
    Matrix dv = Matrix::Zero(cache.v.rows(), cache.v.cols());

    for (int b = 0; b < params.heads; ++b) {
        const Eigen::Index off = static_cast<Eigen::Index>(b) * db;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& keys = plan.keys[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
            const Vector& w = cache.weights[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
            const auto dz = d_concat.row(i).segment(off, db);
            Vector dw(w.size());
            for (std::size_t s = 0; s < keys.size(); ++s) {
                const auto si = static_cast<Eigen::Index>(s);
                dw(si) = dz.dot(cache.v.row(keys[s]).segment(off, db));
                dv.row(keys[s]).segment(off, db) += w(si) * dz;
            }
            const double mean = w.dot(dw);
            for (std::size_t s = 0; s < keys.size(); ++s) {
                const auto si = static_cast<Eigen::Index>(s);
                const double ds = w(si) * (dw(si) - mean) * scale;
                dq.row(i).segment(off, db) += ds * cache.k.row(keys[s]).segment(off, db);
                dk.row(keys[s]).segment(off, db) += ds * cache.q.row(i).segment(off, db);
            }
        }
    }
    g.wq = cache.lifted.transpose() * dq;
    g.wk = y.transpose() * dk;
    g.wv = y.transpose() * dv;
    const Matrix d_lifted = dq * params.wq.transpose();
    g.input_proj = x * d_lifted;
    return g;
}

FusedContexts fuse_contexts(const Matrix& trend, const Matrix& residual, const Matrix& e_macro,
                            const Matrix& e_stocks, const AttnParams& market_params, const AttnParams& stock_params,
                            std::uint64_t seed)
{
    if (e_macro.rows() < 1 || e_stocks.rows() < 1)
        throw std::invalid_argument("fuse_contexts: embedding matrices must be nonempty");
    return FusedContexts{cross_attn(trend, e_macro, market_params, mix_seed(seed, 1)),
                         cross_attn(residual, e_stocks, stock_params, mix_seed(seed, 2))};
}

} // namespace dfl
