#include "dfl/attention.hpp"

#include "../oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <set>

using namespace dfl;

TEST_SUITE("attention")
{
    TEST_CASE("sampled key count uses the natural log")
    {
        CHECK(sampled_key_count(5, 100) == 25);
        CHECK(sampled_key_count(5, 10) == 10);
        CHECK(sampled_key_count(1, 100) == 5);
        CHECK(sampled_key_count(5, 1) == 1);
        CHECK(sampled_key_count(2, 3) == 3);
    }

    TEST_CASE("sparse plans hold distinct in-range keys and are seeded")
    {
        const SparsePlan p = make_sparse_plan(3, 7, 100, 2, 99);
        REQUIRE(p.keys.size() == 3);
        for (const auto& head : p.keys) {
            REQUIRE(head.size() == 7);
            for (const auto& keys : head) {
                CHECK(keys.size() == 10);
                const std::set<int> uniq(keys.begin(), keys.end());
                CHECK(uniq.size() == keys.size());
                CHECK(*uniq.begin() >= 0);
                CHECK(*uniq.rbegin() < 100);
            }
        }
        CHECK(make_sparse_plan(3, 7, 100, 2, 99).keys == p.keys);
        CHECK(make_sparse_plan(3, 7, 100, 2, 98).keys != p.keys);
    }

    TEST_CASE("full sampling equals dense attention and the loop oracle")
    {
        Rng rng(12);
        for (int rep = 0; rep < 10; ++rep) {
            const int l = 6, n = 4, d = 8, heads = 2, m = 5;
            const AttnParams p = AttnParams::init(l, d, heads, 5, rng);
            const Matrix x = testutil::random_matrix(l, n, 1.0, rng);
            const Matrix y = testutil::random_matrix(m, d, 1.0, rng);
            const Matrix sparse = cross_attn(x, y, p, full_plan(heads, n, m));
            const Matrix dense = dense_cross_attn(x, y, p);
            CHECK((sparse - dense).cwiseAbs().maxCoeff() <= 1e-10);
            const Matrix loops =
                oracle::dense_attention(x.transpose() * p.input_proj, y, p.wq, p.wk, p.wv, p.wo, heads);
            CHECK((dense - loops).cwiseAbs().maxCoeff() <= 1e-10);
            // c * ceil(ln 5) = 10 >= 5 keys, so the seeded path samples everything.
            CHECK((cross_attn(x, y, p, 1234) - dense).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }

    TEST_CASE("weights are nonnegative and normalized per head and query")
    {
        Rng rng(13);
        const AttnParams p = AttnParams::init(5, 6, 3, 1, rng);
        const Matrix x = testutil::random_matrix(5, 7, 1.0, rng);
        const Matrix y = testutil::random_matrix(60, 6, 1.0, rng);
        const SparsePlan plan = make_sparse_plan(3, 7, 60, 1, 5);
        AttnCache cache;
        const Matrix out = cross_attn(x, y, p, plan, &cache);
        CHECK(out.rows() == 7);
        CHECK(out.cols() == 6);
        CHECK(all_finite(out));
        for (const auto& head : cache.weights)
            for (const auto& w : head) {
                CHECK(w.size() == 5);
                CHECK(w.minCoeff() >= 0.0);
                CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
            }
    }

    TEST_CASE("a single key receives all the weight")
    {
        Rng rng(14);
        const AttnParams p = AttnParams::init(4, 4, 2, 5, rng);
        const Matrix x = testutil::random_matrix(4, 3, 1.0, rng);
        const Matrix y = testutil::random_matrix(1, 4, 1.0, rng);
        AttnCache cache;
        const Matrix out = cross_attn(x, y, p, make_sparse_plan(2, 3, 1, 5, 7), &cache);
        const Matrix expected = (y * p.wv) * p.wo;
        for (int i = 0; i < 3; ++i)
            CHECK((out.row(i) - expected.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
    }

    TEST_CASE("output ignores keys outside the sampled set")
    {
        Rng rng(15);
        const AttnParams p = AttnParams::init(4, 4, 1, 1, rng);
        const Matrix x = testutil::random_matrix(4, 3, 1.0, rng);
        Matrix y = testutil::random_matrix(30, 4, 1.0, rng);
        const SparsePlan plan = make_sparse_plan(1, 3, 30, 1, 77);
        const Matrix before = cross_attn(x, y, p, plan);
        std::set<int> used;
        for (const auto& keys : plan.keys[0])
            used.insert(keys.begin(), keys.end());
        for (int j = 0; j < 30; ++j)
            if (!used.count(j))
                y.row(j).setConstant(1e3);
        CHECK((cross_attn(x, y, p, plan) - before).cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("backward pass matches finite differences on 5 x 5 instances")
    {
        Rng rng(16);
        for (int rep = 0; rep < 5; ++rep) {
            const int l = 5, n = 5, d = 4, heads = 2, m = 5;
            AttnParams p = AttnParams::init(l, d, heads, 1, rng);
            const Matrix x = testutil::random_matrix(l, n, 1.0, rng);
            const Matrix y = testutil::random_matrix(m, d, 1.0, rng);
            const Matrix up = testutil::random_matrix(n, d, 1.0, rng);
            const SparsePlan plan = make_sparse_plan(heads, n, m, 1, 3);
            AttnCache cache;
            (void)cross_attn(x, y, p, plan, &cache);
            const Vector analytic = cross_attn_backward(x, y, p, plan, cache, up).flatten();
            const Vector theta = p.flatten();
            auto f = [&](const Vector& t) {
                AttnParams q = p;
                q.assign(t);
                return (up.array() * cross_attn(x, y, q, plan).array()).sum();
            };
            const Vector fd = oracle::fd_gradient(f, theta, 1e-6);
            CHECK((analytic - fd).norm() / fd.norm() <= 1e-6);

            // The wq block on its own.
            const Eigen::Index off = p.input_proj.size();
            const Eigen::Index len = p.wq.size();
            CHECK((analytic.segment(off, len) - fd.segment(off, len)).norm() / fd.segment(off, len).norm() <= 1e-4);
        }
    }

    TEST_CASE("fused contexts: symmetry, determinism, and dependence on embeddings")
    {
        Rng rng(17);
        const int l = 6, n = 4, d = 6;
        AttnParams mk = AttnParams::init(l, d, 2, 5, rng);
        const AttnParams st = AttnParams::init(l, d, 2, 5, rng);
        const Matrix trend = testutil::random_matrix(l, n, 1.0, rng);
        const Matrix resid = testutil::random_matrix(l, n, 1.0, rng);
        const Matrix em = testutil::random_matrix(3, d, 1.0, rng);
        const Matrix es = testutil::random_matrix(12, d, 1.0, rng);

        const FusedContexts a = fuse_contexts(trend, resid, em, es, mk, st, 5);
        const FusedContexts b = fuse_contexts(trend, resid, em, es, mk, st, 5);
        CHECK(a.market == b.market);
        CHECK(a.stock == b.stock);

        const FusedContexts swapped = fuse_contexts(trend, resid, es, em, mk, st, 5);
        CHECK((swapped.market - a.market).cwiseAbs().maxCoeff() > 1e-6);

        AttnParams zero = mk;
        zero.input_proj.setZero();
        const FusedContexts z = fuse_contexts(Matrix::Zero(l, n), resid, em, es, zero, st, 5);
        for (int i = 1; i < n; ++i)
            CHECK((z.market.row(i) - z.market.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
    }

    TEST_CASE("parameter validation and flatten round trip")
    {
        Rng rng(18);
        AttnParams p = AttnParams::init(3, 6, 2, 5, rng);
        CHECK(p.head_dim() == 3);
        CHECK(p.parameter_count() == 3 * 6 + 4 * 36);
        AttnParams q = p;
        q.assign(p.flatten());
        CHECK(q.wo == p.wo);
        p.heads = 4;
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
        p.heads = 2;
        p.wk(0, 0) = std::nan("");
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
        const AttnParams good = AttnParams::init(3, 6, 2, 5, rng);
        CHECK_THROWS_AS(cross_attn(Matrix::Zero(4, 2), Matrix::Zero(3, 6), good, 1), std::invalid_argument);
        CHECK_THROWS_AS(cross_attn(Matrix::Zero(3, 2), Matrix::Zero(0, 6), good, 1), std::invalid_argument);
    }
}
