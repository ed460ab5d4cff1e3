#include "dfl/preprocess.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace dfl;

TEST_SUITE("preprocess")
{
    TEST_CASE("constant column normalizes to zero with sigma sqrt(eps)")
    {
        const Matrix w = Matrix::Constant(6, 1, 0.3);
        const Normalized n = normalize(w, 1e-8);
        CHECK(n.values.cwiseAbs().maxCoeff() < 1e-12);
        CHECK(n.stats.sigma(0) == doctest::Approx(1e-4).epsilon(1e-12));
        CHECK(n.stats.mu(0) == doctest::Approx(0.3));
    }

    TEST_CASE("symmetric and hand-computed columns with eps = 0")
    {
        Matrix a(2, 1);
        a << -1, 1;
        const Normalized na = normalize(a, 0.0);
        CHECK(na.values(0, 0) == doctest::Approx(-1.0));
        CHECK(na.values(1, 0) == doctest::Approx(1.0));

        Matrix b(3, 1);
        b << 1, 2, 3;
        const Normalized nb = normalize(b, 0.0);
        CHECK(nb.stats.mu(0) == doctest::Approx(2.0));
        CHECK(nb.stats.sigma(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
        CHECK(nb.values(0, 0) == doctest::Approx(-1.2247448714));
        CHECK(nb.values(1, 0) == doctest::Approx(0.0));
        CHECK(nb.values(2, 0) == doctest::Approx(1.2247448714));
    }

    TEST_CASE("normalize rejects short windows")
    {
        CHECK_THROWS_AS(normalize(Matrix::Zero(1, 3)), std::invalid_argument);
    }

    TEST_CASE("normalized columns have zero mean and the round trip is exact")
    {
        Rng rng(21);
        for (int rep = 0; rep < 20; ++rep) {
            const Matrix w = testutil::random_matrix(20, 5, 0.02, rng);
            const Normalized n = normalize(w, 1e-12);
            CHECK(n.values.colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
            CHECK((denormalize(n.values, n.stats) - w).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }

    TEST_CASE("denormalize arithmetic and zero prediction")
    {
        NormStats s;
        s.mu = Vector::Constant(1, 0.02);
        s.sigma = Vector::Constant(1, 0.1);
        CHECK(denormalize(Matrix::Ones(1, 1), s)(0, 0) == doctest::Approx(0.12));

        NormStats t;
        t.mu = Vector(3);
        t.mu << 0.1, -0.2, 0.3;
        t.sigma = Vector::Constant(3, 2.0);
        const Matrix out = denormalize(Matrix::Zero(4, 3), t);
        for (int h = 0; h < 4; ++h)
            CHECK((out.row(h).transpose() - t.mu).cwiseAbs().maxCoeff() == 0.0);
        CHECK_THROWS_AS(denormalize(Matrix::Zero(4, 2), t), std::invalid_argument);
    }

    TEST_CASE("decompose a constant series")
    {
        const Decomposition d = decompose(Matrix::Constant(10, 2, 1.5), {3, 7});
        CHECK((d.trend.array() - 1.5).abs().maxCoeff() < 1e-15);
        CHECK(d.residual.cwiseAbs().maxCoeff() < 1e-15);
    }

    TEST_CASE("kernel 1 gives the lagged value and first difference")
    {
        Matrix x(5, 1);
        x << 1, 4, 2, 8, 3;
        const Decomposition d = decompose(x, {1});
        // Row 0 has no predecessor and repeats itself.
        CHECK(d.trend(0, 0) == 1.0);
        for (int t = 1; t < 5; ++t) {
            CHECK(d.trend(t, 0) == x(t - 1, 0));
            CHECK(d.residual(t, 0) == x(t, 0) - x(t - 1, 0));
        }
    }

    TEST_CASE("hand example with kernel 2")
    {
        Matrix x(4, 1);
        x << 1, 2, 3, 4;
        const Decomposition d = decompose(x, {2});
        CHECK(d.trend(3, 0) == doctest::Approx(2.5));
        CHECK(d.residual(3, 0) == doctest::Approx(1.5));
        // Row 1 pads with row 0: (1 + 1) / 2.
        CHECK(d.trend(1, 0) == doctest::Approx(1.0));
    }

    TEST_CASE("reconstruction and linearity hold on random inputs")
    {
        Rng rng(8);
        for (int rep = 0; rep < 20; ++rep) {
            const Matrix x = testutil::random_matrix(20, 4, 1.0, rng);
            const Matrix y = testutil::random_matrix(20, 4, 1.0, rng);
            const std::vector<int> k{1, 5, 21};
            const Decomposition dx = decompose(x, k);
            CHECK((dx.trend + dx.residual - x).cwiseAbs().maxCoeff() <= 1e-12);
            const Decomposition dxy = decompose(2.0 * x - 3.0 * y, k);
            const Decomposition dy = decompose(y, k);
            CHECK((dxy.trend - (2.0 * dx.trend - 3.0 * dy.trend)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }

    TEST_CASE("decompose validates kernels")
    {
        CHECK_THROWS_AS(decompose(Matrix::Zero(5, 2), {}), std::invalid_argument);
        CHECK_THROWS_AS(decompose(Matrix::Zero(5, 2), {0}), std::invalid_argument);
    }
}
