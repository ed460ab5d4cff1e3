#pragma once

// Reference computations that share no code with the library: central finite
// differences, an accelerated projected-gradient QP solver, a 1-D grid search,
// naive covariance, and loop-based dense attention.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Central-difference Jacobian of f at x, one column per input coordinate.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double eps)
{
    const Vector f0 = f(x);
    Matrix jac(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Vector up = x, dn = x;
        up(j) += eps;
        dn(j) -= eps;
        jac.col(j) = (f(up) - f(dn)) / (2.0 * eps);
    }
    return jac;
}

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double eps)
{
    Vector g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Vector up = x, dn = x;
        up(j) += eps;
        dn(j) -= eps;
        g(j) = (f(up) - f(dn)) / (2.0 * eps);
    }
    return g;
}

/// Euclidean projection onto {w >= 0, sum w = 1} by the sort-and-threshold rule.
inline Vector project_simplex(const Vector& v)
{
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0)
            theta = t;
    }
    return (v.array() - theta).cwiseMax(0.0).matrix();
}

/// min lam w^T S w - mu^T w on the simplex by FISTA with adaptive restart.
inline Vector qp_projected_gradient(const Vector& mu, const Matrix& sigma, double lam, int max_iter = 200000)
{
    const Eigen::Index n = mu.size();
    const double lip = 2.0 * lam * sigma.operatorNorm();
    const double step = 1.0 / lip;
    auto f = [&](const Vector& w) { return lam * w.dot(sigma * w) - mu.dot(w); };
    Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
    Vector y = w;
    double t = 1.0;
    double fw = f(w);
    for (int it = 0; it < max_iter; ++it) {
        const Vector grad = 2.0 * lam * (sigma * y) - mu;
        const Vector next = project_simplex(y - step * grad);
        const double fn = f(next);
        if (fn > fw) {
            // Restart momentum on objective increase.
            y = w;
            t = 1.0;
            continue;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / tn) * (next - w);
        const double moved = (next - w).lpNorm<Eigen::Infinity>();
        w = next;
        fw = fn;
        t = tn;
        if (moved < 1e-15)
            break;
    }
    return w;
}

/// argmin over w1 in {0, h, 2h, ..., 1} of the N = 2 objective with w = (w1, 1 - w1).
inline double grid_search_2(const Vector& mu, const Matrix& sigma, double lam, double h = 1e-6)
{
    const auto steps = static_cast<long>(std::llround(1.0 / h));
    double best = std::numeric_limits<double>::infinity();
    double arg = 0.0;
    for (long k = 0; k <= steps; ++k) {
        const double a = static_cast<double>(k) / static_cast<double>(steps);
        const double b = 1.0 - a;
        const double risk = a * a * sigma(0, 0) + 2.0 * a * b * sigma(0, 1) + b * b * sigma(1, 1);
        const double v = lam * risk - (a * mu(0) + b * mu(1));
        if (v < best) {
            best = v;
            arg = a;
        }
    }
    return arg;
}

/// Sample covariance of the rows of a stacked matrix, by explicit loops.
inline Matrix naive_cov(const Matrix& rows)
{
    const Eigen::Index m = rows.rows(), n = rows.cols();
    Vector mean = Vector::Zero(n);
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index j = 0; j < n; ++j)
            mean(j) += rows(r, j) / static_cast<double>(m);
    Matrix c = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double s = 0.0;
            for (Eigen::Index r = 0; r < m; ++r)
                s += (rows(r, i) - mean(i)) * (rows(r, j) - mean(j));
            c(i, j) = s / static_cast<double>(m - 1);
        }
    return c;
}

/// Unconstrained budget-only optimum from the Lagrangian, via a linear KKT solve.
inline Vector kkt_solve(const Vector& mu, const Matrix& sigma, double lam)
{
    const Eigen::Index n = mu.size();
    Matrix k = Matrix::Zero(n + 1, n + 1);
    k.topLeftCorner(n, n) = 2.0 * lam * sigma;
    k.block(0, n, n, 1).setOnes();
    k.block(n, 0, 1, n).setOnes();
    Vector rhs(n + 1);
    rhs.head(n) = mu;
    rhs(n) = 1.0;
    return k.fullPivLu().solve(rhs).head(n);
}

/// Multi-head attention with every key, written with scalar loops.
/// q_in is N x d (already lifted), y is M x d.
inline Matrix dense_attention(const Matrix& q_in, const Matrix& y, const Matrix& wq, const Matrix& wk,
                              const Matrix& wv, const Matrix& wo, int heads)
{
    const Matrix q = q_in * wq, k = y * wk, v = y * wv;
    const Eigen::Index n = q.rows(), m = k.rows(), d = q.cols();
    const Eigen::Index db = d / heads;
    Matrix concat = Matrix::Zero(n, d);
    for (int b = 0; b < heads; ++b)
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<double> score(static_cast<std::size_t>(m));
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < m; ++j) {
                double s = 0.0;
                for (Eigen::Index c = 0; c < db; ++c)
                    s += q(i, b * db + c) * k(j, b * db + c);
                score[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(db));
                mx = std::max(mx, score[static_cast<std::size_t>(j)]);
            }
            double z = 0.0;
            for (auto& s : score) {
                s = std::exp(s - mx);
                z += s;
            }
            for (Eigen::Index j = 0; j < m; ++j)
                for (Eigen::Index c = 0; c < db; ++c)
                    concat(i, b * db + c) += score[static_cast<std::size_t>(j)] / z * v(j, b * db + c);
        }
    return concat * wo;
}

} // namespace oracle
