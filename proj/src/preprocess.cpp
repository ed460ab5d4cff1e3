#include "dfl/preprocess.hpp"

#include <cmath>

namespace dfl {

Normalized normalize(const Matrix& window, double epsilon)
{
    if (window.rows() < 2)
        throw std::invalid_argument("normalize requires a window of at least 2 rows");
    if (!(epsilon >= 0.0))
        throw std::invalid_argument("normalize epsilon must be nonnegative");
    const auto l = static_cast<double>(window.rows());
    Normalized out;
    out.stats.epsilon = epsilon;
    out.stats.mu = window.colwise().mean().transpose();
    out.stats.sigma.resize(window.cols());
    out.values.resize(window.rows(), window.cols());
    for (Eigen::Index c = 0; c < window.cols(); ++c) {
        const auto centered = window.col(c).array() - out.stats.mu(c);
        const double var = centered.square().sum() / l;
        const double sigma = std::sqrt(var + epsilon);
        out.stats.sigma(c) = sigma;
        if (sigma > 0.0)
            out.values.col(c) = centered / sigma;
        else
            out.values.col(c).setZero(); // epsilon == 0 on a constant column
    }
    return out;
}

Matrix denormalize(const Matrix& pred, const NormStats& stats)
{
    if (pred.cols() != stats.mu.size() || pred.cols() != stats.sigma.size())
        throw std::invalid_argument("denormalize: dimension mismatch");
    Matrix out = pred;
    for (Eigen::Index c = 0; c < pred.cols(); ++c)
        out.col(c) = pred.col(c).array() * stats.sigma(c) + stats.mu(c);
    return out;
}

Decomposition decompose(const Matrix& x, const std::vector<int>& kernels)
{
    if (kernels.empty())
        throw std::invalid_argument("decompose: empty kernel list");
    for (int k : kernels)
        if (k < 1)
            throw std::invalid_argument("decompose: kernel sizes must be >= 1");
    if (x.rows() < 1)
        throw std::invalid_argument("decompose: empty input");

    const Eigen::Index len = x.rows();
    Decomposition out;
    out.kernels = kernels;
    out.trend = Matrix::Zero(len, x.cols());
    for (int k : kernels) {
        for (Eigen::Index t = 0; t < len; ++t) {
            // Trailing window [t-k, t-1], indices below 0 clamp to row 0.
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
            for (Eigen::Index l = t - k; l < t; ++l)
                acc += x.row(std::max<Eigen::Index>(l, 0));
            out.trend.row(t) += acc / static_cast<double>(k);
        }
    }
    out.trend /= static_cast<double>(kernels.size());
    out.residual = x - out.trend;
    return out;
}

} // namespace dfl
