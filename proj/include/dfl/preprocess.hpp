#pragma once

#include "dfl/core.hpp"

#include <vector>

namespace dfl {

/// Per-column statistics of one lookback window.
struct NormStats {
    Vector mu;
    /// sqrt(population variance + epsilon); never below sqrt(epsilon).
    Vector sigma;
    double epsilon = 1e-8;
};

struct Normalized {
    Matrix values;
    NormStats stats;
};

inline constexpr double kDefaultNormEpsilon = 1e-8;
inline const std::vector<int> kDefaultKernels{5, 21};

/// Instance normalization of an L x N window, column by column.
Normalized normalize(const Matrix& window, double epsilon = kDefaultNormEpsilon);

/// Inverse of normalize: out(h, i) = pred(h, i) * sigma_i + mu_i.
Matrix denormalize(const Matrix& pred, const NormStats& stats);

struct Decomposition {
    Matrix trend;
    Matrix residual;
    std::vector<int> kernels;
};

/// Multi-scale trend/residual split. For kernel k the trend at row t is the
/// mean of the k rows preceding t; rows before the window start repeat row 0.
/// The aggregate trend is the mean over kernels and residual = input - trend.
Decomposition decompose(const Matrix& normalized, const std::vector<int>& kernels = kDefaultKernels);

} // namespace dfl
