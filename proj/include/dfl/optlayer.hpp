#pragma once

#include "dfl/core.hpp"

#include <string_view>
#include <vector>

namespace dfl {

/// Risk term of the mean-variance objective: lam * s^2 or lam * s with
/// s = ||L^T w|| = sqrt(w^T Sigma w).
enum class RiskForm { variance, stdev };

std::string_view to_string(RiskForm form);
RiskForm parse_risk_form(std::string_view text);

inline constexpr double kJitterStart = 1e-10;
/// A raw factorization is accepted only if every squared pivot exceeds this
/// fraction of trace/N.
inline constexpr double kPivotFloor = 1e-12;

struct CovEstimate {
    Matrix sigma; ///< jitter included
    Matrix chol;  ///< lower triangular, sigma = chol * chol^T
    double jitter = 0.0;
    Eigen::Index hist_rows = 0;
    Eigen::Index pred_rows = 0;

    [[nodiscard]] Eigen::Index n() const { return sigma.rows(); }
};

/// Pooled sample covariance (denominator K + h - 1) of the stacked rows of
/// `hist` and `pred`, repaired to positive definite by doubling diagonal jitter.
CovEstimate estimate_cov(const Matrix& hist, const Matrix& pred);

/// Applies the jitter rule to a symmetric matrix.
CovEstimate repair_cov(const Matrix& sigma);

/// Wraps a lower-triangular factor with positive diagonal; no jitter.
CovEstimate cov_from_chol(const Matrix& chol);

struct MVProblem {
    Vector mu;
    CovEstimate cov;
    double lam = 0.9545;
    RiskForm risk_form = RiskForm::variance;
    /// Long-only box 0 <= w <= 1 in addition to the budget.
    bool box = true;

    [[nodiscard]] Eigen::Index n() const { return mu.size(); }
    /// Throws std::invalid_argument on lam <= 0, N < 2, or inconsistent shapes.
    void validate() const;
};

struct PortfolioSolution {
    Vector w;
    double s = 0.0;
    double gamma = 0.0;
    /// Indices held at w_i = 0 by the box (an upper bound of 1 binds only as
    /// the complement of N - 1 zeros).
    std::vector<int> active;
    int iterations = 0;
    double kkt_residual = 0.0;
    RiskForm risk_form = RiskForm::variance;
    /// Risk aversion of the equivalent variance-form problem (lam for the variance form).
    double lam_variance = 0.0;

    [[nodiscard]] std::vector<int> free_set() const;
};

/// Equality-constrained variance-form optimum; ignores the box.
PortfolioSolution solve_closed_form(const MVProblem& p);

/// Variance-form optimum on the long-only simplex by primal active-set iteration.
/// Throws std::runtime_error if the iteration cap is reached.
PortfolioSolution solve_box(const MVProblem& p);

/// Standard-deviation form. With the box, bisects on the variance-form risk
/// aversion until 2 lam_v s = lam; without it, uses the frontier closed form
/// and throws std::runtime_error("unbounded") when no minimizer exists.
PortfolioSolution solve_stdev(const MVProblem& p);

/// Dispatch on risk_form and box.
PortfolioSolution solve(const MVProblem& p);

/// d w / d mu of the closed-form solution, an N x N matrix.
Matrix sensitivity_mu(const CovEstimate& cov, double lam);

/// Same restricted to the free set of a box solution; rows and columns of
/// active indices are zero.
Matrix sensitivity_mu(const CovEstimate& cov, double lam, const std::vector<int>& active);

/// Directional derivative of the variance-form weights along dSigma, on the
/// free set of `sol`.
Vector sensitivity_sigma_jvp(const MVProblem& p, const PortfolioSolution& sol, const Matrix& d_sigma);

/// Directional derivative of the variance-form weights along L -> L + eps dL.
/// Throws std::invalid_argument if dL has nonzero entries above the diagonal.
Vector sensitivity_L_jvp(const MVProblem& p, const PortfolioSolution& sol, const Matrix& d_chol);

/// Solves p (closed form, or box when p.box) and differentiates along dL.
Vector sensitivity_L_jvp(const MVProblem& p, const Matrix& d_chol);

/// Forward-mode Cholesky differential: dL with dSigma = dL L^T + L dL^T.
Matrix cholesky_jvp(const Matrix& chol, const Matrix& d_sigma);

double objective_J(const Vector& w, const Vector& mu_star, const Matrix& chol_star, double lam, RiskForm form);

struct RegretReport {
    double j_star = 0.0;
    double j_hat = 0.0;
    double delta = 0.0;
    double lam = 0.0;
    RiskForm risk_form = RiskForm::variance;
};

RegretReport regret(const Vector& w_hat, const Vector& w_star, const Vector& mu_star, const Matrix& chol_star,
                    double lam, RiskForm form);

inline constexpr double kGradRiskFloor = 1e-12;

/// Gradient of the standard-deviation objective: lam L L^T w / ||L^T w|| - mu.
/// Throws std::domain_error("degenerate risk") when ||L^T w|| <= eps.
Vector grad_J_w(const Vector& w_hat, const Vector& mu_star, const Matrix& chol_star, double lam,
                double eps = kGradRiskFloor);

/// Gradient of objective_J in either risk form.
Vector grad_objective(const Vector& w, const Vector& mu_star, const Matrix& chol_star, double lam, RiskForm form);

} // namespace dfl
