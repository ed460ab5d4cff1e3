#include "dfl/verify.hpp"

#include "dfl/backtest.hpp"
#include "dfl/forecaster.hpp"
#include "dfl/optlayer.hpp"
#include "dfl/training.hpp"

#include <algorithm>
#include <cmath>

namespace dfl {

namespace {

Vector random_vector(Eigen::Index n, double scale, Rng& rng)
{
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = scale * rng.normal();
    return v;
}

MVProblem random_problem(Eigen::Index n, Rng& rng)
{
    MVProblem p;
    p.mu = random_vector(n, 0.1, rng);
    p.cov = repair_cov(random_spd(n, rng));
    p.lam = kLambdaGrid[rng.below(kLambdaGrid.size())];
    p.box = false;
    return p;
}

VerifyCheck finish(std::string name, int instances, double worst, double tol)
{
    return {std::move(name), instances, worst, tol, worst <= tol};
}

} // namespace

VerifyFault parse_verify_fault(std::string_view text)
{
    if (text.empty() || text == "none")
        return VerifyFault::none;
    if (text == "sensitivity_mu")
        return VerifyFault::sensitivity_mu;
    if (text == "sensitivity_L_jvp")
        return VerifyFault::sensitivity_L_jvp;
    if (text == "grad_J_w")
        return VerifyFault::grad_J_w;
    if (text == "grad_hybrid_theta")
        return VerifyFault::grad_hybrid_theta;
    throw std::invalid_argument("unknown fault '" + std::string(text) + "'");
}

Matrix random_spd(Eigen::Index n, Rng& rng)
{
    Matrix a(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            a(i, j) = rng.normal();
    Matrix s = a * a.transpose() / static_cast<double>(n);
    s.diagonal().array() += 0.1;
    return 0.5 * (s + s.transpose());
}

double relative_error(const Matrix& a, const Matrix& b)
{
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

VerifyCheck verify_sensitivity_mu(const VerifyOptions& opt)
{
    Rng rng(mix_seed(opt.seed, 1));
    double worst = 0.0;
    const double eps = 1e-5;
    for (int k = 0; k < opt.instances; ++k) {
        const auto n = static_cast<Eigen::Index>(2 + k % 9);
        MVProblem p = random_problem(n, rng);
        Matrix analytic = sensitivity_mu(p.cov, p.lam);
        if (opt.fault == VerifyFault::sensitivity_mu)
            analytic = p.cov.sigma.inverse() / (2.0 * p.lam);
        Matrix fd(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            MVProblem up = p;
            MVProblem dn = p;
            up.mu(j) += eps;
            dn.mu(j) -= eps;
            fd.col(j) = (solve_closed_form(up).w - solve_closed_form(dn).w) / (2.0 * eps);
        }
        worst = std::max(worst, relative_error(analytic, fd));
    }
    return finish("sensitivity_mu", opt.instances, worst, 1e-6);
}

VerifyCheck verify_sensitivity_L_jvp(const VerifyOptions& opt)
{
    Rng rng(mix_seed(opt.seed, 2));
    double worst = 0.0;
    const double eps = 1e-6;
    for (int k = 0; k < opt.instances; ++k) {
        const auto n = static_cast<Eigen::Index>(2 + k % 9);
        const MVProblem p = random_problem(n, rng);
        Matrix dl = Matrix::Zero(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = j; i < n; ++i)
                dl(i, j) = rng.normal();
        const PortfolioSolution sol = solve_closed_form(p);
        Vector analytic = sensitivity_L_jvp(p, sol, dl);
        if (opt.fault == VerifyFault::sensitivity_L_jvp) {
            const Matrix ds = dl * p.cov.chol.transpose() + p.cov.chol * dl.transpose();
            analytic = -p.cov.sigma.ldlt().solve(ds * sol.w);
        }
        MVProblem up = p;
        MVProblem dn = p;
        up.cov = cov_from_chol(p.cov.chol + eps * dl);
        dn.cov = cov_from_chol(p.cov.chol - eps * dl);
        const Vector fd = (solve_closed_form(up).w - solve_closed_form(dn).w) / (2.0 * eps);
        worst = std::max(worst, relative_error(analytic, fd));
    }
    return finish("sensitivity_L_jvp", opt.instances, worst, 1e-4);
}

VerifyCheck verify_grad_J_w(const VerifyOptions& opt)
{
    Rng rng(mix_seed(opt.seed, 3));
    double worst = 0.0;
    const double eps = 1e-6;
    for (int k = 0; k < opt.instances; ++k) {
        const auto n = static_cast<Eigen::Index>(2 + k % 9);
        const MVProblem p = random_problem(n, rng);
        const Vector w = random_vector(n, 1.0, rng);
        Vector analytic = grad_J_w(w, p.mu, p.cov.chol, p.lam);
        if (opt.fault == VerifyFault::grad_J_w)
            analytic = p.lam * (p.cov.sigma * w) - p.mu;
        Vector fd(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            Vector up = w;
            Vector dn = w;
            up(j) += eps;
            dn(j) -= eps;
            fd(j) = (objective_J(up, p.mu, p.cov.chol, p.lam, RiskForm::stdev) -
                     objective_J(dn, p.mu, p.cov.chol, p.lam, RiskForm::stdev)) /
                    (2.0 * eps);
        }
        worst = std::max(worst, relative_error(analytic, fd));
    }
    return finish("grad_J_w", opt.instances, worst, 1e-6);
}

VerifyCheck verify_grad_hybrid_theta(const VerifyOptions& opt)
{
    Rng rng(mix_seed(opt.seed, 4));
    constexpr int n = 3, lookback = 4, horizon = 1, history = 12;
    HybridLossConfig cfg;
    cfg.lam = kLambdaGrid[4];
    double worst = 0.0;
    int accepted = 0;
    const double eps = 1e-6;
    for (int attempt = 0; accepted < opt.instances && attempt < 1000 * opt.instances; ++attempt) {
        LinearForecaster model(lookback, horizon, n);
        model.randomize(rng, 0.1);
        WindowSample s;
        s.x = Matrix(lookback, n);
        s.hist = Matrix(history, n);
        s.actual = Matrix(horizon, n);
        for (Matrix* m : {&s.x, &s.hist, &s.actual})
            for (Eigen::Index i = 0; i < m->size(); ++i)
                m->data()[i] = 0.5 * rng.normal();
        SampleEvaluation ev;
        Vector analytic = grad_hybrid_theta(model, s, cfg, &ev);
        // Interior solutions only: the box must stay inactive under perturbation.
        if (ev.w_hat.front().w.minCoeff() < 0.02 || ev.regrets.front().delta < 1e-6)
            continue;
        if (opt.fault == VerifyFault::grad_hybrid_theta)
            analytic *= 1.01;
        const Vector theta = model.parameters();
        Vector fd(theta.size());
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            Vector up = theta;
            Vector dn = theta;
            up(j) += eps;
            dn(j) -= eps;
            model.set_parameters(up);
            const double lu = evaluate_prediction(model.predict(s), s, cfg).loss.total;
            model.set_parameters(dn);
            const double ld = evaluate_prediction(model.predict(s), s, cfg).loss.total;
            fd(j) = (lu - ld) / (2.0 * eps);
        }
        worst = std::max(worst, relative_error(analytic, fd));
        ++accepted;
    }
    if (accepted < opt.instances)
        throw std::runtime_error("verify_grad_hybrid_theta: too few interior instances");
    return finish("grad_hybrid_theta", accepted, worst, 1e-4);
}

std::vector<VerifyCheck> run_verification(const VerifyOptions& opt)
{
    return {verify_sensitivity_mu(opt), verify_sensitivity_L_jvp(opt), verify_grad_J_w(opt),
            verify_grad_hybrid_theta(opt)};
}

} // namespace dfl
