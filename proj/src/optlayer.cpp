#include "dfl/optlayer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dfl {

namespace {

// Equality-constrained optimum of lam w'Sw - mu'w on the index set `free`
// with the remaining weights fixed at zero.
struct FreeSolve {
    Vector w;
    double gamma = 0.0;
};

Matrix principal(const Matrix& m, const std::vector<int>& idx)
{
    const auto k = static_cast<Eigen::Index>(idx.size());
    Matrix out(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b)
            out(a, b) = m(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    return out;
}

Vector gather(const Vector& v, const std::vector<int>& idx)
{
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a)
        out(static_cast<Eigen::Index>(a)) = v(idx[a]);
    return out;
}

bool is_full(const std::vector<int>& idx, Eigen::Index n) { return static_cast<Eigen::Index>(idx.size()) == n; }

// Solves Sigma_FF x = b using the stored factor when F is the full index set.
class FreeSystem {
public:
    FreeSystem(const CovEstimate& cov, const std::vector<int>& free) : full_(is_full(free, cov.n()))
    {
        if (full_)
            chol_ = &cov.chol;
        else
            llt_.compute(principal(cov.sigma, free));
        if (!full_ && llt_.info() != Eigen::Success)
            throw std::runtime_error("singular covariance block");
    }

    [[nodiscard]] Vector solve(const Vector& b) const
    {
        if (full_) {
            const auto lower = chol_->triangularView<Eigen::Lower>();
            return lower.transpose().solve(lower.solve(b));
        }
        return llt_.solve(b);
    }

private:
    bool full_;
    const Matrix* chol_ = nullptr;
    Eigen::LLT<Matrix> llt_;
};

FreeSolve solve_free(const MVProblem& p, const std::vector<int>& free)
{
    const FreeSystem sys(p.cov, free);
    const Vector mu_f = gather(p.mu, free);
    const Vector ones = Vector::Ones(mu_f.size());
    const Vector s_mu = sys.solve(mu_f);
    const Vector s_one = sys.solve(ones);
    const double g = s_mu.sum();
    const double z = s_one.sum();
    if (!(z > 0.0) || !std::isfinite(z))
        throw std::runtime_error("singular covariance: 1' S^-1 1 is not positive");
    FreeSolve out;
    out.gamma = (g - 2.0 * p.lam) / z;
    const Vector w_f = (s_mu - out.gamma * s_one) / (2.0 * p.lam);
    out.w = Vector::Zero(p.n());
    for (std::size_t a = 0; a < free.size(); ++a)
        out.w(free[a]) = w_f(static_cast<Eigen::Index>(a));
    return out;
}

double risk_norm(const Matrix& chol, const Vector& w)
{
    return (chol.triangularView<Eigen::Lower>().transpose() * w).norm();
}

double kkt_residual(const MVProblem& p, const Vector& w, double gamma, const std::vector<char>& at_zero)
{
    const Vector nu = 2.0 * p.lam * (p.cov.sigma * w) - p.mu + Vector::Constant(p.n(), gamma);
    double r = std::abs(w.sum() - 1.0);
    for (Eigen::Index i = 0; i < p.n(); ++i) {
        if (at_zero[static_cast<std::size_t>(i)]) {
            r = std::max(r, std::max(0.0, -nu(i)));
            r = std::max(r, std::abs(w(i)));
        } else {
            r = std::max(r, std::abs(nu(i)));
            r = std::max(r, std::max(0.0, -w(i)));
        }
    }
    return r;
}

std::vector<int> complement(const std::vector<int>& active, Eigen::Index n)
{
    std::vector<char> mark(static_cast<std::size_t>(n), 0);
    for (int i : active) {
        if (i < 0 || i >= n)
            throw std::invalid_argument("active index out of range");
        mark[static_cast<std::size_t>(i)] = 1;
    }
    std::vector<int> out;
    for (Eigen::Index i = 0; i < n; ++i)
        if (!mark[static_cast<std::size_t>(i)])
            out.push_back(static_cast<int>(i));
    return out;
}

void check_lower(const Matrix& d_chol, Eigen::Index n)
{
    if (d_chol.rows() != n || d_chol.cols() != n)
        throw std::invalid_argument("sensitivity_L_jvp: direction has wrong shape");
    for (Eigen::Index j = 1; j < n; ++j)
        for (Eigen::Index i = 0; i < j; ++i)
            if (d_chol(i, j) != 0.0)
                throw std::invalid_argument("sensitivity_L_jvp: direction is not lower triangular");
}

} // namespace

std::string_view to_string(RiskForm form) { return form == RiskForm::variance ? "variance" : "stdev"; }

RiskForm parse_risk_form(std::string_view text)
{
    if (text == "variance")
        return RiskForm::variance;
    if (text == "stdev")
        return RiskForm::stdev;
    throw std::invalid_argument("unknown risk form '" + std::string(text) + "' (expected variance or stdev)");
}

CovEstimate repair_cov(const Matrix& raw)
{
    const Eigen::Index n = raw.rows();
    if (n < 1 || raw.cols() != n)
        throw std::invalid_argument("repair_cov: matrix must be square and nonempty");
    if (!raw.allFinite())
        throw std::invalid_argument("repair_cov: non-finite covariance");
    const Matrix sym = 0.5 * (raw + raw.transpose());
    const double trace = sym.trace();
    const double scale = trace > 0.0 ? trace / static_cast<double>(n) : 1.0;

    auto accept = [&](const Matrix& m, Matrix& chol) {
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success)
            return false;
        chol = llt.matrixL();
        const double floor = kPivotFloor * scale;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!(chol(i, i) * chol(i, i) > floor))
                return false;
        return true;
    };

    CovEstimate out;
    if (accept(sym, out.chol)) {
        out.sigma = sym;
        return out;
    }
    for (double delta = kJitterStart; std::isfinite(delta); delta *= 2.0) {
        const double jitter = delta * scale;
        Matrix m = sym;
        m.diagonal().array() += jitter;
        if (accept(m, out.chol)) {
            out.sigma = std::move(m);
            out.jitter = jitter;
            return out;
        }
    }
    throw std::runtime_error("repair_cov: jitter did not restore positive definiteness");
}

CovEstimate estimate_cov(const Matrix& hist, const Matrix& pred)
{
    const Eigen::Index k = hist.rows();
    const Eigen::Index h = pred.rows();
    if (k + h < 2)
        throw std::invalid_argument("estimate_cov: need at least 2 rows in total");
    if (k > 0 && h > 0 && hist.cols() != pred.cols())
        throw std::invalid_argument("estimate_cov: column mismatch between history and predictions");
    const Eigen::Index n = k > 0 ? hist.cols() : pred.cols();
    Matrix stacked(k + h, n);
    if (k > 0)
        stacked.topRows(k) = hist;
    if (h > 0)
        stacked.bottomRows(h) = pred;
    // Shift by the first row so identical rows center to exact zeros.
    const Matrix shifted = stacked.rowwise() - stacked.row(0);
    const Eigen::RowVectorXd mean = shifted.colwise().mean();
    const Matrix centered = shifted.rowwise() - mean;
    const Matrix raw = centered.transpose() * centered / static_cast<double>(k + h - 1);
    CovEstimate out = repair_cov(raw);
    out.hist_rows = k;
    out.pred_rows = h;
    return out;
}

CovEstimate cov_from_chol(const Matrix& chol)
{
    const Eigen::Index n = chol.rows();
    if (n < 1 || chol.cols() != n)
        throw std::invalid_argument("cov_from_chol: factor must be square");
    CovEstimate out;
    out.chol = chol.triangularView<Eigen::Lower>();
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(out.chol(i, i) > 0.0))
            throw std::invalid_argument("cov_from_chol: factor diagonal must be positive");
    out.sigma = out.chol * out.chol.transpose();
    return out;
}

void MVProblem::validate() const
{
    if (!(lam > 0.0) || !std::isfinite(lam))
        throw std::invalid_argument("risk aversion lam must be positive and finite");
    if (mu.size() < 2)
        throw std::invalid_argument("portfolio problem needs at least 2 assets");
    if (cov.sigma.rows() != mu.size() || cov.sigma.cols() != mu.size() || cov.chol.rows() != mu.size() ||
        cov.chol.cols() != mu.size())
        throw std::invalid_argument("covariance shape does not match mu");
    if (!mu.allFinite())
        throw std::invalid_argument("mu has non-finite entries");
}

std::vector<int> PortfolioSolution::free_set() const { return complement(active, w.size()); }

PortfolioSolution solve_closed_form(const MVProblem& p)
{
    p.validate();
    std::vector<int> all(static_cast<std::size_t>(p.n()));
    for (Eigen::Index i = 0; i < p.n(); ++i)
        all[static_cast<std::size_t>(i)] = static_cast<int>(i);
    const FreeSolve fs = solve_free(p, all);
    PortfolioSolution sol;
    sol.w = fs.w;
    sol.gamma = fs.gamma;
    sol.s = risk_norm(p.cov.chol, sol.w);
    sol.lam_variance = p.lam;
    sol.kkt_residual = kkt_residual(p, sol.w, sol.gamma, std::vector<char>(static_cast<std::size_t>(p.n()), 0));
    return sol;
}

PortfolioSolution solve_box(const MVProblem& p)
{
    p.validate();
    const Eigen::Index n = p.n();
    const int cap = 10 * static_cast<int>(n) + 10;
    const double tol = 1e-13 * (1.0 + p.mu.cwiseAbs().maxCoeff() + 2.0 * p.lam * p.cov.sigma.diagonal().maxCoeff());

    std::vector<char> at_zero(static_cast<std::size_t>(n), 0);
    Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
    double residual = std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= cap; ++iter) {
        std::vector<int> free;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!at_zero[static_cast<std::size_t>(i)])
                free.push_back(static_cast<int>(i));
        const FreeSolve fs = solve_free(p, free);

        double alpha = 1.0;
        int block = -1;
        for (int i : free) {
            if (fs.w(i) < 0.0) {
                const double ratio = w(i) / (w(i) - fs.w(i));
                if (ratio < alpha) {
                    alpha = ratio;
                    block = i;
                }
            }
        }
        if (block >= 0) {
            w += alpha * (fs.w - w);
            w(block) = 0.0;
            at_zero[static_cast<std::size_t>(block)] = 1;
            continue;
        }

        w = fs.w;
        const Vector nu = 2.0 * p.lam * (p.cov.sigma * w) - p.mu + Vector::Constant(n, fs.gamma);
        int drop = -1;
        double worst = -tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (at_zero[static_cast<std::size_t>(i)] && nu(i) < worst) {
                worst = nu(i);
                drop = static_cast<int>(i);
            }
        }
        residual = kkt_residual(p, w, fs.gamma, at_zero);
        if (drop < 0) {
            PortfolioSolution sol;
            sol.w = w;
            sol.gamma = fs.gamma;
            sol.s = risk_norm(p.cov.chol, w);
            sol.iterations = iter;
            sol.kkt_residual = residual;
            sol.lam_variance = p.lam;
            for (Eigen::Index i = 0; i < n; ++i)
                if (at_zero[static_cast<std::size_t>(i)])
                    sol.active.push_back(static_cast<int>(i));
            return sol;
        }
        at_zero[static_cast<std::size_t>(drop)] = 0;
    }
    std::ostringstream msg;
    msg << "solve_box: no convergence after " << cap << " iterations (kkt residual " << residual << ")";
    throw std::runtime_error(msg.str());
}

PortfolioSolution solve_stdev(const MVProblem& p)
{
    p.validate();
    PortfolioSolution sol;
    if (!p.box) {
        const FreeSystem sys(p.cov, complement({}, p.n()));
        const Vector ones = Vector::Ones(p.n());
        const Vector s_one = sys.solve(ones);
        const Vector s_mu = sys.solve(p.mu);
        const double z = s_one.sum();
        const double g = s_mu.sum();
        const Vector w_gmv = s_one / z;
        const Vector d = s_mu - (g / z) * s_one;
        const double a = 1.0 / z;
        const double b = d.dot(p.cov.sigma * d);
        const double lam2 = p.lam * p.lam;
        if (!(lam2 > b))
            throw std::runtime_error("unbounded: lam^2 must exceed the frontier slope for the stdev form");
        const double t = std::sqrt(a / (lam2 - b));
        sol.w = w_gmv + t * d;
        sol.s = risk_norm(p.cov.chol, sol.w);
        sol.lam_variance = 1.0 / (2.0 * t);
        sol.gamma = (g - 2.0 * sol.lam_variance) / z;
    } else {
        // 2 lam_v s(w(lam_v)) is increasing in lam_v; bracket the root then bisect in log space.
        MVProblem q = p;
        q.risk_form = RiskForm::variance;
        auto phi = [&](double lam_v, PortfolioSolution& out) {
            q.lam = lam_v;
            out = solve_box(q);
            return 2.0 * lam_v * out.s - p.lam;
        };
        PortfolioSolution lo_sol;
        PortfolioSolution hi_sol;
        double lo = p.lam;
        double hi = p.lam;
        while (phi(lo, lo_sol) > 0.0) {
            lo *= 0.5;
            if (lo < 1e-300)
                throw std::runtime_error("solve_stdev: failed to bracket");
        }
        while (phi(hi, hi_sol) < 0.0) {
            hi *= 2.0;
            if (hi > 1e300)
                throw std::runtime_error("solve_stdev: failed to bracket");
        }
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = std::sqrt(lo * hi);
            const double mid_safe = (mid > lo && mid < hi) ? mid : 0.5 * (lo + hi);
            PortfolioSolution ms;
            if (phi(mid_safe, ms) < 0.0)
                lo = mid_safe;
            else
                hi = mid_safe;
        }
        q.lam = hi;
        sol = solve_box(q);
        sol.lam_variance = hi;
    }
    sol.risk_form = RiskForm::stdev;
    // Stationarity of lam S w / s - mu + gamma 1 - nu on the free set.
    const Vector grad = p.lam * (p.cov.sigma * sol.w) / sol.s - p.mu + Vector::Constant(p.n(), sol.gamma);
    const std::vector<int> free = sol.free_set();
    double r = std::abs(sol.w.sum() - 1.0);
    for (int i : free)
        r = std::max(r, std::abs(grad(i)));
    for (int i : sol.active)
        r = std::max(r, std::max(0.0, -grad(i)));
    sol.kkt_residual = r;
    return sol;
}

PortfolioSolution solve(const MVProblem& p)
{
    if (p.risk_form == RiskForm::stdev)
        return solve_stdev(p);
    return p.box ? solve_box(p) : solve_closed_form(p);
}

Matrix sensitivity_mu(const CovEstimate& cov, double lam) { return sensitivity_mu(cov, lam, {}); }

Matrix sensitivity_mu(const CovEstimate& cov, double lam, const std::vector<int>& active)
{
    if (!(lam > 0.0))
        throw std::invalid_argument("sensitivity_mu: lam must be positive");
    const Eigen::Index n = cov.n();
    const std::vector<int> free = complement(active, n);
    Matrix out = Matrix::Zero(n, n);
    if (free.empty())
        return out;
    const FreeSystem sys(cov, free);
    const auto k = static_cast<Eigen::Index>(free.size());
    Matrix inv(k, k);
    for (Eigen::Index j = 0; j < k; ++j)
        inv.col(j) = sys.solve(Vector::Unit(k, j));
    inv = (0.5 * (inv + inv.transpose())).eval();
    const Vector s_one = inv.rowwise().sum();
    const double z = s_one.sum();
    const Matrix block = (inv - s_one * s_one.transpose() / z) / (2.0 * lam);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b)
            out(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]) = block(a, b);
    return out;
}

Vector sensitivity_sigma_jvp(const MVProblem& p, const PortfolioSolution& sol, const Matrix& d_sigma)
{
    const Eigen::Index n = p.n();
    if (d_sigma.rows() != n || d_sigma.cols() != n)
        throw std::invalid_argument("sensitivity_sigma_jvp: direction has wrong shape");
    const std::vector<int> free = sol.free_set();
    Vector out = Vector::Zero(n);
    if (free.size() < 2)
        return out;
    const double lam = sol.lam_variance > 0.0 ? sol.lam_variance : p.lam;
    const FreeSystem sys(p.cov, free);
    const Vector mu_f = gather(p.mu, free);
    const Vector w_f = gather(sol.w, free);
    const Matrix ds = principal(d_sigma, free);
    const Vector ones = Vector::Ones(mu_f.size());
    const Vector s_one = sys.solve(ones);
    const Vector s_mu = sys.solve(mu_f);
    const double g = s_mu.sum();
    const double z = s_one.sum();
    const double dg = -s_one.dot(ds * s_mu);
    const double dz = -s_one.dot(ds * s_one);
    const double d_gamma = (dg * z - (g - 2.0 * lam) * dz) / (z * z);
    const Vector dw = -sys.solve(ds * w_f) - (d_gamma / (2.0 * lam)) * s_one;
    for (std::size_t a = 0; a < free.size(); ++a)
        out(free[a]) = dw(static_cast<Eigen::Index>(a));
    return out;
}

Vector sensitivity_L_jvp(const MVProblem& p, const PortfolioSolution& sol, const Matrix& d_chol)
{
    check_lower(d_chol, p.n());
    const Matrix& l = p.cov.chol;
    const Matrix d_sigma = d_chol * l.transpose() + l * d_chol.transpose();
    return sensitivity_sigma_jvp(p, sol, d_sigma);
}

Vector sensitivity_L_jvp(const MVProblem& p, const Matrix& d_chol)
{
    MVProblem q = p;
    q.risk_form = RiskForm::variance;
    const PortfolioSolution sol = q.box ? solve_box(q) : solve_closed_form(q);
    return sensitivity_L_jvp(q, sol, d_chol);
}

Matrix cholesky_jvp(const Matrix& chol, const Matrix& d_sigma)
{
    const Eigen::Index n = chol.rows();
    if (chol.cols() != n || d_sigma.rows() != n || d_sigma.cols() != n)
        throw std::invalid_argument("cholesky_jvp: shape mismatch");
    const auto lower = chol.triangularView<Eigen::Lower>();
    // X = L^-1 dS L^-T, then dL = L * Phi(X) with Phi the lower triangle and halved diagonal.
    const Matrix left = lower.solve(d_sigma);
    const Matrix x = lower.solve(left.transpose()).transpose();
    Matrix phi = x.triangularView<Eigen::Lower>();
    phi.diagonal() *= 0.5;
    return Matrix(lower * phi);
}

double objective_J(const Vector& w, const Vector& mu_star, const Matrix& chol_star, double lam, RiskForm form)
{
    if (w.size() != mu_star.size() || chol_star.rows() != w.size() || chol_star.cols() != w.size())
        throw std::invalid_argument("objective_J: shape mismatch");
    const double s = risk_norm(chol_star, w);
    const double risk = form == RiskForm::variance ? s * s : s;
    return lam * risk - mu_star.dot(w);
}

RegretReport regret(const Vector& w_hat, const Vector& w_star, const Vector& mu_star, const Matrix& chol_star,
                    double lam, RiskForm form)
{
    RegretReport r;
    r.j_hat = objective_J(w_hat, mu_star, chol_star, lam, form);
    r.j_star = objective_J(w_star, mu_star, chol_star, lam, form);
    r.delta = r.j_hat - r.j_star;
    r.lam = lam;
    r.risk_form = form;
    return r;
}

Vector grad_J_w(const Vector& w_hat, const Vector& mu_star, const Matrix& chol_star, double lam, double eps)
{
    if (w_hat.size() != mu_star.size() || chol_star.rows() != w_hat.size() || chol_star.cols() != w_hat.size())
        throw std::invalid_argument("grad_J_w: shape mismatch");
    const auto lower = chol_star.triangularView<Eigen::Lower>();
    const Vector lw = lower.transpose() * w_hat;
    const double s = lw.norm();
    if (!(s > eps))
        throw std::domain_error("degenerate risk");
    const Vector back = lower * lw;
    return lam * back / s - mu_star;
}

Vector grad_objective(const Vector& w, const Vector& mu_star, const Matrix& chol_star, double lam, RiskForm form)
{
    if (form == RiskForm::stdev)
        return grad_J_w(w, mu_star, chol_star, lam);
    if (w.size() != mu_star.size() || chol_star.rows() != w.size() || chol_star.cols() != w.size())
        throw std::invalid_argument("grad_objective: shape mismatch");
    const auto lower = chol_star.triangularView<Eigen::Lower>();
    const Vector lw = lower.transpose() * w;
    const Vector back = lower * lw;
    return 2.0 * lam * back - mu_star;
}

} // namespace dfl
