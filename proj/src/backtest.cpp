#include "dfl/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dfl {

namespace {

constexpr std::uint64_t kBacktestPlanTag = 0x627431;

double mean_of(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

void BacktestConfig::validate() const
{
    windows.validate();
    if (rebalance_stride < 0)
        throw std::invalid_argument("backtest.stride must be nonnegative");
    if (!(lam > 0.0) || !std::isfinite(lam))
        throw std::invalid_argument("loss.lambda must be positive");
    if (!(periods_per_year > 0.0))
        throw std::invalid_argument("backtest.periods_per_year must be positive");
}

double quantile(std::vector<double> values, double p)
{
    if (values.empty())
        throw std::invalid_argument("quantile of an empty set");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> monthly_returns(const std::vector<double>& returns, const std::vector<Date>& dates)
{
    if (returns.size() != dates.size())
        throw std::invalid_argument("monthly_returns: returns and dates differ in length");
    std::vector<double> out;
    int key = 0;
    double growth = 1.0;
    for (std::size_t i = 0; i < returns.size(); ++i) {
        if (i > 0 && dates[i].month_key() != key) {
            out.push_back(growth - 1.0);
            growth = 1.0;
        }
        key = dates[i].month_key();
        growth *= 1.0 + returns[i];
    }
    if (!returns.empty())
        out.push_back(growth - 1.0);
    return out;
}

Metrics compute_metrics(const std::vector<double>& returns, const std::vector<Date>& dates, const MetricsConfig& cfg)
{
    if (returns.size() < 2)
        throw std::invalid_argument("compute_metrics: need at least 2 returns");
    if (returns.size() != dates.size())
        throw std::invalid_argument("compute_metrics: returns and dates differ in length");
    if (dates.back() < dates.front().add_months(1))
        throw std::invalid_argument("compute_metrics: series shorter than one month for VaR");

    const double ppy = cfg.periods_per_year;
    const auto n = static_cast<double>(returns.size());
    Metrics m;
    m.periods = returns.size();
    const double mean = mean_of(returns);
    m.ret = mean * ppy;

    const auto [lo, hi] = std::minmax_element(returns.begin(), returns.end());
    double var = 0.0;
    if (*lo != *hi) {
        for (double r : returns)
            var += (r - mean) * (r - mean);
        var /= n - 1.0;
    }
    m.std = std::sqrt(var) * std::sqrt(ppy);
    const double excess = m.ret - cfg.risk_free * ppy;
    if (m.std > 0.0)
        m.sr = excess / m.std;

    double down = 0.0;
    for (double r : returns)
        down += std::min(r, 0.0) * std::min(r, 0.0);
    const double dd = std::sqrt(down / n) * std::sqrt(ppy);
    if (dd > 0.0)
        m.sor = excess / dd;

    double wealth = 1.0;
    double peak = 1.0;
    for (double r : returns) {
        wealth *= 1.0 + r;
        peak = std::max(peak, wealth);
        m.mdd = std::max(m.mdd, (peak - wealth) / peak);
    }
    m.wealth = wealth;

    const std::vector<double> monthly = monthly_returns(returns, dates);
    m.var95 = -quantile(monthly, 0.05);
    if (m.var95 > 0.0)
        m.rov = (mean_of(monthly) - cfg.risk_free * ppy / 12.0) / m.var95;
    return m;
}

BacktestReport run_backtest(const ReturnPanel& panel, const Forecaster& model, const BacktestConfig& cfg,
                            const EmbeddingContext* ctx)
{
    cfg.validate();
    const WindowSpec& spec = cfg.windows;
    const int stride = cfg.stride();
    const int horizon = spec.horizon;
    const Eigen::Index first = spec.first_row();
    const Eigen::Index need = std::max(horizon, stride);
    if (first + need > panel.periods())
        throw std::invalid_argument("run_backtest: insufficient history for one (L, H, K) window");
    if (model.needs_embeddings() && !(ctx && ctx->provider))
        throw std::invalid_argument("run_backtest: model '" + model.kind() + "' needs an embedding context");

    std::unique_ptr<Forecaster> local = model.clone();
    local->set_plan_seed(mix_seed(cfg.seed, kBacktestPlanTag));

    BacktestReport rep;
    rep.config = cfg;
    rep.metrics_config = {cfg.periods_per_year, panel.risk_free};
    rep.model_kind = model.kind();
    rep.tickers = panel.tickers;
    const Eigen::Index n = panel.assets();

    for (Eigen::Index t = first; t + need <= panel.periods(); t += stride) {
        const WindowSample s = make_window(panel, t, spec, model.needs_embeddings() ? ctx : nullptr);
        const Matrix pred = local->predict(s);
        const int steps = std::min(horizon, stride);
        std::vector<MVProblem> problems;
        std::vector<PortfolioSolution> sols;
        for (int h = 0; h < steps; ++h) {
            MVProblem p;
            p.mu = pred.row(h).transpose();
            p.cov = estimate_cov(s.hist, pred.topRows(h + 1));
            p.lam = cfg.lam;
            p.risk_form = cfg.risk_form;
            p.box = cfg.box;
            rep.jitter_events += p.cov.jitter > 0.0;
            sols.push_back(solve(p));
            problems.push_back(std::move(p));
        }
        for (int j = 0; j < stride; ++j) {
            const Vector& w = sols[static_cast<std::size_t>(std::min(j, steps - 1))].w;
            const Eigen::Index row = t + j;
            rep.dates.push_back(panel.dates[static_cast<std::size_t>(row)]);
            rep.weights.push_back(w);
            rep.returns.push_back(w.dot(panel.returns.row(row).transpose()) + panel.risk_free);
        }
        if (cfg.record_sensitivities) {
            RebalanceRecord rec;
            rec.row = t;
            rec.date = panel.dates[static_cast<std::size_t>(t)];
            rec.pred = pred;
            rec.actual = s.actual;
            const MVProblem& p0 = problems.front();
            const PortfolioSolution& s0 = sols.front();
            MVProblem pv = p0;
            pv.risk_form = RiskForm::variance;
            pv.lam = s0.lam_variance;
            rec.mu_score = sensitivity_mu(p0.cov, s0.lam_variance, s0.active).cwiseAbs().rowwise().sum();
            rec.chol_score = Vector::Zero(n);
            for (Eigen::Index a = 0; a < n; ++a)
                for (Eigen::Index b = 0; b <= a; ++b) {
                    Matrix dir = Matrix::Zero(n, n);
                    dir(a, b) = 1.0;
                    rec.chol_score += sensitivity_L_jvp(pv, s0, dir).cwiseAbs();
                }
            rep.rebalances.push_back(std::move(rec));
        }
    }
    rep.metrics = compute_metrics(rep.returns, rep.dates, rep.metrics_config);
    return rep;
}

bool RegimeWindow::contains(const Date& d) const
{
    if (begin && d < *begin)
        return false;
    if (end && *end < d)
        return false;
    return true;
}

RegimeWindow regime_all() { return {"ALL", std::nullopt, std::nullopt}; }

std::vector<RegimeWindow> standard_regimes()
{
    return {
        {"COVID", Date{2020, 3, 1}, Date{2020, 6, 30}},
        {"ICSA", Date{2020, 3, 1}, Date{2020, 8, 31}},
        {"HSN1", Date{2022, 6, 1}, Date{2022, 11, 30}},
        {"UMCS", Date{2022, 5, 1}, Date{2022, 12, 31}},
    };
}

RegimeWindow regime_by_name(const std::string& name)
{
    if (name == "ALL")
        return regime_all();
    for (const auto& r : standard_regimes())
        if (r.name == name)
            return r;
    throw std::invalid_argument("unknown regime '" + name + "' (expected ALL, COVID, ICSA, HSN1, or UMCS)");
}

Metrics regime_slice(const BacktestReport& report, const RegimeWindow& regime)
{
    std::vector<double> r;
    std::vector<Date> d;
    for (std::size_t i = 0; i < report.returns.size(); ++i)
        if (regime.contains(report.dates[i])) {
            r.push_back(report.returns[i]);
            d.push_back(report.dates[i]);
        }
    if (r.empty())
        throw std::invalid_argument("empty overlap between regime " + regime.name + " and the report dates");
    return compute_metrics(r, d, report.metrics_config);
}

int group_size(int pct, int n)
{
    if (pct < 1 || pct > 100 || n < 1)
        throw std::invalid_argument("group_size: pct must lie in [1, 100] and n must be positive");
    return (pct * n + 99) / 100;
}

std::vector<GroupingRow> sensitivity_grouping(const BacktestReport& report, const std::vector<int>& pcts,
                                              const std::vector<RegimeWindow>& regimes)
{
    if (report.rebalances.empty())
        throw std::invalid_argument("missing recordings: the backtest recorded no sensitivities");
    const auto n = static_cast<int>(report.tickers.size());
    for (const auto& rec : report.rebalances)
        if (rec.mu_score.size() != n || rec.chol_score.size() != n || rec.pred.cols() != n)
            throw std::invalid_argument("missing recordings: sensitivity shapes do not match the asset count");

    std::vector<GroupingRow> out;
    for (const auto& regime : regimes) {
        std::vector<const RebalanceRecord*> sel;
        for (const auto& rec : report.rebalances)
            if (regime.contains(rec.date))
                sel.push_back(&rec);
        if (sel.empty())
            continue;
        Vector mu_score = Vector::Zero(n);
        Vector chol_score = Vector::Zero(n);
        Vector se = Vector::Zero(n);
        Vector ae = Vector::Zero(n);
        double cells = 0.0;
        for (const auto* rec : sel) {
            mu_score += rec->mu_score;
            chol_score += rec->chol_score;
            const Matrix err = rec->pred - rec->actual;
            se += err.array().square().matrix().colwise().sum().transpose();
            ae += err.cwiseAbs().colwise().sum().transpose();
            cells += static_cast<double>(err.rows());
        }
        se /= cells;
        ae /= cells;
        for (const auto& [measure, score] : {std::pair<std::string, const Vector*>{"mu", &mu_score}, {"chol", &chol_score}}) {
            std::vector<int> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return (*score)(a) < (*score)(b); });
            for (int pct : pcts) {
                const int g = group_size(pct, n);
                if (2 * g > n)
                    throw std::invalid_argument("sensitivity_grouping: groups of " + std::to_string(g) +
                                                " overlap for " + std::to_string(n) + " assets");
                GroupingRow row;
                row.regime = regime.name;
                row.measure = measure;
                row.pct = pct;
                row.group_size = g;
                double b_mse = 0.0, b_mae = 0.0, t_mse = 0.0, t_mae = 0.0;
                for (int k = 0; k < g; ++k) {
                    const int lo = order[static_cast<std::size_t>(k)];
                    const int hi = order[static_cast<std::size_t>(n - 1 - k)];
                    b_mse += se(lo);
                    b_mae += ae(lo);
                    t_mse += se(hi);
                    t_mae += ae(hi);
                    row.bottom.push_back(report.tickers[static_cast<std::size_t>(lo)]);
                    row.top.push_back(report.tickers[static_cast<std::size_t>(hi)]);
                }
                row.mse_diff = (b_mse - t_mse) / g;
                row.mae_diff = (b_mae - t_mae) / g;
                out.push_back(std::move(row));
            }
        }
    }
    return out;
}

Prop1Trace prop1_demo(double mu1, double mu2, double lam, double k_max, bool zero_offset)
{
    if (!(mu1 > mu2))
        throw std::invalid_argument("prop1_demo: requires mu1 > mu2");
    if (!(lam > 0.0))
        throw std::invalid_argument("prop1_demo: lam must be positive");
    if (!(k_max >= 1.0))
        throw std::invalid_argument("prop1_demo: k_max must be at least 1");
    Prop1Trace tr;
    tr.mu1 = mu1;
    tr.mu2 = mu2;
    tr.lam = lam;
    tr.delta = zero_offset ? 0.0 : (mu1 - mu2) / 2.0;
    tr.w1_star = 0.5 + (mu1 - mu2) / (4.0 * lam);
    tr.limit_w1 = 0.5 + ((mu1 - mu2) - tr.delta) / (4.0 * lam);
    tr.limit_gap = tr.delta / (4.0 * lam);

    std::vector<double> ks;
    for (double decade = 1.0; decade <= k_max; decade *= 10.0)
        for (double m : {1.0, 2.0, 5.0})
            if (m * decade <= k_max)
                ks.push_back(m * decade);
    if (ks.back() != k_max)
        ks.push_back(k_max);

    MVProblem p;
    p.cov = cov_from_chol(Matrix::Identity(2, 2));
    p.lam = lam;
    p.box = true;
    for (double k : ks) {
        Prop1Row row;
        row.k = k;
        const double mu1_k = mu1 - tr.delta + 1.0 / k;
        row.distance = std::abs(mu1_k - mu1);
        row.w1_k = 0.5 + ((mu1 - mu2) - tr.delta + 1.0 / k) / (4.0 * lam);
        row.w1_star = tr.w1_star;
        row.gap = tr.w1_star - row.w1_k;
        p.mu = Vector(2);
        p.mu << mu1_k, mu2;
        row.w1_solver = solve_box(p).w(0);
        tr.rows.push_back(row);
    }
    return tr;
}

} // namespace dfl
