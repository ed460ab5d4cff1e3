#include "dfl/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace dfl {

namespace {

constexpr std::uint64_t kValidationPlanTag = 0x76616c;

double decision_divisor(Eigen::Index n_assets, std::size_t horizon, DecisionScale scale)
{
    const auto h = static_cast<double>(horizon);
    return scale == DecisionScale::assets_horizon ? static_cast<double>(n_assets) * h : h;
}

} // namespace

std::string_view to_string(DecisionScale scale)
{
    return scale == DecisionScale::assets_horizon ? "assets_horizon" : "horizon";
}

DecisionScale parse_decision_scale(std::string_view text)
{
    if (text == "assets_horizon")
        return DecisionScale::assets_horizon;
    if (text == "horizon")
        return DecisionScale::horizon;
    throw std::invalid_argument("unknown decision scale '" + std::string(text) + "' (expected assets_horizon or horizon)");
}

void HybridLossConfig::validate() const
{
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("loss.beta must lie in [0, 1]");
    if (!(lam > 0.0) || !std::isfinite(lam))
        throw std::invalid_argument("loss.lambda must be positive");
    if (!(huber_eps > 0.0))
        throw std::invalid_argument("loss.huber_eps must be positive");
    if (risk_form != solver_form && !allow_mixed_form)
        throw std::invalid_argument("risk form of J differs from the solver form; set allow_mixed_form to permit it");
}

double loss_mse(const Matrix& pred, const Matrix& actual)
{
    if (pred.rows() != actual.rows() || pred.cols() != actual.cols())
        throw std::invalid_argument("loss_mse: shape mismatch");
    if (pred.size() == 0)
        throw std::invalid_argument("loss_mse: empty input");
    return (pred - actual).squaredNorm() / static_cast<double>(pred.size());
}

double loss_decision(const std::vector<RegretReport>& regrets, Eigen::Index n_assets, DecisionScale scale)
{
    if (regrets.empty())
        throw std::invalid_argument("loss_decision: empty regret list");
    if (n_assets < 1)
        throw std::invalid_argument("loss_decision: asset count must be positive");
    double sum = 0.0;
    for (const auto& r : regrets)
        sum += std::abs(r.delta);
    return sum / decision_divisor(n_assets, regrets.size(), scale);
}

LossBreakdown loss_hybrid(double mse, double decision, const HybridLossConfig& cfg)
{
    return {mse, decision, cfg.beta * mse + (1.0 - cfg.beta) * decision};
}

double huber_grad(double x, double eps)
{
    if (std::abs(x) > eps)
        return x > 0.0 ? 1.0 : -1.0;
    return x / eps;
}

MVProblem horizon_problem(const Matrix& rows, const Matrix& hist, Eigen::Index h, const HybridLossConfig& cfg)
{
    MVProblem p;
    p.mu = rows.row(h).transpose();
    p.cov = estimate_cov(hist, rows.topRows(h + 1));
    p.lam = cfg.lam;
    p.risk_form = cfg.solver_form;
    p.box = cfg.box;
    return p;
}

SampleEvaluation evaluate_prediction(const Matrix& pred, const WindowSample& s, const HybridLossConfig& cfg)
{
    cfg.validate();
    if (pred.rows() != s.actual.rows() || pred.cols() != s.actual.cols())
        throw std::invalid_argument("evaluate_prediction: prediction shape does not match actual returns");
    SampleEvaluation ev;
    for (Eigen::Index h = 0; h < pred.rows(); ++h) {
        const MVProblem hat = horizon_problem(pred, s.hist, h, cfg);
        const MVProblem truth = horizon_problem(s.actual, s.hist, h, cfg);
        ev.jitter_events += (hat.cov.jitter > 0.0) + (truth.cov.jitter > 0.0);
        ev.w_hat.push_back(solve(hat));
        ev.w_star.push_back(solve(truth));
        ev.regrets.push_back(
            regret(ev.w_hat.back().w, ev.w_star.back().w, truth.mu, truth.cov.chol, cfg.lam, cfg.risk_form));
    }
    ev.loss = loss_hybrid(loss_mse(pred, s.actual), loss_decision(ev.regrets, pred.cols(), cfg.decision_scale), cfg);
    return ev;
}

Matrix grad_hybrid_pred(const Matrix& pred, const WindowSample& s, const HybridLossConfig& cfg, SampleEvaluation* eval)
{
    if (cfg.solver_form != RiskForm::variance)
        throw std::invalid_argument("the differentiable path requires the variance-form solver");
    SampleEvaluation ev = evaluate_prediction(pred, s, cfg);
    const Eigen::Index horizon = pred.rows();
    const Eigen::Index n = pred.cols();
    Matrix grad = 2.0 * cfg.beta * (pred - s.actual) / static_cast<double>(pred.size());
    const double scale =
        (1.0 - cfg.beta) / decision_divisor(n, static_cast<std::size_t>(horizon), cfg.decision_scale);
    if (scale != 0.0) {
        for (Eigen::Index h = 0; h < horizon; ++h) {
            const RegretReport& r = ev.regrets[static_cast<std::size_t>(h)];
            const PortfolioSolution& sol = ev.w_hat[static_cast<std::size_t>(h)];
            const double sign = huber_grad(r.delta, cfg.huber_eps);
            if (sign == 0.0)
                continue;
            const MVProblem truth = horizon_problem(s.actual, s.hist, h, cfg);
            const Vector gw = scale * sign * grad_objective(sol.w, truth.mu, truth.cov.chol, cfg.lam, cfg.risk_form);
            const MVProblem hat = horizon_problem(pred, s.hist, h, cfg);

            // Mean path: mu_hat is row h of the prediction.
            grad.row(h) += (sensitivity_mu(hat.cov, cfg.lam, sol.active) * gw).transpose();

            // Covariance path: rows 0..h of the prediction enter the pooled covariance.
            const Eigen::Index k = s.hist.rows();
            const Eigen::Index total = k + h + 1;
            Matrix stacked(total, n);
            stacked.topRows(k) = s.hist;
            stacked.bottomRows(h + 1) = pred.topRows(h + 1);
            const Eigen::RowVectorXd mean = stacked.colwise().mean();
            const double denom = static_cast<double>(total - 1);
            for (Eigen::Index row = 0; row <= h; ++row) {
                const Vector dev = (pred.row(row) - mean).transpose();
                for (Eigen::Index i = 0; i < n; ++i) {
                    Matrix d_sigma = Matrix::Zero(n, n);
                    d_sigma.row(i) += dev.transpose();
                    d_sigma.col(i) += dev;
                    d_sigma /= denom;
                    const Matrix d_chol = cholesky_jvp(hat.cov.chol, d_sigma);
                    grad(row, i) += gw.dot(sensitivity_L_jvp(hat, sol, d_chol));
                }
            }
        }
    }
    if (eval)
        *eval = std::move(ev);
    return grad;
}

Vector grad_hybrid_theta(const Forecaster& model, const WindowSample& s, const HybridLossConfig& cfg,
                         SampleEvaluation* eval)
{
    const Matrix pred = model.predict(s);
    return model.backward(s, grad_hybrid_pred(pred, s, cfg, eval));
}

void TrainConfig::validate() const
{
    if (max_epochs < 1)
        throw std::invalid_argument("train.epochs must be at least 1");
    if (!(base_step > 0.0))
        throw std::invalid_argument("train.step must be positive");
    if (patience < 0)
        throw std::invalid_argument("train.patience must be nonnegative");
    if (batch_size < 1)
        throw std::invalid_argument("train.batch_size must be at least 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("train.val_fraction must lie in (0, 1)");
    if (halve_every < 1)
        throw std::invalid_argument("train.halve_every must be at least 1");
}

WindowSplit split_windows(std::vector<WindowSample> windows, double val_fraction)
{
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split_windows: fraction must lie in (0, 1)");
    const auto n = windows.size();
    auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n)));
    n_val = std::min(n_val, n);
    WindowSplit out;
    out.train.assign(std::make_move_iterator(windows.begin()),
                     std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(n - n_val)));
    out.val.assign(std::make_move_iterator(windows.begin() + static_cast<std::ptrdiff_t>(n - n_val)),
                   std::make_move_iterator(windows.end()));
    return out;
}

LossBreakdown mean_loss(const Forecaster& model, const std::vector<WindowSample>& windows,
                        const HybridLossConfig& cfg, long* jitter_events)
{
    if (windows.empty())
        throw std::invalid_argument("mean_loss: no windows");
    LossBreakdown acc;
    for (const auto& s : windows) {
        const SampleEvaluation ev = evaluate_prediction(model.predict(s), s, cfg);
        acc.mse += ev.loss.mse;
        acc.decision += ev.loss.decision;
        if (jitter_events)
            *jitter_events += ev.jitter_events;
    }
    const auto n = static_cast<double>(windows.size());
    return loss_hybrid(acc.mse / n, acc.decision / n, cfg);
}

TrainResult train(Forecaster& model, const std::vector<WindowSample>& train_set,
                  const std::vector<WindowSample>& val_set, const TrainConfig& cfg, const HybridLossConfig& loss_cfg)
{
    cfg.validate();
    loss_cfg.validate();
    if (!model.trainable())
        throw std::invalid_argument("model '" + model.kind() + "' has no trainable parameters");
    if (train_set.empty())
        throw std::invalid_argument("train: no training windows");
    if (cfg.early_stopping && val_set.empty())
        throw std::invalid_argument("train: early stopping needs validation windows");

    Vector theta = model.parameters();
    Vector m = Vector::Zero(theta.size());
    Vector v = Vector::Zero(theta.size());
    long adam_t = 0;
    double step = cfg.base_step;

    TrainResult result;
    result.best_parameters = theta;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.below(i)]);

        LossBreakdown train_acc;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            ++adam_t;
            model.set_plan_seed(mix_seed(cfg.seed, 0x100000000ULL + static_cast<std::uint64_t>(adam_t)));
            Vector g = Vector::Zero(theta.size());
            for (std::size_t b = start; b < stop; ++b) {
                SampleEvaluation ev;
                g += grad_hybrid_theta(model, train_set[order[b]], loss_cfg, &ev);
                train_acc.mse += ev.loss.mse;
                train_acc.decision += ev.loss.decision;
                result.jitter_events += ev.jitter_events;
            }
            g /= static_cast<double>(stop - start);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
            theta.array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
            model.set_parameters(theta);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.step = step;
        const auto n_train = static_cast<double>(train_set.size());
        rec.train = loss_hybrid(train_acc.mse / n_train, train_acc.decision / n_train, loss_cfg);
        if (!val_set.empty()) {
            model.set_plan_seed(mix_seed(cfg.seed, kValidationPlanTag));
            rec.val = mean_loss(model, val_set, loss_cfg, &result.jitter_events);
        }
        result.history.push_back(rec);
        result.epochs_run = epoch;

        const double monitored = val_set.empty() ? rec.train.total : rec.val.total;
        if (monitored < best) {
            best = monitored;
            since_best = 0;
            result.best_epoch = epoch;
            result.best_parameters = theta;
        } else {
            ++since_best;
            if (since_best % cfg.halve_every == 0)
                step *= 0.5;
            if (cfg.early_stopping && since_best > cfg.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    model.set_parameters(result.best_parameters);
    return result;
}

} // namespace dfl
