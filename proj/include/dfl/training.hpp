#pragma once

#include "dfl/forecaster.hpp"
#include "dfl/optlayer.hpp"

#include <vector>

namespace dfl {

/// Normalization of the summed absolute regret: 1/(N H) or 1/H.
enum class DecisionScale { assets_horizon, horizon };

std::string_view to_string(DecisionScale scale);
DecisionScale parse_decision_scale(std::string_view text);

struct HybridLossConfig {
    double beta = 0.4;
    double lam = 0.9545;
    /// Form of the decision objective J.
    RiskForm risk_form = RiskForm::variance;
    /// Form solved for both w_hat and w_star.
    RiskForm solver_form = RiskForm::variance;
    /// Permits risk_form != solver_form; regret may then be negative.
    bool allow_mixed_form = false;
    bool box = true;
    double huber_eps = 1e-8;
    DecisionScale decision_scale = DecisionScale::assets_horizon;

    void validate() const;
};

struct LossBreakdown {
    double mse = 0.0;
    double decision = 0.0;
    double total = 0.0;
};

double loss_mse(const Matrix& pred, const Matrix& actual);
double loss_decision(const std::vector<RegretReport>& regrets, Eigen::Index n_assets,
                     DecisionScale scale = DecisionScale::assets_horizon);
LossBreakdown loss_hybrid(double mse, double decision, const HybridLossConfig& cfg);

/// Derivative of the huberized absolute value: sign(x) outside [-eps, eps], x/eps inside.
double huber_grad(double x, double eps);

/// Problem at horizon step h (0-based) with mean rows.row(h) and covariance
/// of hist stacked on rows 0..h.
MVProblem horizon_problem(const Matrix& rows, const Matrix& hist, Eigen::Index h, const HybridLossConfig& cfg);

struct SampleEvaluation {
    LossBreakdown loss;
    std::vector<RegretReport> regrets;
    std::vector<PortfolioSolution> w_hat;
    std::vector<PortfolioSolution> w_star;
    int jitter_events = 0;
};

SampleEvaluation evaluate_prediction(const Matrix& pred, const WindowSample& s, const HybridLossConfig& cfg);

/// d loss / d pred for one window (H x N).
Matrix grad_hybrid_pred(const Matrix& pred, const WindowSample& s, const HybridLossConfig& cfg,
                        SampleEvaluation* eval = nullptr);

/// d loss / d theta for one window, chained through model.backward.
Vector grad_hybrid_theta(const Forecaster& model, const WindowSample& s, const HybridLossConfig& cfg,
                         SampleEvaluation* eval = nullptr);

struct TrainConfig {
    int max_epochs = 50;
    double base_step = 1e-4;
    int patience = 10;
    bool early_stopping = true;
    int batch_size = 16;
    std::uint64_t seed = 0;
    double val_fraction = 0.2;
    /// Step is halved after this many consecutive non-improving epochs.
    int halve_every = 5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    LossBreakdown train;
    LossBreakdown val;
    double step = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    Vector best_parameters;
    int best_epoch = 0;
    int epochs_run = 0;
    bool early_stopped = false;
    long jitter_events = 0;
};

struct WindowSplit {
    std::vector<WindowSample> train;
    std::vector<WindowSample> val;
};

/// Chronological split; the last ceil(fraction * n) windows validate.
WindowSplit split_windows(std::vector<WindowSample> windows, double val_fraction);

/// Mean loss over windows with the model's current parameters.
LossBreakdown mean_loss(const Forecaster& model, const std::vector<WindowSample>& windows,
                        const HybridLossConfig& cfg, long* jitter_events = nullptr);

/// Adam on mini-batches with validation early stopping. Leaves the model at
/// the best parameters.
TrainResult train(Forecaster& model, const std::vector<WindowSample>& train_set,
                  const std::vector<WindowSample>& val_set, const TrainConfig& cfg, const HybridLossConfig& loss_cfg);

} // namespace dfl
