#pragma once

#include "dfl/data_ingest.hpp"
#include "dfl/forecaster.hpp"
#include "dfl/optlayer.hpp"
#include "dfl/windows.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dfl {

/// Risk-aversion grid from most aggressive to most conservative; the middle
/// value is the default.
inline constexpr std::array<double, 5> kLambdaGrid{0.0145, 0.2656, 0.9545, 2.4305, 3.4623};
inline constexpr double kDefaultLambda = kLambdaGrid[2];

struct BacktestConfig {
    WindowSpec windows;
    /// Periods between rebalances; 0 means the horizon.
    int rebalance_stride = 0;
    double lam = kDefaultLambda;
    RiskForm risk_form = RiskForm::variance;
    bool box = true;
    double periods_per_year = 252.0;
    std::uint64_t seed = 0;
    bool record_sensitivities = true;

    [[nodiscard]] int stride() const { return rebalance_stride > 0 ? rebalance_stride : windows.horizon; }
    void validate() const;
};

struct MetricsConfig {
    double periods_per_year = 252.0;
    /// Per-period risk-free rate.
    double risk_free = 0.0;
};

struct Metrics {
    double ret = 0.0;
    double std = 0.0;
    std::optional<double> sr;
    std::optional<double> sor;
    double mdd = 0.0;
    double var95 = 0.0;
    std::optional<double> rov;
    double wealth = 1.0;
    std::size_t periods = 0;
};

/// Metrics of a per-period total-return series on the given dates.
Metrics compute_metrics(const std::vector<double>& returns, const std::vector<Date>& dates, const MetricsConfig& cfg);

/// Calendar-month compounded returns, in date order.
std::vector<double> monthly_returns(const std::vector<double>& returns, const std::vector<Date>& dates);

/// Linear-interpolation quantile (p in [0, 1]) of unsorted data.
double quantile(std::vector<double> values, double p);

struct RebalanceRecord {
    Eigen::Index row = 0;
    Date date;
    Matrix pred;
    Matrix actual;
    /// Row-wise absolute sums of d w / d mu at the first horizon step.
    Vector mu_score;
    /// Row-wise absolute sums of d w / d L over the lower-triangular unit directions.
    Vector chol_score;
};

struct BacktestReport {
    std::vector<Date> dates;
    std::vector<Vector> weights;
    std::vector<double> returns;
    Metrics metrics;
    BacktestConfig config;
    MetricsConfig metrics_config;
    std::string model_kind;
    std::vector<std::string> tickers;
    std::vector<RebalanceRecord> rebalances;
    long jitter_events = 0;
};

/// Rolling evaluation: forecast, estimate covariance, solve per horizon step,
/// hold w_hat_h in period h after the rebalance (w_hat_H beyond H).
BacktestReport run_backtest(const ReturnPanel& panel, const Forecaster& model, const BacktestConfig& cfg,
                            const EmbeddingContext* ctx = nullptr);

struct RegimeWindow {
    std::string name;
    std::optional<Date> begin;
    std::optional<Date> end;

    [[nodiscard]] bool contains(const Date& d) const;
};

RegimeWindow regime_all();
/// COVID, ICSA, HSN1, UMCS (ALL excluded).
std::vector<RegimeWindow> standard_regimes();
RegimeWindow regime_by_name(const std::string& name);

Metrics regime_slice(const BacktestReport& report, const RegimeWindow& regime);

struct GroupingRow {
    std::string regime;
    std::string measure; ///< "mu" or "chol"
    int pct = 0;
    int group_size = 0;
    double mse_diff = 0.0;
    double mae_diff = 0.0;
    std::vector<std::string> bottom;
    std::vector<std::string> top;
};

/// Bottom-minus-top prediction error of the least and most decision-sensitive
/// assets, per regime that overlaps the recorded rebalances.
std::vector<GroupingRow> sensitivity_grouping(const BacktestReport& report, const std::vector<int>& pcts,
                                              const std::vector<RegimeWindow>& regimes);

/// ceil(pct/100 * n) with an exact integer computation.
int group_size(int pct, int n);

struct Prop1Row {
    double k = 0.0;
    double distance = 0.0;
    double w1_k = 0.0;
    double w1_star = 0.0;
    double gap = 0.0;
    /// w_1 from the box solver on the same perturbed mean.
    double w1_solver = 0.0;
};

struct Prop1Trace {
    double mu1 = 0.0, mu2 = 0.0, lam = 0.0;
    double delta = 0.0;
    double w1_star = 0.0;
    double limit_w1 = 0.0;
    double limit_gap = 0.0;
    std::vector<Prop1Row> rows;
};

/// Perturbed means (mu1 - delta + 1/k, mu2) with delta = (mu1 - mu2)/2, or
/// delta = 0 when `zero_offset`, at 1-2-5 spaced k up to k_max.
Prop1Trace prop1_demo(double mu1, double mu2, double lam, double k_max, bool zero_offset = false);

} // namespace dfl
