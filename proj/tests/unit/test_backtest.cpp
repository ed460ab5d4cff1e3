#include "dfl/backtest.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace dfl;

namespace {

std::vector<Date> daily(const Date& first, std::size_t count)
{
    std::vector<Date> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(Date::from_days(first.to_days() + static_cast<std::int64_t>(i)));
    return out;
}

ReturnPanel random_panel(int periods, int assets, std::uint64_t seed)
{
    Rng rng(seed);
    ReturnPanel p;
    p.dates = daily(Date{2020, 1, 1}, static_cast<std::size_t>(periods));
    for (int i = 0; i < assets; ++i)
        p.tickers.push_back("A" + std::to_string(i));
    p.returns = testutil::random_matrix(periods, assets, 0.01, rng);
    for (int i = 0; i < assets; ++i)
        p.returns.col(i).array() += 0.0005 * (i - 1);
    return p;
}

BacktestConfig small_config()
{
    BacktestConfig c;
    c.windows = WindowSpec{10, 3, 40, 1};
    return c;
}

} // namespace

TEST_SUITE("backtest")
{
    TEST_CASE("metrics of a constant series")
    {
        const std::vector<double> r(60, 0.01);
        const Metrics m = compute_metrics(r, daily(Date{2021, 1, 1}, 60), MetricsConfig{});
        CHECK(m.std == 0.0);
        CHECK_FALSE(m.sr.has_value());
        CHECK_FALSE(m.sor.has_value());
        CHECK(m.mdd == 0.0);
        CHECK(m.wealth == doctest::Approx(std::pow(1.01, 60)).epsilon(1e-12));
        CHECK(m.ret == doctest::Approx(0.01 * 252));
    }

    TEST_CASE("metrics of an up-down pair and a monotone series")
    {
        std::vector<Date> d{Date{2021, 1, 1}, Date{2021, 2, 15}};
        const Metrics m = compute_metrics({0.10, -0.10}, d, MetricsConfig{});
        CHECK(m.wealth == doctest::Approx(0.99).epsilon(1e-14));
        CHECK(m.mdd == doctest::Approx(0.10).epsilon(1e-14));
        CHECK(m.var95 == doctest::Approx(0.09).epsilon(1e-14));

        std::vector<double> up;
        for (int i = 0; i < 40; ++i)
            up.push_back(0.001 * (i % 3));
        CHECK(compute_metrics(up, daily(Date{2021, 1, 1}, 40), MetricsConfig{}).mdd == 0.0);

        CHECK_THROWS_AS(compute_metrics({0.1}, {Date{2021, 1, 1}}, MetricsConfig{}), std::invalid_argument);
        CHECK_THROWS_AS(compute_metrics({0.1, 0.2}, daily(Date{2021, 1, 1}, 2), MetricsConfig{}),
                        std::invalid_argument);
    }

    TEST_CASE("annualization, downside deviation, and monthly aggregation")
    {
        const std::vector<double> r{0.02, -0.01, -0.03, -0.02, 0.01, 0.0};
        const std::vector<Date> d{Date{2021, 1, 5}, Date{2021, 1, 20}, Date{2021, 2, 3},
                                  Date{2021, 2, 17}, Date{2021, 3, 1}, Date{2021, 3, 30}};
        MetricsConfig cfg;
        cfg.periods_per_year = 24.0;
        cfg.risk_free = 0.001;
        const Metrics m = compute_metrics(r, d, cfg);
        const double mean = -0.03 / 6.0;
        double ss = 0.0;
        for (double x : r)
            ss += (x - mean) * (x - mean);
        CHECK(m.ret == doctest::Approx(mean * 24.0));
        CHECK(m.std == doctest::Approx(std::sqrt(ss / 5.0 * 24.0)));
        CHECK(*m.sr == doctest::Approx((mean - 0.001) * 24.0 / m.std));
        CHECK(*m.sor == doctest::Approx((mean - 0.001) * 24.0 / std::sqrt((1e-4 + 9e-4 + 4e-4) / 6.0 * 24.0)));

        const auto monthly = monthly_returns(r, d);
        REQUIRE(monthly.size() == 3);
        CHECK(monthly[0] == doctest::Approx(1.02 * 0.99 - 1.0));
        CHECK(monthly[1] == doctest::Approx(0.97 * 0.98 - 1.0));
        CHECK(monthly[2] == doctest::Approx(0.01));
        CHECK(m.var95 == doctest::Approx(-quantile(monthly, 0.05)));
        const double mmean = (monthly[0] + monthly[1] + monthly[2]) / 3.0;
        REQUIRE(m.rov.has_value());
        CHECK(*m.rov == doctest::Approx((mmean - 0.001 * 2.0) / m.var95));
    }

    TEST_CASE("quantile interpolates linearly")
    {
        CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
        CHECK(quantile({0.0, 10.0}, 0.05) == doctest::Approx(0.5));
        CHECK_THROWS_AS(quantile({}, 0.5), std::invalid_argument);
    }

    TEST_CASE("zero forecast with identity-like covariance gives near-uniform weights")
    {
        Rng rng(1);
        ReturnPanel p = random_panel(400, 4, 1);
        p.returns = testutil::random_matrix(400, 4, 0.01, rng);
        BacktestConfig c = small_config();
        c.windows.cov_history = 250;
        const BacktestReport rep = run_backtest(p, ZeroForecaster(3, 4), c);
        for (const auto& w : rep.weights)
            CHECK((w.array() - 0.25).abs().maxCoeff() <= 0.1);
    }

    TEST_CASE("weights stay on the simplex and wealth compounds the returns")
    {
        const ReturnPanel p = random_panel(300, 5, 2);
        const BacktestReport rep = run_backtest(p, OracleForecaster(), small_config());
        REQUIRE_FALSE(rep.weights.empty());
        CHECK(rep.returns.size() == rep.dates.size());
        double wealth = 1.0;
        for (std::size_t i = 0; i < rep.weights.size(); ++i) {
            const Vector& w = rep.weights[i];
            CHECK(std::abs(w.sum() - 1.0) <= 1e-9);
            CHECK(w.minCoeff() >= -1e-9);
            CHECK(w.maxCoeff() <= 1.0 + 1e-9);
            wealth *= 1.0 + rep.returns[i];
        }
        CHECK(std::abs(rep.metrics.wealth - wealth) <= 1e-12);
        CHECK(rep.metrics.mdd >= 0.0);
        CHECK(rep.metrics.mdd <= 1.0);
        CHECK(rep.rebalances.size() == (300 - 40) / 3);
    }

    TEST_CASE("oracle forecasts earn at least the zero forecast's wealth")
    {
        for (std::uint64_t seed : {3u, 4u, 5u}) {
            const ReturnPanel p = random_panel(300, 4, seed);
            const double oracle = run_backtest(p, OracleForecaster(), small_config()).metrics.wealth;
            const double zero = run_backtest(p, ZeroForecaster(3, 4), small_config()).metrics.wealth;
            CHECK(oracle >= zero);
        }
    }

    TEST_CASE("backtest is deterministic and validates its input")
    {
        const ReturnPanel p = random_panel(200, 3, 6);
        const BacktestReport a = run_backtest(p, ZeroForecaster(3, 3), small_config());
        const BacktestReport b = run_backtest(p, ZeroForecaster(3, 3), small_config());
        CHECK(a.returns == b.returns);
        REQUIRE(a.weights.size() == b.weights.size());
        for (std::size_t i = 0; i < a.weights.size(); ++i)
            CHECK(a.weights[i] == b.weights[i]);

        BacktestConfig c = small_config();
        c.windows.cov_history = 199;
        CHECK_THROWS_AS(run_backtest(p, ZeroForecaster(3, 3), c), std::invalid_argument);
        c = small_config();
        c.lam = 0.0;
        CHECK_THROWS_AS(run_backtest(p, ZeroForecaster(3, 3), c), std::invalid_argument);
    }

    TEST_CASE("regime slicing")
    {
        ReturnPanel p = random_panel(200, 3, 7);
        const BacktestReport rep = run_backtest(p, ZeroForecaster(3, 3), small_config());
        const Metrics all = regime_slice(rep, regime_all());
        CHECK(all.wealth == rep.metrics.wealth);
        CHECK(all.ret == rep.metrics.ret);
        CHECK(all.std == rep.metrics.std);
        CHECK(all.var95 == rep.metrics.var95);
        CHECK(all.mdd == rep.metrics.mdd);

        const RegimeWindow covid = regime_by_name("COVID");
        std::vector<double> r;
        std::vector<Date> d;
        for (std::size_t i = 0; i < rep.dates.size(); ++i)
            if (rep.dates[i] >= Date{2020, 3, 1} && rep.dates[i] <= Date{2020, 6, 30}) {
                r.push_back(rep.returns[i]);
                d.push_back(rep.dates[i]);
            }
        const Metrics manual = compute_metrics(r, d, rep.metrics_config);
        const Metrics sliced = regime_slice(rep, covid);
        CHECK(sliced.wealth == manual.wealth);
        CHECK(sliced.std == manual.std);

        CHECK_THROWS_WITH_AS(regime_slice(rep, regime_by_name("HSN1")), doctest::Contains("empty overlap"),
                             std::invalid_argument);
        CHECK_THROWS_AS(regime_by_name("GFC"), std::invalid_argument);
        CHECK(standard_regimes().size() == 4);
    }

    TEST_CASE("group sizes")
    {
        CHECK(group_size(10, 50) == 5);
        CHECK(group_size(20, 50) == 10);
        CHECK(group_size(30, 10) == 3);
        CHECK(group_size(10, 7) == 1);
        CHECK(group_size(30, 7) == 3);
        CHECK_THROWS_AS(group_size(0, 10), std::invalid_argument);
    }

    TEST_CASE("sensitivity grouping rows are disjoint and sized")
    {
        const ReturnPanel p = random_panel(300, 10, 8);
        const BacktestReport rep = run_backtest(p, ZeroForecaster(3, 10), small_config());
        std::vector<RegimeWindow> regimes{regime_all()};
        for (const auto& r : standard_regimes())
            regimes.push_back(r);
        const auto rows = sensitivity_grouping(rep, {10, 20, 30}, regimes);
        // ALL and the two 2020 regimes overlap; mu and chol measures; three pcts.
        CHECK(rows.size() == 3 * 2 * 3);
        for (const auto& row : rows) {
            CHECK(static_cast<int>(row.bottom.size()) == row.group_size);
            CHECK(static_cast<int>(row.top.size()) == row.group_size);
            for (const auto& b : row.bottom)
                CHECK(std::find(row.top.begin(), row.top.end(), b) == row.top.end());
        }
        BacktestReport empty = rep;
        empty.rebalances.clear();
        CHECK_THROWS_WITH_AS(sensitivity_grouping(empty, {10}, regimes), doctest::Contains("missing recordings"),
                             std::invalid_argument);
    }

    TEST_CASE("grouping differences vanish for identical assets")
    {
        ReturnPanel p = random_panel(300, 4, 9);
        for (int i = 1; i < 4; ++i)
            p.returns.col(i) = p.returns.col(0);
        const BacktestReport rep = run_backtest(p, OracleForecaster(), small_config());
        for (const auto& row : sensitivity_grouping(rep, {25}, {regime_all()})) {
            CHECK(row.mse_diff == doctest::Approx(0.0).scale(1.0));
            CHECK(row.mae_diff == doctest::Approx(0.0).scale(1.0));
        }
    }

    TEST_CASE("weight gap construction")
    {
        const Prop1Trace tr = prop1_demo(0.10, 0.05, 0.5, 1e6);
        CHECK(std::abs(tr.w1_star - 0.525) <= 1e-12);
        CHECK(std::abs(tr.limit_w1 - 0.5125) <= 1e-12);
        CHECK(std::abs(tr.limit_gap - 0.0125) <= 1e-12);
        CHECK(std::abs(tr.delta - 0.025) <= 1e-15);
        CHECK(tr.rows.back().k == 1e6);
        double prev = -1e300;
        for (const auto& row : tr.rows) {
            CHECK(row.gap >= prev);
            prev = row.gap;
            CHECK(row.gap <= tr.limit_gap + 1e-12);
            CHECK(std::abs(row.distance - std::abs(1.0 / row.k - tr.delta)) <= 1e-12);
        }
        CHECK(std::abs(tr.rows.back().gap - tr.limit_gap) <= 1e-6);
        CHECK(std::abs(tr.rows.back().distance - tr.delta) <= 1e-6 + 1e-15);
        CHECK(std::abs(tr.rows.back().w1_solver - tr.rows.back().w1_k) <= 1e-12);

        CHECK(std::abs(prop1_demo(0.10, 0.05, 5.0, 1e6).limit_gap - 0.00125) <= 1e-15);
        const Prop1Trace z = prop1_demo(0.10, 0.05, 0.5, 1e6, true);
        CHECK(z.limit_gap == 0.0);
        CHECK(std::abs(z.rows.back().gap) <= 1e-6);
        CHECK_THROWS_AS(prop1_demo(0.05, 0.05, 0.5, 1e6), std::invalid_argument);
    }
}
