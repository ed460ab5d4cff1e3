#include "dfl/training.hpp"
#include "dfl/verify.hpp"

#include "../oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace dfl;

namespace {

WindowSample random_window(int l, int h, int k, int n, double scale, Rng& rng)
{
    WindowSample s;
    s.x = testutil::random_matrix(l, n, scale, rng);
    s.actual = testutil::random_matrix(h, n, scale, rng);
    s.hist = testutil::random_matrix(k, n, scale, rng);
    return s;
}

std::vector<WindowSample> random_windows(int count, Rng& rng)
{
    std::vector<WindowSample> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(random_window(4, 1, 12, 3, 0.5, rng));
        out.back().index = i;
    }
    return out;
}

RegretReport with_delta(double d)
{
    RegretReport r;
    r.delta = d;
    return r;
}

} // namespace

TEST_SUITE("training")
{
    TEST_CASE("mse loss values")
    {
        Matrix a(1, 2);
        a << 1.0, 2.0;
        CHECK(loss_mse(a, a) == 0.0);
        CHECK(loss_mse(a.array() + 1.0, a) == doctest::Approx(1.0));
        Matrix b(1, 2);
        b << 4.0, 6.0;
        CHECK(loss_mse(b, a) == doctest::Approx(12.5));
        CHECK_THROWS_AS(loss_mse(Matrix::Zero(2, 2), a), std::invalid_argument);
    }

    TEST_CASE("decision loss values and sign symmetry")
    {
        CHECK(loss_decision({with_delta(0.0), with_delta(0.0)}, 5) == 0.0);
        CHECK(loss_decision({with_delta(0.1), with_delta(0.3)}, 5) == doctest::Approx(0.04));
        CHECK(loss_decision({with_delta(-0.1), with_delta(0.3)}, 5) == loss_decision({with_delta(0.1), with_delta(-0.3)}, 5));
        CHECK(loss_decision({with_delta(0.1), with_delta(0.3)}, 5, DecisionScale::horizon) == doctest::Approx(0.2));
        CHECK_THROWS_AS(loss_decision({}, 5), std::invalid_argument);
    }

    TEST_CASE("hybrid loss boundaries and linearity")
    {
        HybridLossConfig cfg;
        CHECK(loss_hybrid(1.0, 2.0, cfg).total == doctest::Approx(1.6));
        cfg.beta = 1.0;
        CHECK(loss_hybrid(0.7, 2.0, cfg).total == 0.7);
        cfg.beta = 0.0;
        CHECK(loss_hybrid(0.7, 2.0, cfg).total == 2.0);
        for (double beta : {0.1, 0.25, 0.6, 0.9}) {
            cfg.beta = beta;
            const LossBreakdown b = loss_hybrid(0.3, 0.05, cfg);
            CHECK(std::abs(b.total - (beta * 0.3 + (1 - beta) * 0.05)) <= 1e-12);
        }
        cfg.beta = 1.5;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg.beta = 0.4;
        cfg.risk_form = RiskForm::stdev;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg.allow_mixed_form = true;
        CHECK_NOTHROW(cfg.validate());
    }

    TEST_CASE("huberized absolute value")
    {
        CHECK(huber_grad(0.5, 1e-8) == 1.0);
        CHECK(huber_grad(-0.5, 1e-8) == -1.0);
        CHECK(huber_grad(0.0, 1e-8) == 0.0);
        CHECK(huber_grad(5e-9, 1e-8) == doctest::Approx(0.5));
    }

    TEST_CASE("beta = 1 gives the pure mse gradient")
    {
        Rng rng(1);
        const WindowSample s = random_window(4, 2, 12, 3, 0.5, rng);
        const Matrix pred = testutil::random_matrix(2, 3, 0.5, rng);
        HybridLossConfig cfg;
        cfg.beta = 1.0;
        const Matrix g = grad_hybrid_pred(pred, s, cfg);
        CHECK((g - 2.0 / 6.0 * (pred - s.actual)).cwiseAbs().maxCoeff() <= 1e-15);
    }

    TEST_CASE("perfect prediction has zero decision gradient")
    {
        Rng rng(2);
        const WindowSample s = random_window(4, 2, 12, 3, 0.5, rng);
        HybridLossConfig cfg;
        cfg.beta = 0.0;
        SampleEvaluation ev;
        const Matrix g = grad_hybrid_pred(s.actual, s, cfg, &ev);
        for (const auto& r : ev.regrets)
            CHECK(r.delta == 0.0);
        CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("decision regret is nonnegative with matched forms")
    {
        Rng rng(3);
        HybridLossConfig cfg;
        for (int rep = 0; rep < 50; ++rep) {
            const WindowSample s = random_window(4, 3, 12, 4, 0.3, rng);
            const Matrix pred = testutil::random_matrix(3, 4, 0.3, rng);
            for (const auto& r : evaluate_prediction(pred, s, cfg).regrets)
                CHECK(r.delta >= -1e-9);
        }
    }

    TEST_CASE("linear forecaster hybrid gradient matches finite differences")
    {
        Rng rng(4);
        HybridLossConfig cfg;
        cfg.lam = 3.4623;
        int checked = 0;
        for (int attempt = 0; attempt < 500 && checked < 10; ++attempt) {
            LinearForecaster model(4, 1, 3);
            model.randomize(rng, 0.1);
            const WindowSample s = random_window(4, 1, 12, 3, 0.5, rng);
            SampleEvaluation ev;
            const Vector analytic = grad_hybrid_theta(model, s, cfg, &ev);
            if (ev.w_hat.front().w.minCoeff() < 0.02 || ev.regrets.front().delta < 1e-6)
                continue;
            auto f = [&](const Vector& t) {
                LinearForecaster m = model;
                m.set_parameters(t);
                return evaluate_prediction(m.predict(s), s, cfg).loss.total;
            };
            CHECK(relative_error(analytic, oracle::fd_gradient(f, model.parameters(), 1e-6)) <= 1e-4);
            ++checked;
        }
        CHECK(checked == 10);
    }

    TEST_CASE("split_windows is chronological")
    {
        Rng rng(5);
        const auto all = random_windows(10, rng);
        const WindowSplit sp = split_windows(all, 0.2);
        REQUIRE(sp.train.size() == 8);
        REQUIRE(sp.val.size() == 2);
        CHECK(sp.train.back().index == 7);
        CHECK(sp.val.front().index == 8);
        CHECK(split_windows(random_windows(11, rng), 0.2).val.size() == 3);
        CHECK_THROWS_AS(split_windows(all, 0.0), std::invalid_argument);
    }

    TEST_CASE("patience 0 stops one epoch after the best")
    {
        Rng rng(6);
        const auto all = random_windows(30, rng);
        const WindowSplit sp = split_windows(all, 0.2);
        LinearForecaster model(4, 1, 3);
        model.randomize(rng, 0.5);
        TrainConfig tc;
        tc.patience = 0;
        tc.base_step = 0.5;
        tc.max_epochs = 50;
        tc.seed = 3;
        const TrainResult r = train(model, sp.train, sp.val, tc, HybridLossConfig{});
        REQUIRE(r.early_stopped);
        CHECK(r.epochs_run == r.best_epoch + 1);
        CHECK(static_cast<int>(r.history.size()) == r.epochs_run);
        CHECK(model.parameters() == r.best_parameters);
    }

    TEST_CASE("training is deterministic under a fixed seed")
    {
        Rng rng(7);
        const auto all = random_windows(40, rng);
        const WindowSplit sp = split_windows(all, 0.2);
        TrainConfig tc;
        tc.max_epochs = 6;
        tc.base_step = 1e-2;
        tc.seed = 11;
        auto run = [&] {
            LinearForecaster model(4, 1, 3);
            Rng init(9);
            model.randomize(init, 1e-3);
            return train(model, sp.train, sp.val, tc, HybridLossConfig{});
        };
        const TrainResult a = run();
        const TrainResult b = run();
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i) {
            CHECK(a.history[i].train.total == b.history[i].train.total);
            CHECK(a.history[i].val.total == b.history[i].val.total);
            CHECK(a.history[i].step == b.history[i].step);
        }
        CHECK(a.best_parameters == b.best_parameters);
    }

    TEST_CASE("training validation")
    {
        TrainConfig tc;
        tc.batch_size = 0;
        CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
        Rng rng(8);
        LinearForecaster model(4, 1, 3);
        CHECK_THROWS_AS(train(model, random_windows(5, rng), {}, TrainConfig{}, HybridLossConfig{}),
                        std::invalid_argument);
    }
}
