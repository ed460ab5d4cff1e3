#include "dfl/commands.hpp"

#include "dfl/backtest.hpp"
#include "dfl/csv.hpp"
#include "dfl/training.hpp"
#include "dfl/verify.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace dfl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kLinearInitTag = 0x6c696e;

std::string fixed(double v, const char* fmt = "%.6g")
{
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const Metrics& m)
{
    return {{"ret", m.ret},   {"std", m.std},     {"sr", opt_json(m.sr)},   {"sor", opt_json(m.sor)},
            {"mdd", m.mdd},   {"var95", m.var95}, {"rov", opt_json(m.rov)}, {"wealth", m.wealth},
            {"periods", m.periods}};
}

json loss_json(const LossBreakdown& l) { return {{"mse", l.mse}, {"decision", l.decision}, {"total", l.total}}; }

std::string cell(const std::optional<double>& v) { return v ? fixed(*v) : "n/a"; }

void print_metrics(std::ostream& out, const std::string& label, const Metrics& m)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s %10s %10s %10s %10s %10s\n", label.c_str(),
                  fixed(m.ret).c_str(), fixed(m.std).c_str(), cell(m.sr).c_str(), cell(m.sor).c_str(),
                  fixed(m.mdd).c_str(), fixed(m.var95).c_str(), cell(m.rov).c_str(), fixed(m.wealth).c_str());
    out << buf;
}

void print_metrics_header(std::ostream& out)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s %10s %10s %10s %10s %10s\n", "regime", "Ret", "Std", "SR",
                  "SOR", "MDD", "VaR95", "RoV", "Wealth");
    out << buf;
}

fs::path out_dir(const RunConfig& cfg)
{
    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    return dir;
}

/// Runs a command body, mapping exceptions to exit codes.
template <typename F>
int guarded(std::ostream& err, const char* name, F&& body)
{
    try {
        return body();
    } catch (const std::exception& e) {
        err << name << ": error: " << e.what() << "\n";
        return kExitError;
    }
}

std::string join(const std::vector<std::string>& items, char sep)
{
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            s += sep;
        s += items[i];
    }
    return s;
}

BacktestReport run_configured_backtest(const RunConfig& cfg)
{
    const RunData data = load_run_data(cfg);
    const auto model = build_model(cfg, static_cast<int>(data.panel.assets()), true);
    const auto ctx = data.context(*model);
    return run_backtest(data.panel, *model, cfg.backtest_config(), ctx.get());
}

} // namespace

RunConfig resolve_config(const CommonOptions& opt)
{
    if (opt.config.empty())
        throw ConfigError("config: --config is required");
    RunConfig cfg = load_config(opt.config);
    if (opt.seed)
        cfg.seed = *opt.seed;
    if (opt.out)
        cfg.out_dir = *opt.out;
    cfg.validate();
    return cfg;
}

std::unique_ptr<EmbeddingContext> RunData::context(const Forecaster& model) const
{
    if (!model.needs_embeddings())
        return nullptr;
    auto ctx = std::make_unique<EmbeddingContext>();
    ctx->macro = &macro;
    ctx->sectors = &sectors;
    ctx->templates = templates;
    ctx->provider = provider.get();
    return ctx;
}

RunData load_run_data(const RunConfig& cfg)
{
    RunData data;
    data.panel = to_excess_returns(load_prices(cfg.prices), cfg.risk_free);
    if (!cfg.macro.empty())
        data.macro = load_macro(cfg.macro, cfg.macro_meta);
    if (!cfg.sectors.empty())
        data.sectors = load_sector_map(cfg.sectors);
    if (!cfg.templates.empty())
        data.templates = PromptTemplates::load(cfg.templates);
    if (!cfg.embeddings.empty()) {
        auto file = std::make_unique<FileEmbeddingProvider>(cfg.embeddings);
        if (file->dimension() != cfg.d_llm())
            throw ConfigError("paths.embeddings: vector dimension " + std::to_string(file->dimension()) +
                              " differs from attention.heads * attention.head_dim = " + std::to_string(cfg.d_llm()));
        data.provider = std::move(file);
    } else {
        data.provider = std::make_unique<HashEmbeddingProvider>(cfg.d_llm(), cfg.embedding_salt);
    }
    if (cfg.model == "attention")
        for (const auto& t : data.panel.tickers)
            (void)data.sectors.at(t);
    return data;
}

std::unique_ptr<Forecaster> build_model(const RunConfig& cfg, int assets, bool load_checkpoint_file)
{
    std::unique_ptr<Forecaster> model;
    if (cfg.model == "attention") {
        model = std::make_unique<AttentionForecaster>(cfg.attention_config(assets));
    } else if (cfg.model == "linear") {
        auto lin = std::make_unique<LinearForecaster>(cfg.lookback, cfg.horizon, assets);
        Rng rng(mix_seed(cfg.seed, kLinearInitTag));
        lin->randomize(rng, 1e-3);
        model = std::move(lin);
    } else if (cfg.model == "zero") {
        model = std::make_unique<ZeroForecaster>(cfg.horizon, assets);
    } else if (cfg.model == "oracle") {
        model = std::make_unique<OracleForecaster>();
    } else {
        throw ConfigError("model.kind: unknown model '" + cfg.model + "'");
    }
    if (load_checkpoint_file && !cfg.checkpoint.empty()) {
        if (!fs::exists(cfg.checkpoint))
            throw ConfigError("backtest.checkpoint: file not found: " + cfg.checkpoint);
        const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
        const auto kind = ckpt.meta.find("model");
        if (kind == ckpt.meta.end() || kind->second != model->kind())
            throw ConfigError("backtest.checkpoint: checkpoint was not written by a '" + model->kind() + "' model");
        model->load_blocks(ckpt.blocks);
    }
    return model;
}

std::string config_echo(const RunConfig& cfg)
{
    json j = json::parse(config_to_json(cfg));
    j.erase("output.dir");
    return j.dump();
}

int cmd_ingest(const CommonOptions& opt, std::ostream& out, std::ostream& err)
{
    return guarded(err, "ingest", [&] {
        const RunConfig cfg = resolve_config(opt);
        const PricePanel prices = load_prices(cfg.prices);
        const ReturnPanel panel = to_excess_returns(prices, cfg.risk_free);
        const fs::path dir = out_dir(cfg);
        write_returns_csv(panel, dir / "returns.csv");

        json summary = {{"assets", panel.assets()},
                        {"periods", panel.periods()},
                        {"dropped_rows", prices.dropped_rows},
                        {"first_date", panel.dates.front().to_string()},
                        {"last_date", panel.dates.back().to_string()},
                        {"tickers", panel.tickers},
                        {"risk_free", cfg.risk_free}};
        out << "returns: " << panel.periods() << " periods x " << panel.assets() << " assets, "
            << panel.dates.front().to_string() << " to " << panel.dates.back().to_string() << ", "
            << prices.dropped_rows << " rows dropped\n";
        if (!cfg.macro.empty()) {
            const MacroPanel macro = load_macro(cfg.macro, cfg.macro_meta);
            json series = json::array();
            for (const auto& s : macro.series) {
                series.push_back({{"name", s.name}, {"observations", s.values.size()}});
                out << "macro: " << s.name << " (" << s.values.size() << " observations)\n";
            }
            summary["macro"] = series;
        }
        if (!cfg.sectors.empty()) {
            const SectorMap sectors = load_sector_map(cfg.sectors);
            for (const auto& t : panel.tickers)
                (void)sectors.at(t);
            summary["sectors"] = sectors.sectors();
            out << "sectors: " << join(sectors.sectors(), ',') << "\n";
        }
        csv::write_text(dir / "ingest_summary.json", summary.dump(2) + "\n");
        out << "wrote " << (dir / "returns.csv").string() << "\n";
        return kExitOk;
    });
}

int cmd_train(const CommonOptions& opt, std::ostream& out, std::ostream& err)
{
    return guarded(err, "train", [&] {
        const RunConfig cfg = resolve_config(opt);
        const RunData data = load_run_data(cfg);
        auto model = build_model(cfg, static_cast<int>(data.panel.assets()), false);
        if (!model->trainable())
            throw ConfigError("model.kind: '" + cfg.model + "' has no trainable parameters");
        const auto ctx = data.context(*model);
        WindowSplit split =
            split_windows(make_windows(data.panel, cfg.window_spec(cfg.train_stride), ctx.get()), cfg.val_fraction);
        if (split.train.empty())
            throw std::invalid_argument("train: no training windows");

        const HybridLossConfig loss_cfg = cfg.loss_config();
        const TrainConfig train_cfg = cfg.train_config();
        const TrainResult result = train(*model, split.train, split.val, train_cfg, loss_cfg);

        const fs::path dir = out_dir(cfg);
        Checkpoint ckpt;
        ckpt.meta = {{"model", model->kind()},
                     {"assets", std::to_string(data.panel.assets())},
                     {"lookback", std::to_string(cfg.lookback)},
                     {"horizon", std::to_string(cfg.horizon)},
                     {"seed", std::to_string(cfg.seed)},
                     {"best_epoch", std::to_string(result.best_epoch)}};
        ckpt.blocks = model->blocks();
        save_checkpoint(ckpt, dir / "checkpoint.csv");

        json epochs = json::array();
        for (const auto& rec : result.history)
            epochs.push_back(
                {{"epoch", rec.epoch}, {"step", rec.step}, {"train", loss_json(rec.train)}, {"val", loss_json(rec.val)}});
        json manifest = {
            {"config", json::parse(config_echo(cfg))},
            {"seed", cfg.seed},
            {"model", model->kind()},
            {"parameters", model->parameters().size()},
            {"windows", {{"train", split.train.size()}, {"val", split.val.size()}}},
            {"epochs", epochs},
            {"epochs_run", result.epochs_run},
            {"best_epoch", result.best_epoch},
            {"early_stopped", result.early_stopped},
            {"early_stop_epoch", result.early_stopped ? json(result.epochs_run) : json(nullptr)},
            {"jitter_events", result.jitter_events},
        };
        csv::write_text(dir / "train_manifest.json", manifest.dump(2) + "\n");

        out << "epoch      train_total     train_decision  val_total       val_decision\n";
        for (const auto& rec : result.history) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%5d  %15.8g %15.8g %15.8g %15.8g\n", rec.epoch, rec.train.total,
                          rec.train.decision, rec.val.total, rec.val.decision);
            out << buf;
        }
        out << "best epoch " << result.best_epoch << " of " << result.epochs_run
            << (result.early_stopped ? " (early stop)" : "") << "; jitter events " << result.jitter_events << "\n";
        out << "wrote " << (dir / "checkpoint.csv").string() << " and " << (dir / "train_manifest.json").string()
            << "\n";
        return kExitOk;
    });
}

int cmd_backtest(const CommonOptions& opt, std::ostream& out, std::ostream& err)
{
    return guarded(err, "backtest", [&] {
        const RunConfig cfg = resolve_config(opt);
        const BacktestReport rep = run_configured_backtest(cfg);
        if (rep.returns.empty())
            throw std::invalid_argument("backtest: panel too short for one rebalance");
        const fs::path dir = out_dir(cfg);

        json regimes = json::object();
        std::vector<std::pair<std::string, Metrics>> rows{{"ALL", rep.metrics}};
        for (const auto& regime : standard_regimes()) {
            try {
                const Metrics m = regime_slice(rep, regime);
                regimes[regime.name] = metrics_json(m);
                rows.emplace_back(regime.name, m);
            } catch (const std::invalid_argument& e) {
                regimes[regime.name] = {{"error", e.what()}};
            }
        }
        json report = {{"config", json::parse(config_echo(cfg))},
                       {"seed", cfg.seed},
                       {"model", rep.model_kind},
                       {"tickers", rep.tickers},
                       {"first_date", rep.dates.front().to_string()},
                       {"last_date", rep.dates.back().to_string()},
                       {"rebalances", rep.rebalances.size()},
                       {"jitter_events", rep.jitter_events},
                       {"metrics", metrics_json(rep.metrics)},
                       {"regimes", regimes}};
        csv::write_text(dir / "backtest_report.json", report.dump(2) + "\n");

        std::ostringstream weights, returns, wealth;
        weights << "date";
        for (const auto& t : rep.tickers)
            weights << "," << t;
        weights << "\n";
        returns << "date,return\n";
        wealth << "date,wealth,drawdown\n";
        double w = 1.0, peak = 1.0;
        for (std::size_t i = 0; i < rep.dates.size(); ++i) {
            const std::string d = rep.dates[i].to_string();
            weights << d;
            for (Eigen::Index j = 0; j < rep.weights[i].size(); ++j)
                weights << "," << format_exact(rep.weights[i](j));
            weights << "\n";
            returns << d << "," << format_exact(rep.returns[i]) << "\n";
            w *= 1.0 + rep.returns[i];
            peak = std::max(peak, w);
            wealth << d << "," << format_exact(w) << "," << format_exact(1.0 - w / peak) << "\n";
        }
        csv::write_text(dir / "weights.csv", weights.str());
        csv::write_text(dir / "returns.csv", returns.str());
        csv::write_text(dir / "wealth.csv", wealth.str());

        out << "model " << rep.model_kind << ", " << rep.dates.size() << " periods, " << rep.rebalances.size()
            << " rebalances, lambda " << fixed(cfg.lam) << "\n";
        print_metrics_header(out);
        for (const auto& [name, m] : rows)
            print_metrics(out, name, m);
        out << "wrote " << (dir / "backtest_report.json").string() << "\n";
        return kExitOk;
    });
}

int cmd_verify_gradients(const CommonOptions& opt, const VerifyCommandOptions& vopt, std::ostream& out,
                         std::ostream& err)
{
    return guarded(err, "verify-gradients", [&] {
        VerifyOptions v;
        if (!opt.config.empty())
            v.seed = resolve_config(opt).seed;
        if (opt.seed)
            v.seed = *opt.seed;
        if (vopt.instances < 1)
            throw std::invalid_argument("--instances must be at least 1");
        v.instances = vopt.instances;
        v.fault = parse_verify_fault(vopt.fault);

        const std::vector<VerifyCheck> checks = run_verification(v);
        out << "check               instances  max_rel_error  tolerance  status\n";
        std::vector<std::string> failed;
        for (const auto& c : checks) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%-18s %10d %14.3e %10.0e  %s\n", c.name.c_str(), c.instances,
                          c.max_rel_error, c.tolerance, c.passed ? "PASS" : "FAIL");
            out << buf;
            if (!c.passed)
                failed.push_back(c.name);
        }

        const Matrix s = sensitivity_mu(repair_cov(Matrix::Identity(2, 2)), 0.5);
        out << "identity covariance, N=2, 2*lambda=1: d w*/d mu = [[" << fixed(s(0, 0)) << ", " << fixed(s(0, 1))
            << "], [" << fixed(s(1, 0)) << ", " << fixed(s(1, 1)) << "]]\n";

        if (!failed.empty()) {
            err << "verify-gradients: failed: " << join(failed, ',') << "\n";
            return kExitVerifyFailed;
        }
        return kExitOk;
    });
}

int cmd_prop1(const CommonOptions& opt, const Prop1Options& popt, std::ostream& out, std::ostream& err)
{
    return guarded(err, "prop1-demo", [&] {
        if (!(popt.mu1 > popt.mu2))
            throw std::invalid_argument("--mu1 must exceed --mu2");
        if (!(popt.lam > 0.0))
            throw std::invalid_argument("--lam must be positive");
        if (!(popt.k_max >= 1.0))
            throw std::invalid_argument("--k-max must be at least 1");
        const Prop1Trace trace = prop1_demo(popt.mu1, popt.mu2, popt.lam, popt.k_max, popt.zero_offset);

        fs::path dir = opt.out ? fs::path(*opt.out) : fs::path("out");
        fs::create_directories(dir);
        std::ostringstream csv;
        csv << "k,distance,w1_k,w1_star,gap,w1_solver\n";
        for (const auto& r : trace.rows)
            csv << format_exact(r.k) << "," << format_exact(r.distance) << "," << format_exact(r.w1_k) << ","
                << format_exact(r.w1_star) << "," << format_exact(r.gap) << "," << format_exact(r.w1_solver) << "\n";
        csv::write_text(dir / "prop1_trace.csv", csv.str());

        out << "mu = (" << fixed(trace.mu1) << ", " << fixed(trace.mu2) << "), lambda = " << fixed(trace.lam)
            << ", delta = " << fixed(trace.delta) << "\n";
        out << "w1* = " << fixed(trace.w1_star) << ", limiting w1 = " << fixed(trace.limit_w1) << "\n";
        out << "k            distance        gap\n";
        for (const auto& r : trace.rows) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%-12g %-15.8g %-15.8g\n", r.k, r.distance, r.gap);
            out << buf;
        }
        out << "limiting gap delta/(4 lambda) = " << fixed(trace.limit_gap) << "\n";
        out << "wrote " << (dir / "prop1_trace.csv").string() << "\n";
        return kExitOk;
    });
}

int cmd_analyze_sensitivity(const CommonOptions& opt, std::ostream& out, std::ostream& err)
{
    return guarded(err, "analyze-sensitivity", [&] {
        const RunConfig cfg = resolve_config(opt);
        const BacktestReport rep = run_configured_backtest(cfg);
        std::vector<RegimeWindow> regimes{regime_all()};
        for (const auto& r : standard_regimes())
            regimes.push_back(r);
        const std::vector<GroupingRow> rows = sensitivity_grouping(rep, cfg.pcts, regimes);

        const fs::path dir = out_dir(cfg);
        std::ostringstream csv;
        csv << "regime,measure,pct,group_size,mse_diff,mae_diff,bottom,top\n";
        out << "regime  measure  pct  group  mse_diff        mae_diff\n";
        for (const auto& r : rows) {
            csv << r.regime << "," << r.measure << "," << r.pct << "," << r.group_size << ","
                << format_exact(r.mse_diff) << "," << format_exact(r.mae_diff) << "," << join(r.bottom, ';') << ","
                << join(r.top, ';') << "\n";
            char buf[160];
            std::snprintf(buf, sizeof buf, "%-7s %-8s %4d %6d  %-15.6e %-15.6e\n", r.regime.c_str(),
                          r.measure.c_str(), r.pct, r.group_size, r.mse_diff, r.mae_diff);
            out << buf;
        }
        csv::write_text(dir / "sensitivity_grouping.csv", csv.str());
        out << "wrote " << (dir / "sensitivity_grouping.csv").string() << "\n";
        return kExitOk;
    });
}

} // namespace dfl
