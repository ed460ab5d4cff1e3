#include "dfl/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_common(CLI::App* cmd, dfl::CommonOptions& opt, bool config_required)
{
    auto* c = cmd->add_option("--config", opt.config, "JSON run configuration");
    if (config_required)
        c->required();
    cmd->add_option("--seed", opt.seed, "Seed overriding the config value");
    cmd->add_option("--out", opt.out, "Output directory overriding output.dir");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Decision-focused portfolio forecasting"};
    app.require_subcommand(1);

    dfl::CommonOptions ingest_opt, train_opt, backtest_opt, verify_opt, prop1_opt, analyze_opt;
    dfl::VerifyCommandOptions vopt;
    dfl::Prop1Options popt;

    auto* ingest = app.add_subcommand("ingest", "Load prices and write excess returns");
    add_common(ingest, ingest_opt, true);

    auto* train = app.add_subcommand("train", "Train the forecaster with the hybrid loss");
    add_common(train, train_opt, true);

    auto* backtest = app.add_subcommand("backtest", "Rolling backtest and metrics report");
    add_common(backtest, backtest_opt, true);

    auto* verify = app.add_subcommand("verify-gradients", "Finite-difference checks of the analytic derivatives");
    add_common(verify, verify_opt, false);
    verify->add_option("--instances", vopt.instances, "Random instances per check");
    verify->add_option("--inject-fault", vopt.fault, "Corrupt one formula")->group("");

    auto* prop1 = app.add_subcommand("prop1-demo", "Small mean error, persistent weight gap");
    prop1->add_option("--out", prop1_opt.out, "Output directory");
    prop1->add_option("--mu1", popt.mu1, "Mean of asset 1")->capture_default_str();
    prop1->add_option("--mu2", popt.mu2, "Mean of asset 2")->capture_default_str();
    prop1->add_option("--lam", popt.lam, "Risk aversion")->capture_default_str();
    prop1->add_option("--k-max", popt.k_max, "Largest k in the sequence")->capture_default_str();
    prop1->add_flag("--zero-offset", popt.zero_offset, "Use delta = 0");

    auto* analyze = app.add_subcommand("analyze-sensitivity", "Prediction error grouped by decision sensitivity");
    add_common(analyze, analyze_opt, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? dfl::kExitOk : dfl::kExitError;
    }

    if (*ingest)
        return dfl::cmd_ingest(ingest_opt, std::cout, std::cerr);
    if (*train)
        return dfl::cmd_train(train_opt, std::cout, std::cerr);
    if (*backtest)
        return dfl::cmd_backtest(backtest_opt, std::cout, std::cerr);
    if (*verify)
        return dfl::cmd_verify_gradients(verify_opt, vopt, std::cout, std::cerr);
    if (*prop1)
        return dfl::cmd_prop1(prop1_opt, popt, std::cout, std::cerr);
    return dfl::cmd_analyze_sensitivity(analyze_opt, std::cout, std::cerr);
}
