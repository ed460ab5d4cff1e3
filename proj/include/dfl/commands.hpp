#pragma once

#include "dfl/config.hpp"
#include "dfl/data_ingest.hpp"
#include "dfl/forecaster.hpp"
#include "dfl/prompts.hpp"
#include "dfl/windows.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace dfl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitVerifyFailed = 2;

/// Flags shared by every command; set values override the config file.
struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

struct VerifyCommandOptions {
    int instances = 100;
    std::string fault;
};

struct Prop1Options {
    double mu1 = 0.10;
    double mu2 = 0.05;
    double lam = 0.5;
    double k_max = 1e6;
    bool zero_offset = false;
};

/// Loads the config, applies flag overrides, and validates.
RunConfig resolve_config(const CommonOptions& opt);

/// Everything a model run reads from disk.
struct RunData {
    ReturnPanel panel;
    MacroPanel macro;
    SectorMap sectors;
    PromptTemplates templates = PromptTemplates::defaults();
    std::unique_ptr<EmbeddingProvider> provider;

    /// Embedding inputs when the model uses them, otherwise nullptr.
    [[nodiscard]] std::unique_ptr<EmbeddingContext> context(const Forecaster& model) const;
};

RunData load_run_data(const RunConfig& cfg);

/// Fresh model of the configured kind, loaded from backtest.checkpoint when set.
std::unique_ptr<Forecaster> build_model(const RunConfig& cfg, int assets, bool load_checkpoint_file);

/// Config as flat JSON without output.dir, so reports do not depend on where they are written.
std::string config_echo(const RunConfig& cfg);

int cmd_ingest(const CommonOptions& opt, std::ostream& out, std::ostream& err);
int cmd_train(const CommonOptions& opt, std::ostream& out, std::ostream& err);
int cmd_backtest(const CommonOptions& opt, std::ostream& out, std::ostream& err);
int cmd_verify_gradients(const CommonOptions& opt, const VerifyCommandOptions& vopt, std::ostream& out,
                         std::ostream& err);
int cmd_prop1(const CommonOptions& opt, const Prop1Options& popt, std::ostream& out, std::ostream& err);
int cmd_analyze_sensitivity(const CommonOptions& opt, std::ostream& out, std::ostream& err);

} // namespace dfl
