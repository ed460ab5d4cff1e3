#pragma once

#include "dfl/backtest.hpp"
#include "dfl/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dfl {

/// Raised for invalid configuration; the message starts with the offending key.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Every setting of a run. JSON keys are flat and dotted, e.g. "loss.beta";
/// nested objects are accepted and flattened on load.
struct RunConfig {
    // paths.*
    std::string prices;
    std::string macro;
    std::string macro_meta;
    std::string sectors;
    std::string embeddings;
    std::string templates;

    // data.*
    double risk_free = 0.0;

    // preprocess.*
    double epsilon = kDefaultNormEpsilon;
    std::vector<int> kernels = kDefaultKernels;

    // attention.* and model.*
    int heads = 2;
    int head_dim = 12;
    int sample_const = 5;
    std::uint64_t attention_seed = 0;
    std::string encoder = "identity";
    std::string model = "attention";
    std::uint64_t embedding_salt = 0;

    // loss.*
    double beta = 0.4;
    double lam = kDefaultLambda;
    std::string risk_form = "variance";
    std::string solver_form = "variance";
    bool allow_mixed_form = false;
    bool box = true;
    double huber_eps = 1e-8;
    std::string decision_scale = "assets_horizon";

    // train.*
    int epochs = 50;
    double step = 1e-4;
    int patience = 10;
    bool early_stopping = true;
    int batch_size = 16;
    double val_fraction = 0.2;
    int train_stride = 1;

    // backtest.*
    int lookback = 20;
    int horizon = 5;
    int cov_history = 63;
    int rebalance_stride = 0;
    double periods_per_year = 252.0;
    std::string checkpoint;

    // analysis.*
    std::vector<int> pcts{10, 20, 30};

    std::uint64_t seed = 0;
    std::string out_dir = "out";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    [[nodiscard]] int d_llm() const { return heads * head_dim; }
    [[nodiscard]] HybridLossConfig loss_config() const;
    [[nodiscard]] TrainConfig train_config() const;
    [[nodiscard]] WindowSpec window_spec(int stride) const;
    [[nodiscard]] BacktestConfig backtest_config() const;
    [[nodiscard]] AttentionModelConfig attention_config(int assets) const;

    /// Range checks and file existence; throws ConfigError naming the key.
    void validate() const;
};

/// Parses a JSON document. Relative paths resolve against `base_dir`.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Flat dotted-key JSON; parse_config(to_json(c), any) == c for resolved paths.
std::string config_to_json(const RunConfig& cfg);

} // namespace dfl
