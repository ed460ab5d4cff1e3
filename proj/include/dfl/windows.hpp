#pragma once

#include "dfl/data_ingest.hpp"
#include "dfl/forecaster.hpp"
#include "dfl/prompts.hpp"

#include <vector>

namespace dfl {

struct WindowSpec {
    int lookback = 20;
    int horizon = 5;
    /// Historical rows feeding the covariance estimate.
    int cov_history = 63;
    int stride = 1;

    void validate() const;
    /// First panel row that can be forecast.
    [[nodiscard]] Eigen::Index first_row() const { return std::max(lookback, cov_history); }
};

/// Inputs for prompt embeddings; a window built without it carries empty
/// embedding matrices.
struct EmbeddingContext {
    const MacroPanel* macro = nullptr;
    const SectorMap* sectors = nullptr;
    PromptTemplates templates = PromptTemplates::defaults();
    const EmbeddingProvider* provider = nullptr;
};

/// Window whose first forecast row is `t`: x = rows [t-L, t), hist = rows
/// [t-K, t), actual = rows [t, t+H). Macro summaries use observations dated
/// on or before the last lookback date.
WindowSample make_window(const ReturnPanel& panel, Eigen::Index t, const WindowSpec& spec,
                         const EmbeddingContext* ctx = nullptr);

/// All complete windows from first_row() in steps of spec.stride.
std::vector<WindowSample> make_windows(const ReturnPanel& panel, const WindowSpec& spec,
                                       const EmbeddingContext* ctx = nullptr);

} // namespace dfl
