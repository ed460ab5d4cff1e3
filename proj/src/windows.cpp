#include "dfl/windows.hpp"

namespace dfl {

void WindowSpec::validate() const
{
    if (lookback < 2)
        throw std::invalid_argument("lookback must be at least 2");
    if (horizon < 1)
        throw std::invalid_argument("horizon must be at least 1");
    if (cov_history < 1)
        throw std::invalid_argument("cov_history must be at least 1");
    if (stride < 1)
        throw std::invalid_argument("stride must be at least 1");
}

WindowSample make_window(const ReturnPanel& panel, Eigen::Index t, const WindowSpec& spec,
                         const EmbeddingContext* ctx)
{
    spec.validate();
    if (t < spec.first_row() || t + spec.horizon > panel.periods())
        throw std::out_of_range("make_window: row " + std::to_string(t) + " lacks history or future rows");
    WindowSample s;
    s.index = t;
    s.x = panel.returns.middleRows(t - spec.lookback, spec.lookback);
    s.hist = panel.returns.middleRows(t - spec.cov_history, spec.cov_history);
    s.actual = panel.returns.middleRows(t, spec.horizon);
    if (ctx && ctx->provider) {
        if (!ctx->sectors || !ctx->macro)
            throw std::invalid_argument("make_window: embedding context needs sectors and macro data");
        const SectorSeries sectors = sector_yields(s.x, panel.tickers, *ctx->sectors);
        const PairStats stats = pair_counts(s.x, sectors);
        s.e_stocks = embed(render_pair_prompts(stats, s.x, panel.tickers, sectors, ctx->templates), *ctx->provider)
                         .vectors;
        const Date cutoff = panel.dates[static_cast<std::size_t>(t - 1)];
        std::vector<PromptDoc> macro_docs = render_macro_prompts(macro_stats(*ctx->macro, cutoff), ctx->templates);
        if (macro_docs.empty())
            macro_docs.push_back({"macro:none", PromptKind::macro,
                                  "No macroeconomic observations are available up to " + cutoff.to_string() + "."});
        s.e_macro = embed(macro_docs, *ctx->provider).vectors;
    }
    return s;
}

std::vector<WindowSample> make_windows(const ReturnPanel& panel, const WindowSpec& spec, const EmbeddingContext* ctx)
{
    spec.validate();
    std::vector<WindowSample> out;
    for (Eigen::Index t = spec.first_row(); t + spec.horizon <= panel.periods(); t += spec.stride)
        out.push_back(make_window(panel, t, spec, ctx));
    return out;
}

} // namespace dfl
