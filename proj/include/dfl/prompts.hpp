#pragma once

#include "dfl/core.hpp"
#include "dfl/data_ingest.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dfl {

/// Equal-weight sector returns over a window: column s is the mean of the
/// member assets of sectors[s] at each row.
struct SectorSeries {
    std::vector<std::string> sectors;
    /// Column index into `sectors` for every asset of the source window.
    std::vector<int> sector_index;
    Matrix yields;
};

SectorSeries sector_yields(const Matrix& window, const std::vector<std::string>& tickers, const SectorMap& map);

/// Strict outperformance counts over a window; ties count for neither side.
struct PairStats {
    Eigen::MatrixXi count_stock;
    Eigen::MatrixXi count_sector;
    int lookback = 0;
};

PairStats pair_counts(const Matrix& window, const SectorSeries& sectors);

enum class Pattern { rising, falling, flat };

std::string_view to_string(Pattern p);

struct MacroSummary {
    std::string name;
    std::string description;
    double mean = 0.0;
    /// Population variance of the observed values.
    double variance = 0.0;
    /// Lag-1 autocorrelation over consecutive observations, gaps ignored.
    double autocorr = 0.0;
    Pattern pattern = Pattern::flat;
    /// Least-squares slope of standardized values against time rescaled to [0, 1].
    double slope = 0.0;
    std::size_t count = 0;
    Date first;
    Date last;
};

struct MacroStats {
    std::vector<MacroSummary> variables;
    /// Names of variables skipped for having fewer than 3 observations.
    std::vector<std::string> skipped;
};

inline constexpr double kPatternFlatBand = 1e-12;

/// Summaries of every macro variable, using only observations dated on or
/// before `cutoff` when given.
MacroStats macro_stats(const MacroPanel& panel, std::optional<Date> cutoff = std::nullopt);

enum class PromptKind { stock_pair, macro };

struct PromptDoc {
    std::string id;
    PromptKind kind = PromptKind::stock_pair;
    std::string text;
};

/// `{placeholder}` substitution; throws if the template names a key not in
/// `values` or has an unterminated brace.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct PromptTemplates {
    std::string stock_pair;
    std::string macro;

    static PromptTemplates defaults();
    /// Reads `stock_pair.txt` and `macro.txt` from a directory.
    static PromptTemplates load(const std::filesystem::path& dir);
};

/// Stock-pair placeholders: asset_i, asset_j, sector_i, sector_j, count_stock,
/// count_sector, lookback, mean_i, mean_j, sector_mean_i, sector_mean_j.
std::vector<PromptDoc> render_pair_prompts(const PairStats& stats, const Matrix& window,
                                           const std::vector<std::string>& tickers, const SectorSeries& sectors,
                                           const PromptTemplates& templates);

/// Macro placeholders: name, description, mean, variance, autocorr, pattern,
/// slope, count, first_date, last_date.
std::vector<PromptDoc> render_macro_prompts(const MacroStats& stats, const PromptTemplates& templates);

/// One d-dimensional row per prompt document.
struct EmbeddingMatrix {
    Matrix vectors;
    int d_llm = 0;
    std::string provider_id;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    [[nodiscard]] virtual int dimension() const = 0;
    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual Vector embed_one(const PromptDoc& doc) const = 0;
};

/// Deterministic pseudo-random unit vectors seeded by the document text.
class HashEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(int dimension, std::uint64_t salt = 0);
    [[nodiscard]] int dimension() const override { return dim_; }
    [[nodiscard]] std::string id() const override;
    [[nodiscard]] Vector embed_one(const PromptDoc& doc) const override;

private:
    int dim_;
    std::uint64_t salt_;
};

/// Vectors read from a CSV sidecar with header `id,v_1,...,v_d`, keyed by document id.
class FileEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit FileEmbeddingProvider(const std::filesystem::path& path);
    [[nodiscard]] int dimension() const override { return dim_; }
    [[nodiscard]] std::string id() const override { return "file:" + source_; }
    [[nodiscard]] Vector embed_one(const PromptDoc& doc) const override;
    [[nodiscard]] std::size_t size() const { return table_.size(); }

private:
    int dim_ = 0;
    std::string source_;
    std::map<std::string, Vector> table_;
};

EmbeddingMatrix embed(const std::vector<PromptDoc>& docs, const EmbeddingProvider& provider);

} // namespace dfl
