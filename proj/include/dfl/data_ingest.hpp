#pragma once

#include "dfl/core.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dfl {

/// T x N matrix of strictly positive prices on strictly increasing dates.
struct PricePanel {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    Matrix prices;
    /// Rows discarded during ingestion (missing, unparseable, or non-positive cells).
    std::size_t dropped_rows = 0;

    [[nodiscard]] Eigen::Index periods() const { return prices.rows(); }
    [[nodiscard]] Eigen::Index assets() const { return prices.cols(); }
};

/// Excess returns: row t is (P[t] - P[t-1]) / P[t-1] - risk_free.
struct ReturnPanel {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    Matrix returns;
    double risk_free = 0.0;

    [[nodiscard]] Eigen::Index periods() const { return returns.rows(); }
    [[nodiscard]] Eigen::Index assets() const { return returns.cols(); }
};

struct MacroSeries {
    std::string name;
    std::string description;
    std::vector<Date> times;
    std::vector<double> values;
};

/// Irregularly sampled macro variables; each series keeps its own observation times.
struct MacroPanel {
    std::vector<MacroSeries> series;

    [[nodiscard]] std::size_t size() const { return series.size(); }
};

struct SectorMap {
    std::map<std::string, std::string> sector_of;

    /// Sorted list of distinct sector labels.
    [[nodiscard]] std::vector<std::string> sectors() const;
    /// Sector label for `ticker`; throws std::invalid_argument if unmapped.
    [[nodiscard]] const std::string& at(const std::string& ticker) const;
};

PricePanel load_prices(const std::filesystem::path& path);
ReturnPanel to_excess_returns(const PricePanel& prices, double risk_free);

/// Long-format `variable,date,value`. If `metadata` names an existing file with
/// header `variable,description`, descriptions are attached to the series.
MacroPanel load_macro(const std::filesystem::path& path, const std::filesystem::path& metadata = {});

SectorMap load_sector_map(const std::filesystem::path& path);

/// Writes `date,<ticker>...` with round-trip exact decimal formatting.
void write_returns_csv(const ReturnPanel& panel, const std::filesystem::path& path);
/// Reads the format written by write_returns_csv. The risk-free rate is not
/// stored in the file and must be supplied.
ReturnPanel read_returns_csv(const std::filesystem::path& path, double risk_free = 0.0);

/// Rows [begin, end) of a return panel as a new panel.
ReturnPanel slice_rows(const ReturnPanel& panel, Eigen::Index begin, Eigen::Index end);

} // namespace dfl
