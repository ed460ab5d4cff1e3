#include "dfl/data_ingest.hpp"

#include "dfl/csv.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace dfl {

std::vector<std::string> SectorMap::sectors() const
{
    std::set<std::string> s;
    for (const auto& [ticker, sector] : sector_of)
        s.insert(sector);
    return {s.begin(), s.end()};
}

const std::string& SectorMap::at(const std::string& ticker) const
{
    auto it = sector_of.find(ticker);
    if (it == sector_of.end())
        throw std::invalid_argument("unmapped ticker '" + ticker + "'");
    return it->second;
}

PricePanel load_prices(const std::filesystem::path& path)
{
    const auto lines = csv::read_lines(path);
    if (lines.empty())
        throw std::runtime_error("prices file '" + path.string() + "' is empty");

    const auto header = csv::split_record(lines.front());
    if (header.size() < 2 || csv::trim(header[0]) != "date")
        throw std::runtime_error("prices header must be 'date,<ticker>...'");
    PricePanel panel;
    for (std::size_t j = 1; j < header.size(); ++j)
        panel.tickers.push_back(csv::trim(header[j]));
    const auto n = static_cast<Eigen::Index>(panel.tickers.size());

    std::vector<std::pair<Date, std::vector<double>>> rows;
    std::size_t dropped = 0;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto fields = csv::split_record(lines[li]);
        if (fields.size() != header.size()) {
            ++dropped;
            continue;
        }
        Date date;
        try {
            date = Date::parse(csv::trim(fields[0]));
        } catch (const std::invalid_argument&) {
            ++dropped;
            continue;
        }
        std::vector<double> values(static_cast<std::size_t>(n));
        bool ok = true;
        for (Eigen::Index j = 0; j < n && ok; ++j)
            ok = csv::parse_double(fields[static_cast<std::size_t>(j) + 1], values[static_cast<std::size_t>(j)]) &&
                 values[static_cast<std::size_t>(j)] > 0.0;
        if (!ok) {
            ++dropped;
            continue;
        }
        rows.emplace_back(date, std::move(values));
    }
    if (rows.empty())
        throw std::runtime_error("prices file '" + path.string() + "' has zero usable rows");

    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].first == rows[i - 1].first)
            throw std::runtime_error("duplicate dates in prices file: " + rows[i].first.to_string());

    panel.prices.resize(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        panel.dates.push_back(rows[i].first);
        for (Eigen::Index j = 0; j < n; ++j)
            panel.prices(static_cast<Eigen::Index>(i), j) = rows[i].second[static_cast<std::size_t>(j)];
    }
    panel.dropped_rows = dropped;
    if (dropped > 0)
        std::clog << "warning: dropped " << dropped << " price row(s) from '" << path.string() << "'\n";
    return panel;
}

ReturnPanel to_excess_returns(const PricePanel& prices, double risk_free)
{
    if (prices.periods() < 2)
        throw std::invalid_argument("to_excess_returns requires at least 2 price rows");
    const Eigen::Index t = prices.periods() - 1;
    ReturnPanel out;
    out.tickers = prices.tickers;
    out.dates.assign(prices.dates.begin() + 1, prices.dates.end());
    out.risk_free = risk_free;
    out.returns.resize(t, prices.assets());
    for (Eigen::Index r = 0; r < t; ++r)
        for (Eigen::Index c = 0; c < prices.assets(); ++c) {
            const double prev = prices.prices(r, c);
            out.returns(r, c) = (prices.prices(r + 1, c) - prev) / prev - risk_free;
        }
    return out;
}

MacroPanel load_macro(const std::filesystem::path& path, const std::filesystem::path& metadata)
{
    const auto lines = csv::read_lines(path);
    if (lines.empty())
        throw std::runtime_error("macro file '" + path.string() + "' is empty");
    const auto header = csv::split_record(lines.front());
    if (header.size() != 3 || csv::trim(header[0]) != "variable" || csv::trim(header[1]) != "date" ||
        csv::trim(header[2]) != "value")
        throw std::runtime_error("macro header must be 'variable,date,value'");

    MacroPanel panel;
    std::map<std::string, std::size_t> index;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_record(lines[li]);
        if (f.size() != 3)
            throw std::runtime_error("macro file line " + std::to_string(li + 1) + ": expected 3 fields");
        const std::string name = csv::trim(f[0]);
        const Date date = Date::parse(csv::trim(f[1]));
        double value = 0.0;
        if (!csv::parse_double(f[2], value))
            throw std::runtime_error("macro file line " + std::to_string(li + 1) + ": bad value");
        auto [it, inserted] = index.try_emplace(name, panel.series.size());
        if (inserted)
            panel.series.push_back(MacroSeries{name, {}, {}, {}});
        auto& s = panel.series[it->second];
        if (!s.times.empty() && !(s.times.back() < date))
            throw std::runtime_error("non-monotone timestamps for macro variable '" + name + "' at " +
                                     date.to_string());
        s.times.push_back(date);
        s.values.push_back(value);
    }

    if (!metadata.empty() && std::filesystem::exists(metadata)) {
        const auto meta = csv::read_lines(metadata);
        for (std::size_t li = 1; li < meta.size(); ++li) {
            const auto f = csv::split_record(meta[li]);
            if (f.size() < 2)
                continue;
            auto it = index.find(csv::trim(f[0]));
            if (it != index.end())
                panel.series[it->second].description = csv::trim(f[1]);
        }
    }
    return panel;
}

SectorMap load_sector_map(const std::filesystem::path& path)
{
    const auto lines = csv::read_lines(path);
    if (lines.empty())
        throw std::runtime_error("sector map '" + path.string() + "' is empty");
    const auto header = csv::split_record(lines.front());
    if (header.size() != 2 || csv::trim(header[0]) != "ticker" || csv::trim(header[1]) != "sector")
        throw std::runtime_error("sector map header must be 'ticker,sector'");
    SectorMap map;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_record(lines[li]);
        if (f.size() != 2)
            throw std::runtime_error("sector map line " + std::to_string(li + 1) + ": expected 2 fields");
        const std::string ticker = csv::trim(f[0]);
        const std::string sector = csv::trim(f[1]);
        if (ticker.empty() || sector.empty())
            throw std::runtime_error("sector map line " + std::to_string(li + 1) + ": empty field");
        if (!map.sector_of.emplace(ticker, sector).second)
            throw std::runtime_error("ticker '" + ticker + "' mapped twice");
    }
    return map;
}

void write_returns_csv(const ReturnPanel& panel, const std::filesystem::path& path)
{
    std::ostringstream out;
    out << "date";
    for (const auto& t : panel.tickers)
        out << ',' << t;
    out << '\n';
    for (Eigen::Index r = 0; r < panel.periods(); ++r) {
        out << panel.dates[static_cast<std::size_t>(r)].to_string();
        for (Eigen::Index c = 0; c < panel.assets(); ++c)
            out << ',' << format_exact(panel.returns(r, c));
        out << '\n';
    }
    csv::write_text(path, out.str());
}

ReturnPanel read_returns_csv(const std::filesystem::path& path, double risk_free)
{
    const auto lines = csv::read_lines(path);
    if (lines.empty())
        throw std::runtime_error("returns file '" + path.string() + "' is empty");
    const auto header = csv::split_record(lines.front());
    if (header.size() < 2 || csv::trim(header[0]) != "date")
        throw std::runtime_error("returns header must be 'date,<ticker>...'");
    ReturnPanel panel;
    panel.risk_free = risk_free;
    for (std::size_t j = 1; j < header.size(); ++j)
        panel.tickers.push_back(csv::trim(header[j]));
    const auto n = static_cast<Eigen::Index>(panel.tickers.size());
    panel.returns.resize(static_cast<Eigen::Index>(lines.size() - 1), n);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_record(lines[li]);
        if (f.size() != header.size())
            throw std::runtime_error("returns file line " + std::to_string(li + 1) + ": wrong field count");
        panel.dates.push_back(Date::parse(csv::trim(f[0])));
        for (Eigen::Index j = 0; j < n; ++j) {
            double v = 0.0;
            if (!csv::parse_double(f[static_cast<std::size_t>(j) + 1], v))
                throw std::runtime_error("returns file line " + std::to_string(li + 1) + ": bad value");
            panel.returns(static_cast<Eigen::Index>(li - 1), j) = v;
        }
    }
    return panel;
}

ReturnPanel slice_rows(const ReturnPanel& panel, Eigen::Index begin, Eigen::Index end)
{
    if (begin < 0 || end > panel.periods() || begin > end)
        throw std::out_of_range("slice_rows: bad range");
    ReturnPanel out;
    out.tickers = panel.tickers;
    out.risk_free = panel.risk_free;
    out.dates.assign(panel.dates.begin() + begin, panel.dates.begin() + end);
    out.returns = panel.returns.middleRows(begin, end - begin);
    return out;
}

} // namespace dfl
