// Writes the bundled synthetic dataset: factor-driven geometric random-walk
// prices on business days, a sector map, and irregular macro series.
#include "dfl/core.hpp"
#include "dfl/csv.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <vector>

namespace {

bool is_business_day(const dfl::Date& d)
{
    const auto wd = (d.to_days() % 7 + 11) % 7; // 0 = Sunday
    return wd != 0 && wd != 6;
}

struct MacroSpec {
    std::string name;
    std::string description;
    int step_days;
    double start, drift, noise;
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Generate the synthetic dataset"};
    std::string out = "data/synthetic";
    std::uint64_t seed = 20240101;
    int assets = 10;
    std::string first = "2019-01-01";
    std::string last = "2023-12-29";
    app.add_option("--out", out, "Output directory")->capture_default_str();
    app.add_option("--seed", seed, "Random seed")->capture_default_str();
    app.add_option("--assets", assets, "Number of assets")->capture_default_str();
    app.add_option("--first", first, "First price date")->capture_default_str();
    app.add_option("--last", last, "Last price date")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const dfl::Date d0 = dfl::Date::parse(first);
        const dfl::Date d1 = dfl::Date::parse(last);
        std::filesystem::create_directories(out);
        dfl::Rng rng(seed);

        const std::vector<std::string> sector_names{"Technology", "Energy", "Healthcare"};
        std::vector<std::string> tickers;
        std::vector<int> sector;
        std::vector<double> drift, beta, sector_beta, vol;
        for (int i = 0; i < assets; ++i) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "SYN%02d", i + 1);
            tickers.emplace_back(buf);
            sector.push_back(i % 3);
            drift.push_back(rng.uniform(-0.0002, 0.0008));
            beta.push_back(rng.uniform(0.6, 1.4));
            sector_beta.push_back(rng.uniform(0.3, 0.8));
            vol.push_back(rng.uniform(0.008, 0.02));
        }

        std::ostringstream prices;
        prices << "date";
        for (const auto& t : tickers)
            prices << "," << t;
        prices << "\n";
        std::vector<double> p(static_cast<std::size_t>(assets), 100.0);
        for (auto day = d0.to_days(); day <= d1.to_days(); ++day) {
            const dfl::Date d = dfl::Date::from_days(day);
            if (!is_business_day(d))
                continue;
            const double market = 0.01 * rng.normal();
            double sector_shock[3];
            for (double& s : sector_shock)
                s = 0.006 * rng.normal();
            prices << d.to_string();
            for (int i = 0; i < assets; ++i) {
                const auto k = static_cast<std::size_t>(i);
                const double r = drift[k] + beta[k] * market + sector_beta[k] * sector_shock[sector[k]] +
                                 vol[k] * rng.normal();
                p[k] *= std::exp(r - 0.5 * vol[k] * vol[k]);
                char buf[32];
                std::snprintf(buf, sizeof buf, ",%.6f", p[k]);
                prices << buf;
            }
            prices << "\n";
        }
        dfl::csv::write_text(std::filesystem::path(out) / "prices.csv", prices.str());

        std::ostringstream sectors;
        sectors << "ticker,sector\n";
        for (int i = 0; i < assets; ++i)
            sectors << tickers[static_cast<std::size_t>(i)] << "," << sector_names[static_cast<std::size_t>(sector[i])]
                    << "\n";
        dfl::csv::write_text(std::filesystem::path(out) / "sectors.csv", sectors.str());

        const std::vector<MacroSpec> specs{
            {"UNRATE", "unemployment rate, percent", 30, 4.0, 0.0, 0.15},
            {"ICSA", "initial jobless claims, thousands", 7, 220.0, 0.0, 8.0},
            {"UMCSENT", "consumer sentiment index", 30, 95.0, -0.02, 1.5},
        };
        std::ostringstream macro, meta;
        macro << "variable,date,value\n";
        meta << "variable,description\n";
        const auto macro_start = d0.add_months(-12).to_days();
        for (const auto& s : specs) {
            meta << s.name << ",\"" << s.description << "\"\n";
            double v = s.start;
            for (auto day = macro_start; day <= d1.to_days();) {
                v += s.drift + s.noise * rng.normal();
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.4f", v);
                macro << s.name << "," << dfl::Date::from_days(day).to_string() << "," << buf << "\n";
                // Irregular spacing: jitter each gap and occasionally skip a release.
                const int jitter = static_cast<int>(rng.below(5)) - 2;
                const int skip = rng.uniform() < 0.1 ? s.step_days : 0;
                day += s.step_days + jitter + skip;
            }
        }
        dfl::csv::write_text(std::filesystem::path(out) / "macro.csv", macro.str());
        dfl::csv::write_text(std::filesystem::path(out) / "macro_meta.csv", meta.str());
        std::cout << "wrote synthetic dataset to " << out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "gen_synthetic: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
