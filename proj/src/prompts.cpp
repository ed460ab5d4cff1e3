#include "dfl/prompts.hpp"

#include "dfl/csv.hpp"

#include <cmath>
#include <cstdio>

namespace dfl {

namespace {

std::string fmt_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

SectorSeries sector_yields(const Matrix& window, const std::vector<std::string>& tickers, const SectorMap& map)
{
    if (static_cast<Eigen::Index>(tickers.size()) != window.cols())
        throw std::invalid_argument("sector_yields: ticker count does not match window width");
    SectorSeries out;
    std::map<std::string, int> index;
    for (const auto& t : tickers) {
        const std::string& s = map.at(t);
        auto [it, inserted] = index.try_emplace(s, static_cast<int>(out.sectors.size()));
        if (inserted)
            out.sectors.push_back(s);
        out.sector_index.push_back(it->second);
    }
    const auto ns = static_cast<Eigen::Index>(out.sectors.size());
    out.yields = Matrix::Zero(window.rows(), ns);
    Vector members = Vector::Zero(ns);
    for (Eigen::Index i = 0; i < window.cols(); ++i) {
        const int s = out.sector_index[static_cast<std::size_t>(i)];
        out.yields.col(s) += window.col(i);
        members(s) += 1.0;
    }
    for (Eigen::Index s = 0; s < ns; ++s)
        out.yields.col(s) /= members(s);
    return out;
}

PairStats pair_counts(const Matrix& window, const SectorSeries& sectors)
{
    if (window.rows() < 1)
        throw std::invalid_argument("pair_counts: empty window");
    if (sectors.yields.rows() != window.rows() ||
        static_cast<Eigen::Index>(sectors.sector_index.size()) != window.cols())
        throw std::invalid_argument("pair_counts: dimension mismatch between window and sector series");
    const Eigen::Index n = window.cols();
    PairStats out;
    out.lookback = static_cast<int>(window.rows());
    out.count_stock = Eigen::MatrixXi::Zero(n, n);
    out.count_sector = Eigen::MatrixXi::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int si = sectors.sector_index[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j)
                continue;
            const int sj = sectors.sector_index[static_cast<std::size_t>(j)];
            int cs = 0, cz = 0;
            for (Eigen::Index u = 0; u < window.rows(); ++u) {
                cs += window(u, i) > window(u, j);
                cz += sectors.yields(u, si) > sectors.yields(u, sj);
            }
            out.count_stock(i, j) = cs;
            out.count_sector(i, j) = cz;
        }
    }
    return out;
}

std::string_view to_string(Pattern p)
{
    switch (p) {
    case Pattern::rising:
        return "rising";
    case Pattern::falling:
        return "falling";
    case Pattern::flat:
        return "flat";
    }
    return "flat";
}

MacroStats macro_stats(const MacroPanel& panel, std::optional<Date> cutoff)
{
    MacroStats out;
    for (const auto& series : panel.series) {
        std::vector<double> x;
        std::vector<double> t;
        for (std::size_t k = 0; k < series.values.size(); ++k) {
            if (cutoff && *cutoff < series.times[k])
                break;
            x.push_back(series.values[k]);
            t.push_back(static_cast<double>(series.times[k].to_days()));
        }
        if (x.size() < 3) {
            out.skipped.push_back(series.name);
            continue;
        }
        const auto n = static_cast<double>(x.size());
        MacroSummary s;
        s.name = series.name;
        s.description = series.description;
        s.count = x.size();
        s.first = series.times.front();
        s.last = series.times[x.size() - 1];

        double mean = 0.0;
        for (double v : x)
            mean += v;
        mean /= n;
        double ss = 0.0;
        for (double v : x)
            ss += (v - mean) * (v - mean);
        s.mean = mean;
        s.variance = ss / n;

        if (ss > 0.0) {
            double lag = 0.0;
            for (std::size_t k = 1; k < x.size(); ++k)
                lag += (x[k] - mean) * (x[k - 1] - mean);
            s.autocorr = lag / ss;

            // Slope of standardized values against time mapped onto [0, 1].
            const double t0 = t.front();
            const double span = t.back() - t0;
            const double sd = std::sqrt(s.variance);
            double tm = 0.0;
            for (double tv : t)
                tm += (tv - t0) / span;
            tm /= n;
            double sxy = 0.0, sxx = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double u = (t[k] - t0) / span - tm;
                sxy += u * (x[k] - mean) / sd;
                sxx += u * u;
            }
            s.slope = sxy / sxx;
        }
        if (s.slope > kPatternFlatBand)
            s.pattern = Pattern::rising;
        else if (s.slope < -kPatternFlatBand)
            s.pattern = Pattern::falling;
        else
            s.pattern = Pattern::flat;
        out.variables.push_back(std::move(s));
    }
    return out;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values)
{
    std::string out;
    out.reserve(tmpl.size() + 64);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const char c = tmpl[i];
        if (c != '{') {
            out.push_back(c);
            ++i;
            continue;
        }
        const auto close = tmpl.find('}', i + 1);
        if (close == std::string_view::npos)
            throw std::invalid_argument("template has an unterminated placeholder");
        const std::string key(tmpl.substr(i + 1, close - i - 1));
        auto it = values.find(key);
        if (it == values.end())
            throw std::invalid_argument("missing placeholder value '{" + key + "}'");
        out += it->second;
        i = close + 1;
    }
    return out;
}

PromptTemplates PromptTemplates::defaults()
{
    return PromptTemplates{
        "Over the last {lookback} periods, {asset_i} ({sector_i}) returned more than {asset_j} ({sector_j}) in "
        "{count_stock} periods. The {sector_i} sector outperformed the {sector_j} sector in {count_sector} periods. "
        "Mean return of {asset_i}: {mean_i}; of {asset_j}: {mean_j}. Mean sector yield of {sector_i}: "
        "{sector_mean_i}; of {sector_j}: {sector_mean_j}.",
        "Macroeconomic variable {name} ({description}) has {count} observations from {first_date} to {last_date}. "
        "Mean {mean}, variance {variance}, lag-1 autocorrelation {autocorr}. The series is {pattern} "
        "(standardized slope {slope}).",
    };
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir)
{
    auto strip = [](std::string s) {
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r'))
            s.pop_back();
        return s;
    };
    return PromptTemplates{strip(csv::read_text(dir / "stock_pair.txt")), strip(csv::read_text(dir / "macro.txt"))};
}

std::vector<PromptDoc> render_pair_prompts(const PairStats& stats, const Matrix& window,
                                           const std::vector<std::string>& tickers, const SectorSeries& sectors,
                                           const PromptTemplates& templates)
{
    const Eigen::Index n = stats.count_stock.rows();
    if (window.cols() != n || static_cast<Eigen::Index>(tickers.size()) != n)
        throw std::invalid_argument("render_pair_prompts: dimension mismatch");
    const Vector asset_mean = window.colwise().mean().transpose();
    const Vector sector_mean = sectors.yields.colwise().mean().transpose();
    std::vector<PromptDoc> docs;
    docs.reserve(static_cast<std::size_t>(n * (n - 1)));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j)
                continue;
            const int si = sectors.sector_index[static_cast<std::size_t>(i)];
            const int sj = sectors.sector_index[static_cast<std::size_t>(j)];
            const std::map<std::string, std::string> values{
                {"asset_i", tickers[static_cast<std::size_t>(i)]},
                {"asset_j", tickers[static_cast<std::size_t>(j)]},
                {"sector_i", sectors.sectors[static_cast<std::size_t>(si)]},
                {"sector_j", sectors.sectors[static_cast<std::size_t>(sj)]},
                {"count_stock", std::to_string(stats.count_stock(i, j))},
                {"count_sector", std::to_string(stats.count_sector(i, j))},
                {"lookback", std::to_string(stats.lookback)},
                {"mean_i", fmt_real(asset_mean(i))},
                {"mean_j", fmt_real(asset_mean(j))},
                {"sector_mean_i", fmt_real(sector_mean(si))},
                {"sector_mean_j", fmt_real(sector_mean(sj))},
            };
            docs.push_back(PromptDoc{"pair:" + tickers[static_cast<std::size_t>(i)] + ":" +
                                         tickers[static_cast<std::size_t>(j)],
                                     PromptKind::stock_pair, fill_template(templates.stock_pair, values)});
        }
    }
    return docs;
}

std::vector<PromptDoc> render_macro_prompts(const MacroStats& stats, const PromptTemplates& templates)
{
    std::vector<PromptDoc> docs;
    for (const auto& v : stats.variables) {
        const std::map<std::string, std::string> values{
            {"name", v.name},
            {"description", v.description.empty() ? v.name : v.description},
            {"mean", fmt_real(v.mean)},
            {"variance", fmt_real(v.variance)},
            {"autocorr", fmt_real(v.autocorr)},
            {"pattern", std::string(to_string(v.pattern))},
            {"slope", fmt_real(v.slope)},
            {"count", std::to_string(v.count)},
            {"first_date", v.first.to_string()},
            {"last_date", v.last.to_string()},
        };
        docs.push_back(PromptDoc{"macro:" + v.name, PromptKind::macro, fill_template(templates.macro, values)});
    }
    return docs;
}

HashEmbeddingProvider::HashEmbeddingProvider(int dimension, std::uint64_t salt) : dim_(dimension), salt_(salt)
{
    if (dimension < 1)
        throw std::invalid_argument("embedding dimension must be positive");
}

std::string HashEmbeddingProvider::id() const
{
    return "hash:d=" + std::to_string(dim_) + ":salt=" + std::to_string(salt_);
}

Vector HashEmbeddingProvider::embed_one(const PromptDoc& doc) const
{
    Rng rng(mix_seed(fnv1a(doc.text), salt_));
    Vector v(dim_);
    double norm = 0.0;
    do {
        for (int k = 0; k < dim_; ++k)
            v(k) = rng.normal();
        norm = v.norm();
    } while (norm == 0.0);
    return v / norm;
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& path) : source_(path.filename().string())
{
    const auto lines = csv::read_lines(path);
    if (lines.empty())
        throw std::runtime_error("embedding file '" + path.string() + "' is empty");
    const auto header = csv::split_record(lines.front());
    if (header.size() < 2 || csv::trim(header[0]) != "id")
        throw std::runtime_error("embedding header must be 'id,v_1,...,v_d'");
    dim_ = static_cast<int>(header.size() - 1);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split_record(lines[li]);
        if (static_cast<int>(f.size()) != dim_ + 1)
            throw std::runtime_error("embedding file line " + std::to_string(li + 1) + ": dimension mismatch");
        Vector v(dim_);
        for (int k = 0; k < dim_; ++k)
            if (!csv::parse_double(f[static_cast<std::size_t>(k) + 1], v(k)))
                throw std::runtime_error("embedding file line " + std::to_string(li + 1) + ": bad value");
        table_[csv::trim(f[0])] = std::move(v);
    }
}

Vector FileEmbeddingProvider::embed_one(const PromptDoc& doc) const
{
    auto it = table_.find(doc.id);
    if (it == table_.end())
        throw std::out_of_range("embedding file has no vector for id '" + doc.id + "'");
    return it->second;
}

EmbeddingMatrix embed(const std::vector<PromptDoc>& docs, const EmbeddingProvider& provider)
{
    if (docs.empty())
        throw std::invalid_argument("embed: no documents");
    EmbeddingMatrix out;
    out.d_llm = provider.dimension();
    out.provider_id = provider.id();
    out.vectors.resize(static_cast<Eigen::Index>(docs.size()), out.d_llm);
    for (std::size_t r = 0; r < docs.size(); ++r) {
        const Vector v = provider.embed_one(docs[r]);
        if (v.size() != out.d_llm)
            throw std::runtime_error("embed: dimension mismatch for '" + docs[r].id + "'");
        if (!v.allFinite())
            throw std::runtime_error("embed: non-finite vector for '" + docs[r].id + "'");
        out.vectors.row(static_cast<Eigen::Index>(r)) = v.transpose();
    }
    return out;
}

} // namespace dfl
