#include "dfl/config.hpp"

#include "dfl/csv.hpp"

#include <json.hpp>

#include <functional>
#include <map>

namespace dfl {

namespace {

using nlohmann::json;

struct Field {
    std::function<void(RunConfig&, const json&, const std::filesystem::path&)> read;
    std::function<json(const RunConfig&)> write;
};

template <typename T>
T as(const json& v, const std::string& key)
{
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key + ": value has the wrong type");
    }
}

template <typename T>
Field plain(T RunConfig::*member, const std::string& key)
{
    return {[member, key](RunConfig& c, const json& v, const std::filesystem::path&) { c.*member = as<T>(v, key); },
            [member](const RunConfig& c) { return json(c.*member); }};
}

Field path_field(std::string RunConfig::*member, const std::string& key)
{
    return {[member, key](RunConfig& c, const json& v, const std::filesystem::path& base) {
                const auto s = as<std::string>(v, key);
                std::filesystem::path p(s);
                if (!s.empty() && p.is_relative() && !base.empty())
                    p = base / p;
                c.*member = s.empty() ? s : p.lexically_normal().string();
            },
            [member](const RunConfig& c) { return json(c.*member); }};
}

const std::map<std::string, Field>& fields()
{
    static const std::map<std::string, Field> table = {
        {"paths.prices", path_field(&RunConfig::prices, "paths.prices")},
        {"paths.macro", path_field(&RunConfig::macro, "paths.macro")},
        {"paths.macro_meta", path_field(&RunConfig::macro_meta, "paths.macro_meta")},
        {"paths.sectors", path_field(&RunConfig::sectors, "paths.sectors")},
        {"paths.embeddings", path_field(&RunConfig::embeddings, "paths.embeddings")},
        {"paths.templates", path_field(&RunConfig::templates, "paths.templates")},
        {"data.risk_free", plain(&RunConfig::risk_free, "data.risk_free")},
        {"preprocess.epsilon", plain(&RunConfig::epsilon, "preprocess.epsilon")},
        {"preprocess.kernels", plain(&RunConfig::kernels, "preprocess.kernels")},
        {"attention.heads", plain(&RunConfig::heads, "attention.heads")},
        {"attention.head_dim", plain(&RunConfig::head_dim, "attention.head_dim")},
        {"attention.sample_const", plain(&RunConfig::sample_const, "attention.sample_const")},
        {"attention.seed", plain(&RunConfig::attention_seed, "attention.seed")},
        {"attention.encoder", plain(&RunConfig::encoder, "attention.encoder")},
        {"model.kind", plain(&RunConfig::model, "model.kind")},
        {"embedding.salt", plain(&RunConfig::embedding_salt, "embedding.salt")},
        {"loss.beta", plain(&RunConfig::beta, "loss.beta")},
        {"loss.lambda", plain(&RunConfig::lam, "loss.lambda")},
        {"loss.risk_form", plain(&RunConfig::risk_form, "loss.risk_form")},
        {"loss.solver_form", plain(&RunConfig::solver_form, "loss.solver_form")},
        {"loss.allow_mixed_form", plain(&RunConfig::allow_mixed_form, "loss.allow_mixed_form")},
        {"loss.box", plain(&RunConfig::box, "loss.box")},
        {"loss.huber_eps", plain(&RunConfig::huber_eps, "loss.huber_eps")},
        {"loss.decision_scale", plain(&RunConfig::decision_scale, "loss.decision_scale")},
        {"train.epochs", plain(&RunConfig::epochs, "train.epochs")},
        {"train.step", plain(&RunConfig::step, "train.step")},
        {"train.patience", plain(&RunConfig::patience, "train.patience")},
        {"train.early_stopping", plain(&RunConfig::early_stopping, "train.early_stopping")},
        {"train.batch_size", plain(&RunConfig::batch_size, "train.batch_size")},
        {"train.val_fraction", plain(&RunConfig::val_fraction, "train.val_fraction")},
        {"train.window_stride", plain(&RunConfig::train_stride, "train.window_stride")},
        {"backtest.lookback", plain(&RunConfig::lookback, "backtest.lookback")},
        {"backtest.horizon", plain(&RunConfig::horizon, "backtest.horizon")},
        {"backtest.cov_history", plain(&RunConfig::cov_history, "backtest.cov_history")},
        {"backtest.stride", plain(&RunConfig::rebalance_stride, "backtest.stride")},
        {"backtest.periods_per_year", plain(&RunConfig::periods_per_year, "backtest.periods_per_year")},
        {"backtest.checkpoint", path_field(&RunConfig::checkpoint, "backtest.checkpoint")},
        {"analysis.pcts", plain(&RunConfig::pcts, "analysis.pcts")},
        {"seed", plain(&RunConfig::seed, "seed")},
        {"output.dir", path_field(&RunConfig::out_dir, "output.dir")},
    };
    return table;
}

void flatten(const json& node, const std::string& prefix, std::map<std::string, json>& out)
{
    if (node.is_object()) {
        for (auto it = node.begin(); it != node.end(); ++it)
            flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
        return;
    }
    if (out.count(prefix))
        throw ConfigError(prefix + ": key given twice");
    out[prefix] = node;
}

void require(bool ok, const std::string& key, const std::string& what)
{
    if (!ok)
        throw ConfigError(key + ": " + what);
}

void require_file(const std::string& path, const std::string& key, bool required)
{
    if (path.empty()) {
        require(!required, key, "path is required");
        return;
    }
    require(std::filesystem::exists(path), key, "file not found: " + path);
}

} // namespace

HybridLossConfig RunConfig::loss_config() const
{
    HybridLossConfig c;
    c.beta = beta;
    c.lam = lam;
    c.risk_form = parse_risk_form(risk_form);
    c.solver_form = parse_risk_form(solver_form);
    c.allow_mixed_form = allow_mixed_form;
    c.box = box;
    c.huber_eps = huber_eps;
    c.decision_scale = parse_decision_scale(decision_scale);
    return c;
}

TrainConfig RunConfig::train_config() const
{
    TrainConfig c;
    c.max_epochs = epochs;
    c.base_step = step;
    c.patience = patience;
    c.early_stopping = early_stopping;
    c.batch_size = batch_size;
    c.seed = seed;
    c.val_fraction = val_fraction;
    return c;
}

WindowSpec RunConfig::window_spec(int stride) const { return {lookback, horizon, cov_history, stride}; }

BacktestConfig RunConfig::backtest_config() const
{
    BacktestConfig c;
    c.windows = window_spec(1);
    c.rebalance_stride = rebalance_stride;
    c.lam = lam;
    c.risk_form = parse_risk_form(solver_form);
    c.box = box;
    c.periods_per_year = periods_per_year;
    c.seed = seed;
    return c;
}

AttentionModelConfig RunConfig::attention_config(int assets) const
{
    AttentionModelConfig c;
    c.lookback = lookback;
    c.horizon = horizon;
    c.assets = assets;
    c.d_llm = d_llm();
    c.heads = heads;
    c.sample_const = sample_const;
    c.kernels = kernels;
    c.epsilon = epsilon;
    c.encoder = encoder;
    c.seed = mix_seed(seed, attention_seed);
    return c;
}

void RunConfig::validate() const
{
    require(model == "attention" || model == "linear" || model == "zero" || model == "oracle", "model.kind",
            "expected attention, linear, zero, or oracle");
    const bool needs_text = model == "attention";
    require_file(prices, "paths.prices", true);
    require_file(sectors, "paths.sectors", needs_text);
    require_file(macro, "paths.macro", needs_text);
    require_file(macro_meta, "paths.macro_meta", false);
    require_file(embeddings, "paths.embeddings", false);
    if (!templates.empty())
        require(std::filesystem::is_directory(templates), "paths.templates", "directory not found: " + templates);

    require(std::isfinite(risk_free) && risk_free > -1.0, "data.risk_free", "must be finite and above -1");
    require(epsilon > 0.0, "preprocess.epsilon", "must be positive");
    require(!kernels.empty(), "preprocess.kernels", "must be nonempty");
    for (int k : kernels)
        require(k >= 1, "preprocess.kernels", "sizes must be at least 1");
    require(heads >= 1, "attention.heads", "must be at least 1");
    require(head_dim >= 1, "attention.head_dim", "must be at least 1");
    require(sample_const >= 1, "attention.sample_const", "must be at least 1");
    require(encoder == "identity" || encoder == "mlp", "attention.encoder", "expected identity or mlp");

    require(beta >= 0.0 && beta <= 1.0, "loss.beta", "must lie in [0, 1]");
    require(lam > 0.0 && std::isfinite(lam), "loss.lambda", "must be positive");
    require(risk_form == "variance" || risk_form == "stdev", "loss.risk_form", "expected variance or stdev");
    require(solver_form == "variance" || solver_form == "stdev", "loss.solver_form", "expected variance or stdev");
    require(risk_form == solver_form || allow_mixed_form, "loss.risk_form",
            "differs from loss.solver_form; set loss.allow_mixed_form to permit it");
    require(huber_eps > 0.0, "loss.huber_eps", "must be positive");
    require(decision_scale == "assets_horizon" || decision_scale == "horizon", "loss.decision_scale",
            "expected assets_horizon or horizon");

    require(epochs >= 1, "train.epochs", "must be at least 1");
    require(step > 0.0, "train.step", "must be positive");
    require(patience >= 0, "train.patience", "must be nonnegative");
    require(batch_size >= 1, "train.batch_size", "must be at least 1");
    require(val_fraction > 0.0 && val_fraction < 1.0, "train.val_fraction", "must lie in (0, 1)");
    require(train_stride >= 1, "train.window_stride", "must be at least 1");

    require(lookback >= 2, "backtest.lookback", "must be at least 2");
    require(horizon >= 1, "backtest.horizon", "must be at least 1");
    require(cov_history >= 1, "backtest.cov_history", "must be at least 1");
    require(rebalance_stride >= 0, "backtest.stride", "must be nonnegative");
    require(periods_per_year > 0.0, "backtest.periods_per_year", "must be positive");
    for (int p : pcts)
        require(p >= 1 && p <= 50, "analysis.pcts", "entries must lie in [1, 50]");
    require(!out_dir.empty(), "output.dir", "must be nonempty");
}

RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir)
{
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("config: top level must be an object");
    std::map<std::string, json> flat;
    flatten(doc, "", flat);
    RunConfig cfg;
    // Defaults for relative paths also resolve against the config location.
    fields().at("output.dir").read(cfg, json(cfg.out_dir), base_dir);
    const auto& table = fields();
    for (const auto& [key, value] : flat) {
        const auto it = table.find(key);
        if (it == table.end())
            throw ConfigError(key + ": unknown configuration key");
        it->second.read(cfg, value, base_dir);
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ConfigError("config: file not found: " + path.string());
    return parse_config(csv::read_text(path), path.parent_path());
}

std::string config_to_json(const RunConfig& cfg)
{
    json out = json::object();
    for (const auto& [key, field] : fields())
        out[key] = field.write(cfg);
    return out.dump(2) + "\n";
}

} // namespace dfl
