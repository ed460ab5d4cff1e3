#include "dfl/forecaster.hpp"

#include "dfl/csv.hpp"

#include <cmath>
#include <sstream>

namespace dfl {

MlpEncoder::MlpEncoder(int d_llm, int hidden, std::uint64_t seed) : seed_(seed)
{
    if (d_llm < 1 || hidden < 1)
        throw std::invalid_argument("MlpEncoder: dimensions must be positive");
    Rng rng(mix_seed(seed, 0x6d6c70));
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d_llm));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    w1_.resize(d_llm, hidden);
    b1_.resize(hidden);
    w2_.resize(hidden, d_llm);
    for (Eigen::Index i = 0; i < w1_.size(); ++i)
        w1_.data()[i] = rng.uniform(-s1, s1);
    for (Eigen::Index i = 0; i < b1_.size(); ++i)
        b1_(i) = rng.uniform(-s1, s1);
    for (Eigen::Index i = 0; i < w2_.size(); ++i)
        w2_.data()[i] = rng.uniform(-s2, s2);
}

Matrix MlpEncoder::encode(const Matrix& c) const
{
    const Matrix pre = (c * w1_).rowwise() + b1_;
    return c + pre.array().tanh().matrix() * w2_;
}

Matrix MlpEncoder::backward(const Matrix& c, const Matrix& upstream) const
{
    const Matrix pre = (c * w1_).rowwise() + b1_;
    const Matrix act = pre.array().tanh().matrix();
    const Matrix d_pre = ((upstream * w2_.transpose()).array() * (1.0 - act.array().square())).matrix();
    return upstream + d_pre * w1_.transpose();
}

std::string MlpEncoder::id() const { return "mlp:" + std::to_string(w1_.cols()) + ":" + std::to_string(seed_); }

std::unique_ptr<ContextEncoder> make_encoder(const std::string& kind, int d_llm, std::uint64_t seed)
{
    if (kind == "identity")
        return std::make_unique<IdentityEncoder>();
    if (kind == "mlp")
        return std::make_unique<MlpEncoder>(d_llm, 2 * d_llm, seed);
    throw std::invalid_argument("unknown encoder '" + kind + "' (expected identity or mlp)");
}

Matrix forecast(const Matrix& c_market, const Matrix& c_stock, const ContextEncoder& encoder,
                const ForecastHead& head, const NormStats& stats)
{
    if (c_market.rows() != c_stock.rows() || c_market.cols() != c_stock.cols())
        throw std::invalid_argument("forecast: context shapes differ");
    if (head.wf.rows() != c_market.cols())
        throw std::invalid_argument("forecast: head width does not match d_llm");
    if (stats.mu.size() != c_market.rows())
        throw std::invalid_argument("forecast: normalization stats do not match asset count");
    const Matrix z = encoder.encode(c_market) + encoder.encode(c_stock);
    return denormalize((z * head.wf).transpose(), stats);
}

Matrix linear_forecast(const Matrix& window, const Matrix& theta, int horizon)
{
    const Eigen::Index n = window.cols();
    const Eigen::Index in = window.size();
    if (horizon < 1 || theta.rows() != horizon * n || theta.cols() != in + 1)
        throw std::invalid_argument("linear_forecast: theta shape does not match window and horizon");
    const Matrix xt = window.transpose(); // column-major storage of x^T is row-major x
    const Vector flat = theta.leftCols(in) * xt.reshaped() + theta.col(in);
    return flat.reshaped(n, horizon).transpose();
}

LinearForecaster::LinearForecaster(int lookback, int horizon, int assets)
    : lookback_(lookback), horizon_(horizon), assets_(assets)
{
    if (lookback < 1 || horizon < 1 || assets < 1)
        throw std::invalid_argument("LinearForecaster: dimensions must be positive");
    theta_ = Matrix::Zero(static_cast<Eigen::Index>(horizon) * assets, static_cast<Eigen::Index>(lookback) * assets + 1);
}

Matrix LinearForecaster::predict(const WindowSample& s) const { return linear_forecast(s.x, theta_, horizon_); }

void LinearForecaster::set_parameters(const Vector& theta)
{
    if (theta.size() != theta_.size())
        throw std::invalid_argument("LinearForecaster: parameter size mismatch");
    theta_.reshaped() = theta;
}

void LinearForecaster::set_theta(const Matrix& theta)
{
    if (theta.rows() != theta_.rows() || theta.cols() != theta_.cols())
        throw std::invalid_argument("LinearForecaster: theta shape mismatch");
    theta_ = theta;
}

void LinearForecaster::randomize(Rng& rng, double scale)
{
    for (Eigen::Index i = 0; i < theta_.size(); ++i)
        theta_.data()[i] = scale * rng.normal();
}

Vector LinearForecaster::backward(const WindowSample& s, const Matrix& dpred) const
{
    if (dpred.rows() != horizon_ || dpred.cols() != assets_)
        throw std::invalid_argument("LinearForecaster::backward: upstream shape mismatch");
    const Eigen::Index in = s.x.size();
    Vector input(in + 1);
    const Matrix xt = s.x.transpose();
    input.head(in) = xt.reshaped();
    input(in) = 1.0;
    const Matrix dt = dpred.transpose();
    const Matrix grad = dt.reshaped() * input.transpose();
    return grad.reshaped();
}

void LinearForecaster::load_blocks(const std::vector<NamedBlock>& blocks)
{
    for (const auto& b : blocks)
        if (b.name == "theta") {
            set_theta(b.value);
            return;
        }
    throw std::invalid_argument("checkpoint has no 'theta' block");
}

struct AttentionForecaster::Forward {
    Normalized norm;
    Decomposition dec;
    SparsePlan plan_m, plan_s;
    AttnCache cache_m, cache_s;
    Matrix c_m, c_s, z;
    Matrix pred;
};

AttentionForecaster::AttentionForecaster(const AttentionModelConfig& cfg) : cfg_(cfg)
{
    if (cfg.lookback < 2 || cfg.horizon < 1 || cfg.assets < 1)
        throw std::invalid_argument("AttentionForecaster: invalid dimensions");
    Rng rng(mix_seed(cfg.seed, 0x617474));
    market_ = AttnParams::init(cfg.lookback, cfg.d_llm, cfg.heads, cfg.sample_const, rng);
    stock_ = AttnParams::init(cfg.lookback, cfg.d_llm, cfg.heads, cfg.sample_const, rng);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_llm));
    head_.wf.resize(cfg.d_llm, cfg.horizon);
    for (Eigen::Index i = 0; i < head_.wf.size(); ++i)
        head_.wf.data()[i] = rng.uniform(-scale, scale);
    encoder_ = make_encoder(cfg.encoder, cfg.d_llm, cfg.seed);
}

AttentionForecaster::AttentionForecaster(const AttentionForecaster& other)
    : Forecaster(other), cfg_(other.cfg_), market_(other.market_), stock_(other.stock_), head_(other.head_),
      encoder_(make_encoder(other.cfg_.encoder, other.cfg_.d_llm, other.cfg_.seed)), plan_seed_(other.plan_seed_)
{
}

AttentionForecaster::Forward AttentionForecaster::run(const WindowSample& s) const
{
    if (s.x.rows() != cfg_.lookback || s.x.cols() != cfg_.assets)
        throw std::invalid_argument("AttentionForecaster: window shape does not match the model");
    Forward f;
    f.norm = normalize(s.x, cfg_.epsilon);
    f.dec = decompose(f.norm.values, cfg_.kernels);
    f.plan_m = make_sparse_plan(cfg_.heads, cfg_.assets, s.e_macro.rows(), cfg_.sample_const, mix_seed(plan_seed_, 1));
    f.plan_s = make_sparse_plan(cfg_.heads, cfg_.assets, s.e_stocks.rows(), cfg_.sample_const, mix_seed(plan_seed_, 2));
    f.c_m = cross_attn(f.dec.trend, s.e_macro, market_, f.plan_m, &f.cache_m);
    f.c_s = cross_attn(f.dec.residual, s.e_stocks, stock_, f.plan_s, &f.cache_s);
    f.z = encoder_->encode(f.c_m) + encoder_->encode(f.c_s);
    f.pred = denormalize((f.z * head_.wf).transpose(), f.norm.stats);
    return f;
}

Matrix AttentionForecaster::predict(const WindowSample& s) const { return run(s).pred; }

Vector AttentionForecaster::parameters() const
{
    const Vector a = market_.flatten();
    const Vector b = stock_.flatten();
    Vector out(a.size() + b.size() + head_.wf.size());
    out << a, b, head_.wf.reshaped();
    return out;
}

void AttentionForecaster::set_parameters(const Vector& theta)
{
    const Eigen::Index na = market_.parameter_count();
    const Eigen::Index nb = stock_.parameter_count();
    if (theta.size() != na + nb + head_.wf.size())
        throw std::invalid_argument("AttentionForecaster: parameter size mismatch");
    market_.assign(theta.head(na));
    stock_.assign(theta.segment(na, nb));
    head_.wf.reshaped() = theta.tail(head_.wf.size());
}

Vector AttentionForecaster::backward(const WindowSample& s, const Matrix& dpred) const
{
    const Forward f = run(s);
    if (dpred.rows() != f.pred.rows() || dpred.cols() != f.pred.cols())
        throw std::invalid_argument("AttentionForecaster::backward: upstream shape mismatch");
    // pred = (Z W^F)^T * sigma + mu, column-wise per asset.
    Matrix d_norm = dpred;
    for (Eigen::Index i = 0; i < d_norm.cols(); ++i)
        d_norm.col(i) *= f.norm.stats.sigma(i);
    const Matrix dp = d_norm.transpose(); // N x H
    const Matrix d_wf = f.z.transpose() * dp;
    const Matrix dz = dp * head_.wf.transpose();
    const AttnGrad gm = cross_attn_backward(f.dec.trend, s.e_macro, market_, f.plan_m, f.cache_m,
                                            encoder_->backward(f.c_m, dz));
    const AttnGrad gs = cross_attn_backward(f.dec.residual, s.e_stocks, stock_, f.plan_s, f.cache_s,
                                            encoder_->backward(f.c_s, dz));
    const Vector a = gm.flatten();
    const Vector b = gs.flatten();
    Vector out(a.size() + b.size() + d_wf.size());
    out << a, b, d_wf.reshaped();
    return out;
}

std::vector<NamedBlock> AttentionForecaster::blocks() const
{
    std::vector<NamedBlock> out;
    for (const auto& [prefix, p] : {std::pair<std::string, const AttnParams*>{"market", &market_}, {"stock", &stock_}}) {
        out.push_back({prefix + ".input_proj", p->input_proj});
        out.push_back({prefix + ".wq", p->wq});
        out.push_back({prefix + ".wk", p->wk});
        out.push_back({prefix + ".wv", p->wv});
        out.push_back({prefix + ".wo", p->wo});
    }
    out.push_back({"head.wf", head_.wf});
    return out;
}

void AttentionForecaster::load_blocks(const std::vector<NamedBlock>& blocks)
{
    std::map<std::string, const Matrix*> by_name;
    for (const auto& b : blocks)
        by_name[b.name] = &b.value;
    auto take = [&](const std::string& name, Matrix& dst) {
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::invalid_argument("checkpoint has no '" + name + "' block");
        if (it->second->rows() != dst.rows() || it->second->cols() != dst.cols())
            throw std::invalid_argument("checkpoint block '" + name + "' has the wrong shape");
        dst = *it->second;
    };
    for (auto& [prefix, p] : {std::pair<std::string, AttnParams*>{"market", &market_}, {"stock", &stock_}}) {
        take(prefix + ".input_proj", p->input_proj);
        take(prefix + ".wq", p->wq);
        take(prefix + ".wk", p->wk);
        take(prefix + ".wv", p->wv);
        take(prefix + ".wo", p->wo);
    }
    take("head.wf", head_.wf);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    std::ostringstream out;
    for (const auto& [k, v] : ckpt.meta)
        out << '#' << k << '=' << v << '\n';
    for (const auto& b : ckpt.blocks) {
        out << b.name << ',' << b.value.rows() << ',' << b.value.cols();
        for (Eigen::Index i = 0; i < b.value.size(); ++i)
            out << ',' << format_exact(b.value.data()[i]);
        out << '\n';
    }
    csv::write_text(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    Checkpoint ckpt;
    for (const auto& line : csv::read_lines(path)) {
        if (line.front() == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("checkpoint: malformed meta line");
            ckpt.meta[line.substr(1, eq - 1)] = line.substr(eq + 1);
            continue;
        }
        const auto fields = csv::split_record(line);
        if (fields.size() < 3)
            throw std::runtime_error("checkpoint: malformed block line");
        const long rows = std::stol(fields[1]);
        const long cols = std::stol(fields[2]);
        if (rows < 0 || cols < 0 || fields.size() != static_cast<std::size_t>(3 + rows * cols))
            throw std::runtime_error("checkpoint: block '" + fields[0] + "' has the wrong value count");
        NamedBlock b{fields[0], Matrix(rows, cols)};
        for (long i = 0; i < rows * cols; ++i)
            if (!csv::parse_double(fields[static_cast<std::size_t>(3 + i)], b.value.data()[i]))
                throw std::runtime_error("checkpoint: block '" + fields[0] + "' has a bad value");
        ckpt.blocks.push_back(std::move(b));
    }
    return ckpt;
}

} // namespace dfl
