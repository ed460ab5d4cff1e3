#pragma once

#include "dfl/attention.hpp"
#include "dfl/core.hpp"
#include "dfl/preprocess.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace dfl {

/// One rolling window: lookback x, realized future returns, covariance
/// history, and the prompt embeddings available at the window's end.
struct WindowSample {
    Matrix x;      ///< L x N
    Matrix actual; ///< H x N
    Matrix hist;   ///< K x N, ends at the same row as x
    Matrix e_macro;
    Matrix e_stocks;
    /// Panel row of the first forecast step.
    Eigen::Index index = 0;
};

struct ForecastHead {
    Matrix wf; ///< d_llm x H
};

class ContextEncoder {
public:
    virtual ~ContextEncoder() = default;
    [[nodiscard]] virtual Matrix encode(const Matrix& c) const = 0;
    /// Vector-Jacobian product of encode at `c`.
    [[nodiscard]] virtual Matrix backward(const Matrix& c, const Matrix& upstream) const = 0;
    [[nodiscard]] virtual std::string id() const = 0;
};

class IdentityEncoder final : public ContextEncoder {
public:
    [[nodiscard]] Matrix encode(const Matrix& c) const override { return c; }
    [[nodiscard]] Matrix backward(const Matrix&, const Matrix& upstream) const override { return upstream; }
    [[nodiscard]] std::string id() const override { return "identity"; }
};

/// Frozen residual block c + tanh(c W1 + b1) W2 with random weights.
class MlpEncoder final : public ContextEncoder {
public:
    MlpEncoder(int d_llm, int hidden, std::uint64_t seed);
    [[nodiscard]] Matrix encode(const Matrix& c) const override;
    [[nodiscard]] Matrix backward(const Matrix& c, const Matrix& upstream) const override;
    [[nodiscard]] std::string id() const override;

private:
    Matrix w1_;
    Eigen::RowVectorXd b1_;
    Matrix w2_;
    std::uint64_t seed_;
};

std::unique_ptr<ContextEncoder> make_encoder(const std::string& kind, int d_llm, std::uint64_t seed);

/// Z = encode(C_market) + encode(C_stock); prediction (Z W^F)^T denormalized by `stats`.
Matrix forecast(const Matrix& c_market, const Matrix& c_stock, const ContextEncoder& encoder,
                const ForecastHead& head, const NormStats& stats);

/// Affine map of the row-major flattened window: theta is (H N) x (L N + 1)
/// with the bias in the last column.
Matrix linear_forecast(const Matrix& window, const Matrix& theta, int horizon);

struct NamedBlock {
    std::string name;
    Matrix value;
};

class Forecaster {
public:
    virtual ~Forecaster() = default;
    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual Matrix predict(const WindowSample& s) const = 0;
    [[nodiscard]] virtual bool trainable() const { return true; }
    [[nodiscard]] virtual Vector parameters() const = 0;
    virtual void set_parameters(const Vector& theta) = 0;
    /// Gradient of <dpred, predict(s)> with respect to parameters().
    [[nodiscard]] virtual Vector backward(const WindowSample& s, const Matrix& dpred) const = 0;
    /// Freezes any sampling randomness until the next call.
    virtual void set_plan_seed(std::uint64_t) {}
    [[nodiscard]] virtual bool needs_embeddings() const { return false; }
    [[nodiscard]] virtual std::vector<NamedBlock> blocks() const = 0;
    virtual void load_blocks(const std::vector<NamedBlock>& blocks) = 0;
    [[nodiscard]] virtual std::unique_ptr<Forecaster> clone() const = 0;
};

class LinearForecaster final : public Forecaster {
public:
    LinearForecaster(int lookback, int horizon, int assets);
    [[nodiscard]] std::string kind() const override { return "linear"; }
    [[nodiscard]] Matrix predict(const WindowSample& s) const override;
    [[nodiscard]] Vector parameters() const override { return theta_.reshaped(); }
    void set_parameters(const Vector& theta) override;
    [[nodiscard]] Vector backward(const WindowSample& s, const Matrix& dpred) const override;
    [[nodiscard]] std::vector<NamedBlock> blocks() const override { return {{"theta", theta_}}; }
    void load_blocks(const std::vector<NamedBlock>& blocks) override;
    [[nodiscard]] std::unique_ptr<Forecaster> clone() const override
    {
        return std::make_unique<LinearForecaster>(*this);
    }

    [[nodiscard]] const Matrix& theta() const { return theta_; }
    void set_theta(const Matrix& theta);
    void randomize(Rng& rng, double scale);

private:
    int lookback_, horizon_, assets_;
    Matrix theta_;
};

struct AttentionModelConfig {
    int lookback = 20;
    int horizon = 5;
    int assets = 10;
    int d_llm = 24;
    int heads = 2;
    int sample_const = 5;
    std::vector<int> kernels = kDefaultKernels;
    double epsilon = kDefaultNormEpsilon;
    std::string encoder = "identity";
    std::uint64_t seed = 0;
};

class AttentionForecaster final : public Forecaster {
public:
    explicit AttentionForecaster(const AttentionModelConfig& cfg);
    AttentionForecaster(const AttentionForecaster& other);
    AttentionForecaster& operator=(const AttentionForecaster&) = delete;

    [[nodiscard]] std::string kind() const override { return "attention"; }
    [[nodiscard]] Matrix predict(const WindowSample& s) const override;
    [[nodiscard]] Vector parameters() const override;
    void set_parameters(const Vector& theta) override;
    [[nodiscard]] Vector backward(const WindowSample& s, const Matrix& dpred) const override;
    void set_plan_seed(std::uint64_t seed) override { plan_seed_ = seed; }
    [[nodiscard]] bool needs_embeddings() const override { return true; }
    [[nodiscard]] std::vector<NamedBlock> blocks() const override;
    void load_blocks(const std::vector<NamedBlock>& blocks) override;
    [[nodiscard]] std::unique_ptr<Forecaster> clone() const override
    {
        return std::make_unique<AttentionForecaster>(*this);
    }

    [[nodiscard]] const AttentionModelConfig& config() const { return cfg_; }
    AttnParams& market() { return market_; }
    AttnParams& stock() { return stock_; }
    ForecastHead& head() { return head_; }

private:
    struct Forward;
    Forward run(const WindowSample& s) const;

    AttentionModelConfig cfg_;
    AttnParams market_;
    AttnParams stock_;
    ForecastHead head_;
    std::unique_ptr<ContextEncoder> encoder_;
    std::uint64_t plan_seed_ = 0;
};

/// Predicts zero excess return for every asset and step.
class ZeroForecaster final : public Forecaster {
public:
    ZeroForecaster(int horizon, int assets) : horizon_(horizon), assets_(assets) {}
    [[nodiscard]] std::string kind() const override { return "zero"; }
    [[nodiscard]] Matrix predict(const WindowSample&) const override { return Matrix::Zero(horizon_, assets_); }
    [[nodiscard]] bool trainable() const override { return false; }
    [[nodiscard]] Vector parameters() const override { return {}; }
    void set_parameters(const Vector&) override {}
    [[nodiscard]] Vector backward(const WindowSample&, const Matrix&) const override { return {}; }
    [[nodiscard]] std::vector<NamedBlock> blocks() const override { return {}; }
    void load_blocks(const std::vector<NamedBlock>&) override {}
    [[nodiscard]] std::unique_ptr<Forecaster> clone() const override
    {
        return std::make_unique<ZeroForecaster>(*this);
    }

private:
    int horizon_, assets_;
};

/// Returns the realized future returns of the sample.
class OracleForecaster final : public Forecaster {
public:
    [[nodiscard]] std::string kind() const override { return "oracle"; }
    [[nodiscard]] Matrix predict(const WindowSample& s) const override { return s.actual; }
    [[nodiscard]] bool trainable() const override { return false; }
    [[nodiscard]] Vector parameters() const override { return {}; }
    void set_parameters(const Vector&) override {}
    [[nodiscard]] Vector backward(const WindowSample&, const Matrix&) const override { return {}; }
    [[nodiscard]] std::vector<NamedBlock> blocks() const override { return {}; }
    void load_blocks(const std::vector<NamedBlock>&) override {}
    [[nodiscard]] std::unique_ptr<Forecaster> clone() const override
    {
        return std::make_unique<OracleForecaster>(*this);
    }
};

/// Text checkpoint: `#key=value` meta lines followed by one
/// `name,rows,cols,v...` line per block (column-major, %.17g).
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<NamedBlock> blocks;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace dfl
