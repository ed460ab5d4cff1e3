#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dfl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = Eigen::VectorXi;

/// Calendar date in the proleptic Gregorian calendar.
struct Date {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;

    /// Parses `YYYY-MM-DD`; throws std::invalid_argument on malformed input.
    static Date parse(std::string_view text);
    /// Inverse of to_days().
    static Date from_days(std::int64_t days);

    /// Days since 1970-01-01.
    [[nodiscard]] std::int64_t to_days() const;
    [[nodiscard]] std::string to_string() const;
    [[nodiscard]] Date add_months(int months) const;
    /// Month ordinal (year*12 + month-1); equal for dates in the same calendar month.
    [[nodiscard]] int month_key() const { return year * 12 + static_cast<int>(month) - 1; }

    friend bool operator==(const Date&, const Date&) = default;
    friend auto operator<=>(const Date& a, const Date& b) { return a.to_days() <=> b.to_days(); }
};

bool is_valid_date(int year, unsigned month, unsigned day);

/// Thin wrapper over mt19937_64 with platform-independent real draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller (one draw per call).
    double normal();
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// 64-bit FNV-1a hash of a byte string.
std::uint64_t fnv1a(std::string_view text);

bool all_finite(const Matrix& m);

/// Formats a double so that strtod() reproduces it exactly.
std::string format_exact(double v);

} // namespace dfl
