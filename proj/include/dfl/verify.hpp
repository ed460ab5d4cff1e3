#pragma once

#include "dfl/core.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace dfl {

/// Deliberate corruption of one analytic formula, used to confirm that the
/// harness detects a wrong derivative.
enum class VerifyFault { none, sensitivity_mu, sensitivity_L_jvp, grad_J_w, grad_hybrid_theta };

VerifyFault parse_verify_fault(std::string_view text);

struct VerifyCheck {
    std::string name;
    int instances = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    int instances = 100;
    VerifyFault fault = VerifyFault::none;
};

/// Random symmetric positive definite matrix A A^T / n + 0.1 I.
Matrix random_spd(Eigen::Index n, Rng& rng);

/// ||a - b|| / max(||b||, 1e-300).
double relative_error(const Matrix& a, const Matrix& b);

VerifyCheck verify_sensitivity_mu(const VerifyOptions& opt);
VerifyCheck verify_sensitivity_L_jvp(const VerifyOptions& opt);
VerifyCheck verify_grad_J_w(const VerifyOptions& opt);
VerifyCheck verify_grad_hybrid_theta(const VerifyOptions& opt);

std::vector<VerifyCheck> run_verification(const VerifyOptions& opt);

} // namespace dfl
