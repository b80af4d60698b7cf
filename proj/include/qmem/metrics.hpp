#pragma once

#include <cmath>
#include <stdexcept>

#include "qmem/probdist.hpp"

namespace qmem {
namespace metrics {

/// Floor for logarithm denominators in the KL divergence.
inline constexpr double kLogClip = 1e-12;

struct KldDiagnostics {
    std::uint64_t negative_clamps = 0;
};

/// Mean squared error over the 2^n coordinates.
inline double mse(const ProbDist& p, const ProbDist& q) {
    if (p.width() != q.width()) throw std::invalid_argument("mse: width mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - q[i];
        total += d * d;
    }
    return total / static_cast<double>(p.size());
}

/// KL divergence sum_i p_i ln(p_i / q_i), natural log, with q clipped at
/// 1e-12 and the 0 ln 0 = 0 convention. Round-off can push the clipped
/// formula a hair below zero; such values are clamped to 0 and counted.
inline double kld(const ProbDist& p_ideal, const ProbDist& q_mitigated,
                  KldDiagnostics* diag = nullptr) {
    if (p_ideal.width() != q_mitigated.width())
        throw std::invalid_argument("kld: width mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < p_ideal.size(); ++i) {
        const double p = p_ideal[i];
        if (p <= 0.0) continue;
        total += p * std::log(p / std::max(q_mitigated[i], kLogClip));
    }
    if (total < 0.0) {
        if (diag) ++diag->negative_clamps;
        total = 0.0;
    }
    return total;
}

/// 1 minus the squared Bhattacharyya coefficient.
inline double infidelity(const ProbDist& p, const ProbDist& q) {
    if (p.width() != q.width()) throw std::invalid_argument("infidelity: width mismatch");
    double coeff = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) coeff += std::sqrt(p[i] * q[i]);
    return 1.0 - coeff * coeff;
}

/// Percent reduction of a distance relative to the unmitigated baseline;
/// negative when mitigation made things worse.
inline double improvement_rate(double d_unmitigated, double d_mitigated) {
    if (!(d_unmitigated > 0.0))
        throw std::invalid_argument("improvement_rate: unmitigated distance must be > 0");
    return (d_unmitigated - d_mitigated) / d_unmitigated * 100.0;
}

}  // namespace metrics
}  // namespace qmem
