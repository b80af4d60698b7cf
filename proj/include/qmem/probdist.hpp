#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "qmem/bitstring.hpp"
#include "qmem/errors.hpp"

namespace qmem {

/// Conditioning on a slice with less mass than this is an error; callers
/// choose the fallback.
inline constexpr double kTauCond = 1e-9;

/// Normalization slack accepted by the ProbDist constructor.
inline constexpr double kNormTolerance = 1e-9;

/// Probability distribution over the 2^width computational basis outcomes
/// of `width` qubits. Values are non-negative and sum to 1 within 1e-9;
/// both are enforced at construction. Basis indexing is little-endian
/// (see bitstring.hpp).
class ProbDist {
public:
    ProbDist() = default;

    ProbDist(std::size_t width, std::vector<double> values)
        : width_(width), values_(std::move(values)) {
        if (values_.size() != (std::size_t{1} << width_))
            throw std::invalid_argument("ProbDist: expected 2^" + std::to_string(width_) +
                                        " values, got " + std::to_string(values_.size()));
        double total = 0.0;
        for (double v : values_) {
            if (!(v >= 0.0)) throw std::invalid_argument("ProbDist: negative or NaN entry");
            total += v;
        }
        if (std::abs(total - 1.0) > kNormTolerance)
            throw std::invalid_argument("ProbDist: entries sum to " + std::to_string(total));
    }

    static ProbDist uniform(std::size_t width) {
        const std::size_t n = std::size_t{1} << width;
        return ProbDist(width, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static ProbDist point_mass(std::size_t width, std::size_t index) {
        std::vector<double> v(std::size_t{1} << width, 0.0);
        v.at(index) = 1.0;
        return ProbDist(width, std::move(v));
    }

    /// Normalizes a non-negative vector (used where arithmetic produces a
    /// result that is normalized only up to round-off or a known factor).
    static ProbDist normalized(std::size_t width, std::vector<double> values) {
        const double total = std::accumulate(values.begin(), values.end(), 0.0);
        if (!(total > 0.0))
            throw std::invalid_argument("ProbDist::normalized: vanishing total mass");
        for (double& v : values) v /= total;
        return ProbDist(width, std::move(values));
    }

    std::size_t width() const { return width_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    const std::vector<double>& values() const { return values_; }
    double sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

    bool operator==(const ProbDist& other) const = default;

private:
    std::size_t width_ = 0;
    std::vector<double> values_{1.0};
};

/// One fixed qubit outcome inside a conditioning assignment.
struct QubitAssignment {
    std::size_t qubit = 0;
    int value = 0;
};

namespace detail {

inline void check_qubit_subset(const std::vector<std::size_t>& subset, std::size_t width,
                               const char* who) {
    if (subset.empty())
        throw std::invalid_argument(std::string(who) + ": empty qubit set");
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (subset[i] >= width)
            throw std::invalid_argument(std::string(who) + ": qubit index out of range");
        if (i > 0 && subset[i] <= subset[i - 1])
            throw std::invalid_argument(std::string(who) + ": qubit set must be ascending");
    }
}

inline std::string assignment_text(const std::vector<QubitAssignment>& given) {
    std::string text = "{";
    for (std::size_t i = 0; i < given.size(); ++i) {
        if (i) text += ", ";
        text += "q" + std::to_string(given[i].qubit) + "=" + std::to_string(given[i].value);
    }
    return text + "}";
}

}  // namespace detail

/// Marginal distribution over `keep` (ascending qubit indices). Output bit
/// j corresponds to qubit keep[j].
inline ProbDist marginalize(const ProbDist& p, const std::vector<std::size_t>& keep) {
    detail::check_qubit_subset(keep, p.width(), "marginalize");
    std::vector<double> out(std::size_t{1} << keep.size(), 0.0);
    for (std::size_t full = 0; full < p.size(); ++full) {
        std::size_t reduced = 0;
        for (std::size_t j = 0; j < keep.size(); ++j)
            reduced |= static_cast<std::size_t>(bit_at(full, keep[j])) << j;
        out[reduced] += p[full];
    }
    return ProbDist(keep.size(), std::move(out));
}

/// Mass of an assignment under p (remaining qubits summed out).
inline double assignment_mass(const ProbDist& p, const std::vector<QubitAssignment>& given) {
    double mass = 0.0;
    for (std::size_t full = 0; full < p.size(); ++full) {
        bool match = true;
        for (const auto& g : given)
            if (bit_at(full, g.qubit) != g.value) {
                match = false;
                break;
            }
        if (match) mass += p[full];
    }
    return mass;
}

/// p(target | given): qubits outside target and given are marginalized
/// out, then the given assignment is selected and renormalized. Throws
/// ZeroMassError when the assignment's mass is below kTauCond.
///
/// An empty `given` returns the plain marginal without renormalizing, so
/// conditioning a normalized distribution on nothing is bit-exact.
inline ProbDist condition(const ProbDist& p, const std::vector<std::size_t>& target,
                          const std::vector<QubitAssignment>& given) {
    detail::check_qubit_subset(target, p.width(), "condition");
    if (given.empty()) return marginalize(p, target);

    for (const auto& g : given) {
        if (g.qubit >= p.width())
            throw std::invalid_argument("condition: given qubit out of range");
        if (g.value != 0 && g.value != 1)
            throw std::invalid_argument("condition: given value must be 0 or 1");
        if (std::binary_search(target.begin(), target.end(), g.qubit))
            throw std::invalid_argument("condition: target and given overlap");
    }

    std::vector<double> out(std::size_t{1} << target.size(), 0.0);
    double mass = 0.0;
    for (std::size_t full = 0; full < p.size(); ++full) {
        bool match = true;
        for (const auto& g : given)
            if (bit_at(full, g.qubit) != g.value) {
                match = false;
                break;
            }
        if (!match) continue;
        std::size_t reduced = 0;
        for (std::size_t j = 0; j < target.size(); ++j)
            reduced |= static_cast<std::size_t>(bit_at(full, target[j])) << j;
        out[reduced] += p[full];
        mass += p[full];
    }
    if (mass < kTauCond) throw ZeroMassError(detail::assignment_text(given), mass);
    for (double& v : out) v /= mass;
    return ProbDist(target.size(), std::move(out));
}

}  // namespace qmem
