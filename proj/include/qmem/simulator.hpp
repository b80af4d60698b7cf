#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "qmem/jsonutil.hpp"
#include "qmem/probdist.hpp"
#include "qmem/rng.hpp"
#include "qmem/topology.hpp"

namespace qmem {

/// Per-qubit R_y rotation angles in radians, each in [0, pi].
struct AngleVector {
    std::vector<double> thetas;

    std::size_t qubit_count() const { return thetas.size(); }
};

/// Extra flip probability on `target` when the true state of the coupled
/// neighbor `source` is 1.
struct CrosstalkTerm {
    std::size_t target = 0;
    std::size_t source = 0;
    double delta = 0.0;
};

/// Synthetic readout noise. Stage 1 is an exact stochastic map: each
/// qubit's read bit flips with probability eps01/eps10 plus the crosstalk
/// contributions of its true-state-1 neighbors. Stage 2 distorts the
/// whole vector, q_k = p_k * (1 + alpha * p_k), then renormalizes; with
/// alpha = 0 the map is exactly linear.
struct NoiseModel {
    std::size_t qubit_count = 0;
    std::vector<double> eps01;  // P(read 1 | true 0) per qubit
    std::vector<double> eps10;  // P(read 0 | true 1) per qubit
    std::vector<CrosstalkTerm> crosstalk;
    double alpha = 0.0;
    std::uint64_t seed = 0;

    /// Structural checks; crosstalk terms must sit on graph edges.
    void validate(const CouplingGraph& graph) const {
        if (qubit_count != graph.qubit_count)
            throw std::invalid_argument("NoiseModel: qubit count differs from graph");
        if (eps01.size() != qubit_count || eps10.size() != qubit_count)
            throw std::invalid_argument("NoiseModel: eps01/eps10 must have one entry per qubit");
        for (std::size_t i = 0; i < qubit_count; ++i)
            if (eps01[i] < 0 || eps01[i] >= 0.5 || eps10[i] < 0 || eps10[i] >= 0.5)
                throw std::invalid_argument("NoiseModel: confusion rates must lie in [0, 0.5)");
        for (const auto& term : crosstalk) {
            if (term.delta < 0)
                throw std::invalid_argument("NoiseModel: crosstalk delta must be >= 0");
            if (!graph.has_edge(term.target, term.source))
                throw std::invalid_argument("NoiseModel: crosstalk pair (" +
                                            std::to_string(term.target) + "," +
                                            std::to_string(term.source) +
                                            ") is not a coupling edge");
        }
        if (alpha < 0) throw std::invalid_argument("NoiseModel: alpha must be >= 0");
    }

    json to_json() const {
        json terms = json::array();
        for (const auto& t : crosstalk)
            terms.push_back({{"from", t.source}, {"to", t.target}, {"delta", t.delta}});
        return json{{"qubit_count", qubit_count}, {"eps01", eps01},   {"eps10", eps10},
                    {"crosstalk", terms},         {"alpha", alpha},   {"seed", seed}};
    }

    static NoiseModel from_json(const json& j) {
        NoiseModel m;
        m.qubit_count = j.at("qubit_count").get<std::size_t>();
        m.eps01 = j.at("eps01").get<std::vector<double>>();
        m.eps10 = j.at("eps10").get<std::vector<double>>();
        for (const auto& t : j.at("crosstalk"))
            m.crosstalk.push_back({t.at("to").get<std::size_t>(), t.at("from").get<std::size_t>(),
                                   t.at("delta").get<double>()});
        m.alpha = j.at("alpha").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        return m;
    }

    static NoiseModel load(const std::filesystem::path& path) {
        return from_json(load_json(path));
    }
    void save(const std::filesystem::path& path) const { spit(path, to_json().dump(2) + "\n"); }

    std::uint64_t fingerprint() const { return json_fingerprint(to_json()); }
};

/// Counters surfaced by the noise map; clamped flip probabilities indicate
/// a misconfigured model.
struct NoiseDiagnostics {
    std::uint64_t clamp_events = 0;
};

/// Angles whose single-qubit states are uniform on the xz great circle:
/// z uniform in [-1, 1], theta = arccos(z). The implied P(outcome 1) =
/// (1 - z) / 2 is uniform on [0, 1].
inline AngleVector sample_angles(std::size_t qubit_count, RngStream& rng) {
    AngleVector angles;
    angles.thetas.resize(qubit_count);
    for (std::size_t i = 0; i < qubit_count; ++i)
        angles.thetas[i] = std::acos(rng.uniform(-1.0, 1.0));
    return angles;
}

/// Exact outcome distribution of the product state prod_i Ry(theta_i)|0>:
/// p(b) = prod_i cos^2(theta_i/2) or sin^2(theta_i/2) per bit.
inline ProbDist ideal_dist(const AngleVector& angles) {
    const std::size_t n = angles.qubit_count();
    std::vector<double> values(std::size_t{1} << n, 0.0);
    values[0] = 1.0;
    std::size_t filled = 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double half = angles.thetas[i] / 2.0;
        const double c = std::cos(half), s = std::sin(half);
        const double p0 = c * c, p1 = s * s;
        for (std::size_t k = 0; k < filled; ++k) {
            values[k + filled] = values[k] * p1;
            values[k] *= p0;
        }
        filled <<= 1;
    }
    return ProbDist(n, std::move(values));
}

namespace detail {

/// Crosstalk terms grouped per target qubit.
inline std::vector<std::vector<std::pair<std::size_t, double>>> crosstalk_by_target(
    const NoiseModel& model) {
    std::vector<std::vector<std::pair<std::size_t, double>>> by_target(model.qubit_count);
    for (const auto& term : model.crosstalk)
        by_target[term.target].emplace_back(term.source, term.delta);
    return by_target;
}

/// Read-string distribution for one true string: the product over qubits
/// of per-bit flip/stay probabilities, written into `out` (size 2^n).
inline void read_distribution_for(const NoiseModel& model,
                                  const std::vector<std::vector<std::pair<std::size_t, double>>>&
                                      crosstalk,
                                  std::size_t true_string, std::vector<double>& out,
                                  NoiseDiagnostics* diag) {
    const std::size_t n = model.qubit_count;
    out[0] = 1.0;
    std::size_t filled = 1;
    for (std::size_t i = 0; i < n; ++i) {
        const int ti = bit_at(true_string, i);
        double flip = ti ? model.eps10[i] : model.eps01[i];
        for (const auto& [source, delta] : crosstalk[i])
            if (bit_at(true_string, source)) flip += delta;
        if (flip > 1.0) {
            flip = 1.0;
            if (diag) ++diag->clamp_events;
        }
        const double p_read1 = ti ? 1.0 - flip : flip;
        const double p_read0 = 1.0 - p_read1;
        for (std::size_t k = 0; k < filled; ++k) {
            out[k + filled] = out[k] * p_read1;
            out[k] *= p_read0;
        }
        filled <<= 1;
    }
}

}  // namespace detail

/// The synthetic noise map. Stage 1 redistributes each true string's mass
/// over read strings via the per-qubit confusion/crosstalk products; stage
/// 2 applies the non-linear distortion and renormalizes.
inline ProbDist apply_noise(const NoiseModel& model, const CouplingGraph& graph,
                            const ProbDist& p, NoiseDiagnostics* diag = nullptr) {
    model.validate(graph);
    if (p.width() != model.qubit_count)
        throw std::invalid_argument("apply_noise: width mismatch");

    const auto crosstalk = detail::crosstalk_by_target(model);
    const std::size_t size = p.size();
    std::vector<double> acc(size, 0.0), buf(size);
    for (std::size_t t = 0; t < size; ++t) {
        const double mass = p[t];
        if (mass == 0.0) continue;
        detail::read_distribution_for(model, crosstalk, t, buf, diag);
        for (std::size_t r = 0; r < size; ++r) acc[r] += mass * buf[r];
    }

    if (model.alpha != 0.0) {
        for (double& v : acc) v *= 1.0 + model.alpha * v;
        return ProbDist::normalized(p.width(), std::move(acc));
    }
    return ProbDist(p.width(), std::move(acc));
}

/// Empirical frequencies of a multinomial draw; shots = 0 is analytic mode
/// and returns p unchanged.
inline ProbDist sample_shots(const ProbDist& p, std::uint64_t shots, RngStream& rng) {
    if (shots == 0) return p;
    std::vector<double> cumulative(p.size());
    double run = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        run += p[i];
        cumulative[i] = run;
    }
    std::vector<double> counts(p.size(), 0.0);
    for (std::uint64_t s = 0; s < shots; ++s) {
        const double x = rng.uniform() * run;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
        std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
        if (idx >= p.size()) idx = p.size() - 1;
        counts[idx] += 1.0;
    }
    for (double& c : counts) c /= static_cast<double>(shots);
    return ProbDist(p.width(), std::move(counts));
}

/// The linear stage of the noise map as an explicit 2^n x 2^n stochastic
/// matrix; column t is the read distribution of basis state t. alpha is
/// ignored by construction.
inline Eigen::MatrixXd full_lambda(const NoiseModel& model, const CouplingGraph& graph,
                                   std::size_t qubit_count) {
    model.validate(graph);
    if (qubit_count != model.qubit_count)
        throw std::invalid_argument("full_lambda: width mismatch");
    const std::size_t size = std::size_t{1} << qubit_count;
    const auto crosstalk = detail::crosstalk_by_target(model);
    Eigen::MatrixXd lambda(size, size);
    std::vector<double> buf(size);
    for (std::size_t t = 0; t < size; ++t) {
        detail::read_distribution_for(model, crosstalk, t, buf, nullptr);
        for (std::size_t r = 0; r < size; ++r) lambda(r, t) = buf[r];
    }
    return lambda;
}

/// Circuit executor: angles in, noisy outcome distribution out. shots = 0
/// means analytic mode.
using Executor = std::function<ProbDist(const AngleVector&, std::uint64_t shots)>;

/// Simulator-backed executor. The sampling stream is derived from the
/// angle bit patterns, so results are independent of call order and safe
/// to compute concurrently.
inline Executor make_simulator_executor(const NoiseModel& model, const CouplingGraph& graph,
                                        std::uint64_t seed) {
    return [model, graph, seed](const AngleVector& angles, std::uint64_t shots) {
        const ProbDist noisy = apply_noise(model, graph, ideal_dist(angles));
        if (shots == 0) return noisy;
        RngStream rng =
            RngStream::derive(seed, "exec/" + hex64(fnv1a64(angles.thetas)));
        return sample_shots(noisy, shots, rng);
    };
}

}  // namespace qmem
