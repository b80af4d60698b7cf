#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "qmem/jsonutil.hpp"
#include "qmem/probdist.hpp"
#include "qmem/simulator.hpp"

namespace qmem {

/// Condition estimates above this are reported as suspect.
inline constexpr double kCondReportThreshold = 1e8;

/// Readout calibration matrix: column t is the device response to the
/// computational basis state t.
struct CalibrationMatrix {
    std::size_t qubit_count = 0;
    Eigen::MatrixXd lambda;

    std::string to_text() const {
        std::string out = "{\"qubit_count\":" + std::to_string(qubit_count) + ",\"lambda\":";
        std::vector<double> row(static_cast<std::size_t>(lambda.cols()));
        out += '[';
        for (Eigen::Index r = 0; r < lambda.rows(); ++r) {
            if (r) out += ',';
            for (Eigen::Index c = 0; c < lambda.cols(); ++c)
                row[static_cast<std::size_t>(c)] = lambda(r, c);
            append_double_array(out, row);
        }
        out += "]}";
        return out;
    }

    static CalibrationMatrix from_json(const json& j) {
        CalibrationMatrix cal;
        cal.qubit_count = j.at("qubit_count").get<std::size_t>();
        const auto size = static_cast<Eigen::Index>(std::size_t{1} << cal.qubit_count);
        cal.lambda.resize(size, size);
        const auto& rows = j.at("lambda");
        if (rows.size() != static_cast<std::size_t>(size))
            throw std::invalid_argument("CalibrationMatrix: row count mismatch");
        for (Eigen::Index r = 0; r < size; ++r) {
            const auto& row = rows[static_cast<std::size_t>(r)];
            if (row.size() != static_cast<std::size_t>(size))
                throw std::invalid_argument("CalibrationMatrix: column count mismatch");
            for (Eigen::Index c = 0; c < size; ++c)
                cal.lambda(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
        return cal;
    }

    void save(const std::filesystem::path& path) const { spit(path, to_text() + "\n"); }
    static CalibrationMatrix load(const std::filesystem::path& path) {
        return from_json(load_json(path));
    }
};

/// Basis state t prepared with theta_i = pi where bit i of t is 1.
inline AngleVector basis_state_angles(std::size_t index, std::size_t qubit_count) {
    AngleVector angles;
    angles.thetas.resize(qubit_count);
    for (std::size_t i = 0; i < qubit_count; ++i)
        angles.thetas[i] = bit_at(index, i) ? std::numbers::pi : 0.0;
    return angles;
}

/// Runs the 2^n basis-state circuits through the executor and collects the
/// responses as columns.
inline CalibrationMatrix calibrate(const Executor& executor, std::size_t qubit_count,
                                   std::uint64_t shots) {
    const std::size_t size = std::size_t{1} << qubit_count;
    CalibrationMatrix cal{qubit_count,
                          Eigen::MatrixXd(static_cast<Eigen::Index>(size),
                                          static_cast<Eigen::Index>(size))};
    for (std::size_t t = 0; t < size; ++t) {
        const ProbDist column = executor(basis_state_angles(t, qubit_count), shots);
        if (column.width() != qubit_count)
            throw std::invalid_argument("calibrate: executor returned wrong width");
        for (std::size_t r = 0; r < size; ++r)
            cal.lambda(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = column[r];
    }
    return cal;
}

struct LiDiagnostics {
    std::uint64_t clip_events = 0;       // negative solution entries clipped to 0
    bool condition_suspect = false;      // condition estimate above 1e8
};

/// Linear-inversion mitigation: least-squares solve against the
/// calibration matrix, negative entries clipped, then renormalized. The
/// factorization is computed once and reused across calls.
class LiMitigator {
public:
    explicit LiMitigator(CalibrationMatrix cal) : cal_(std::move(cal)), qr_(cal_.lambda) {
        const Eigen::Index size = cal_.lambda.rows();
        const auto& r = qr_.matrixR();
        const double r_max = std::abs(r(0, 0));
        const double r_min = std::abs(r(size - 1, size - 1));
        cond_ = r_min > 0.0 ? r_max / r_min : std::numeric_limits<double>::infinity();
        if (qr_.rank() < size)
            throw ConditioningError("calibration matrix is numerically singular "
                                    "(condition estimate " + dtoa17(cond_) + ")",
                                    cond_);
    }

    double condition_estimate() const { return cond_; }
    const CalibrationMatrix& calibration() const { return cal_; }

    ProbDist mitigate(const ProbDist& noisy, LiDiagnostics* diag = nullptr) const {
        if (noisy.width() != cal_.qubit_count)
            throw std::invalid_argument("li_mitigate: width mismatch");
        if (diag && cond_ > kCondReportThreshold) diag->condition_suspect = true;
        Eigen::VectorXd solution = qr_.solve(Eigen::Map<const Eigen::VectorXd>(
            noisy.values().data(), static_cast<Eigen::Index>(noisy.size())));
        std::vector<double> values(noisy.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            double v = solution(static_cast<Eigen::Index>(i));
            if (v < 0.0) {
                v = 0.0;
                if (diag) ++diag->clip_events;
            }
            values[i] = v;
        }
        return ProbDist::normalized(noisy.width(), std::move(values));
    }

private:
    CalibrationMatrix cal_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    double cond_ = 0.0;
};

}  // namespace qmem
