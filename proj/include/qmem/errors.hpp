#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qmem {

/// Conditioning on an assignment whose marginal mass is below the
/// conditioning threshold. Carries the offending assignment so callers
/// can decide on a fallback.
class ZeroMassError : public std::runtime_error {
public:
    ZeroMassError(std::string assignment_text, double mass)
        : std::runtime_error("conditioning on near-zero mass (" +
                             std::to_string(mass) + ") for assignment " +
                             assignment_text),
          assignment_text_(std::move(assignment_text)),
          mass_(mass) {}

    const std::string& assignment() const { return assignment_text_; }
    double mass() const { return mass_; }

private:
    std::string assignment_text_;
    double mass_;
};

/// A factor required by recombination or inference is missing.
class IncompleteModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Calibration matrix too ill-conditioned to invert. Carries the
/// condition-number estimate.
class ConditioningError : public std::runtime_error {
public:
    ConditioningError(std::string what, double condition_estimate)
        : std::runtime_error(std::move(what)), cond_(condition_estimate) {}

    double condition_estimate() const { return cond_; }

private:
    double cond_;
};

/// A training slice ended up with no usable input pairs, or training was
/// asked to do something structurally impossible.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Source and target networks are not shape-compatible for transfer.
class TransferError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset file carries an unknown format version.
class DatasetVersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset file does not match the expected noise-model fingerprint.
class DatasetHashError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset file is malformed. Carries the 1-based line number.
class DatasetParseError : public std::runtime_error {
public:
    DatasetParseError(std::size_t line, const std::string& detail)
        : std::runtime_error("line " + std::to_string(line) + ": " + detail),
          line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Bad experiment configuration (missing files, inconsistent widths, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qmem
