#pragma once

#include <atomic>
#include <cmath>
#include <ctime>
#include <optional>
#include <string>
#include <vector>

#include "qmem/jsonutil.hpp"
#include "qmem/parallel.hpp"
#include "qmem/simulator.hpp"

namespace qmem {

/// One training point: the prepared angles, the exact outcome
/// distribution, and the simulated noisy readout.
struct Sample {
    AngleVector thetas;
    ProbDist ideal;
    ProbDist noisy;

    bool operator==(const Sample& other) const {
        return thetas.thetas == other.thetas.thetas && ideal == other.ideal &&
               noisy == other.noisy;
    }
};

struct DatasetMeta {
    std::size_t qubit_count = 0;
    std::size_t sample_count = 0;
    std::uint64_t shots = 0;
    std::string noise_fingerprint;  // hex of the noise file's content hash
    std::uint64_t master_seed = 0;
    std::string created_utc;

    /// Content identity; the creation timestamp is provenance only.
    bool same_content(const DatasetMeta& other) const {
        return qubit_count == other.qubit_count && sample_count == other.sample_count &&
               shots == other.shots && noise_fingerprint == other.noise_fingerprint &&
               master_seed == other.master_seed;
    }
};

struct Dataset {
    DatasetMeta meta;
    std::vector<Sample> samples;

    bool operator==(const Dataset& other) const {
        return meta.same_content(other.meta) && samples == other.samples;
    }
};

namespace detail {

inline std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

/// Generates sample_count pairs. Sample i draws from the stream derived
/// from (master_seed, "sample/i"), so generation is order-independent and
/// may run in parallel.
inline Dataset generate(std::size_t qubit_count, std::size_t sample_count, std::uint64_t shots,
                        const NoiseModel& model, const CouplingGraph& graph,
                        std::uint64_t master_seed, NoiseDiagnostics* diag = nullptr,
                        unsigned threads = 0) {
    if (sample_count < 1) throw std::invalid_argument("generate: sample_count must be >= 1");
    model.validate(graph);
    if (model.qubit_count != qubit_count)
        throw std::invalid_argument("generate: qubit count differs from noise model");

    Dataset dataset;
    dataset.meta = {qubit_count, sample_count,      shots,
                    hex64(model.fingerprint()),     master_seed,
                    detail::utc_now()};
    dataset.samples.resize(sample_count);
    std::atomic<std::uint64_t> clamp_events{0};
    parallel_for(
        sample_count,
        [&](std::size_t i) {
            RngStream rng = RngStream::derive(master_seed, "sample/" + std::to_string(i));
            NoiseDiagnostics local;
            AngleVector angles = sample_angles(qubit_count, rng);
            ProbDist ideal = ideal_dist(angles);
            ProbDist noisy = sample_shots(apply_noise(model, graph, ideal, &local), shots, rng);
            clamp_events += local.clamp_events;
            dataset.samples[i] = Sample{std::move(angles), std::move(ideal), std::move(noisy)};
        },
        threads);
    if (diag) diag->clamp_events += clamp_events.load();
    return dataset;
}

/// Disjoint shuffled split; sizes round to the nearest integers summing to
/// the total.
inline std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                         std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0, 1)");
    const std::size_t total = dataset.samples.size();
    const auto train_count = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(total)));
    if (train_count == 0 || train_count >= total)
        throw std::invalid_argument("split: degenerate split sizes");

    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    RngStream rng = RngStream::derive(seed, "dataset/split");
    shuffle(order, rng);

    Dataset train{dataset.meta, {}}, test{dataset.meta, {}};
    train.samples.reserve(train_count);
    test.samples.reserve(total - train_count);
    for (std::size_t i = 0; i < total; ++i)
        (i < train_count ? train : test).samples.push_back(dataset.samples[order[i]]);
    train.meta.sample_count = train.samples.size();
    test.meta.sample_count = test.samples.size();
    return {std::move(train), std::move(test)};
}

inline constexpr int kDatasetFormatVersion = 1;

/// JSONL: a metadata object on line 1, then one sample object per line.
/// Probabilities and angles are written with 17 significant digits, so a
/// round trip is bit-exact.
inline void save(const Dataset& dataset, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    json meta{{"format", "qmem-dataset"},
              {"version", kDatasetFormatVersion},
              {"qubit_count", dataset.meta.qubit_count},
              {"sample_count", dataset.meta.sample_count},
              {"shots", dataset.meta.shots},
              {"noise_fingerprint", dataset.meta.noise_fingerprint},
              {"master_seed", dataset.meta.master_seed},
              {"created_utc", dataset.meta.created_utc}};
    out << meta.dump() << '\n';
    std::string line;
    for (const auto& sample : dataset.samples) {
        line.clear();
        line += "{\"thetas\":";
        append_double_array(line, sample.thetas.thetas);
        line += ",\"ideal\":";
        append_double_array(line, sample.ideal.values());
        line += ",\"noisy\":";
        append_double_array(line, sample.noisy.values());
        line += "}";
        out << line << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline Dataset load(const std::filesystem::path& path,
                    std::optional<std::string> expected_noise_fingerprint = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw DatasetParseError(1, "missing metadata line");
    ++line_no;

    Dataset dataset;
    try {
        const json meta = json::parse(line);
        if (meta.at("format").get<std::string>() != "qmem-dataset")
            throw DatasetParseError(1, "not a qmem dataset file");
        const int version = meta.at("version").get<int>();
        if (version != kDatasetFormatVersion)
            throw DatasetVersionError("unsupported dataset version " + std::to_string(version));
        dataset.meta.qubit_count = meta.at("qubit_count").get<std::size_t>();
        dataset.meta.sample_count = meta.at("sample_count").get<std::size_t>();
        dataset.meta.shots = meta.at("shots").get<std::uint64_t>();
        dataset.meta.noise_fingerprint = meta.at("noise_fingerprint").get<std::string>();
        dataset.meta.master_seed = meta.at("master_seed").get<std::uint64_t>();
        dataset.meta.created_utc = meta.at("created_utc").get<std::string>();
    } catch (const json::exception& e) {
        throw DatasetParseError(1, std::string("bad metadata: ") + e.what());
    }
    if (expected_noise_fingerprint &&
        *expected_noise_fingerprint != dataset.meta.noise_fingerprint)
        throw DatasetHashError("dataset was generated with noise fingerprint " +
                               dataset.meta.noise_fingerprint + ", expected " +
                               *expected_noise_fingerprint);

    const std::size_t n = dataset.meta.qubit_count;
    dataset.samples.reserve(dataset.meta.sample_count);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            Sample sample{AngleVector{j.at("thetas").get<std::vector<double>>()},
                          ProbDist(n, j.at("ideal").get<std::vector<double>>()),
                          ProbDist(n, j.at("noisy").get<std::vector<double>>())};
            if (sample.thetas.qubit_count() != n)
                throw std::invalid_argument("theta count differs from qubit_count");
            const ProbDist recomputed = ideal_dist(sample.thetas);
            for (std::size_t k = 0; k < recomputed.size(); ++k)
                if (std::abs(recomputed[k] - sample.ideal[k]) > 1e-12)
                    throw std::invalid_argument("stored ideal disagrees with thetas");
            dataset.samples.push_back(std::move(sample));
        } catch (const json::exception& e) {
            throw DatasetParseError(line_no, e.what());
        } catch (const std::invalid_argument& e) {
            throw DatasetParseError(line_no, e.what());
        }
    }
    if (dataset.samples.size() != dataset.meta.sample_count)
        throw DatasetParseError(line_no,
                                "expected " + std::to_string(dataset.meta.sample_count) +
                                    " samples, found " + std::to_string(dataset.samples.size()));
    return dataset;
}

}  // namespace qmem
