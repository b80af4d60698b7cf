#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qmem/ci.hpp"
#include "qmem/dataset.hpp"
#include "qmem/li.hpp"
#include "qmem/metrics.hpp"
#include "qmem/parallel.hpp"

namespace qmem {

enum class Method { kUnmitigated, kLi, kNn, kCi, kCitl };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::kUnmitigated: return "unmitigated";
        case Method::kLi: return "li";
        case Method::kNn: return "nn";
        case Method::kCi: return "ci";
        case Method::kCitl: return "citl";
    }
    return "?";
}

inline Method method_from_name(const std::string& name) {
    for (Method m : {Method::kUnmitigated, Method::kLi, Method::kNn, Method::kCi, Method::kCitl})
        if (name == method_name(m)) return m;
    throw ConfigError("unknown method '" + name + "'");
}

struct ExperimentConfig {
    std::filesystem::path noise_file;
    std::filesystem::path graph_file;
    std::filesystem::path partition_file;  // needed for ci/citl
    std::filesystem::path dataset_file;    // optional: load instead of generating
    std::size_t samples = 7500;
    std::uint64_t shots = 32000;
    double train_fraction = 0.8;
    std::vector<Method> methods{Method::kUnmitigated, Method::kLi, Method::kCi};
    std::vector<std::size_t> sweep_sizes;
    std::vector<Method> sweep_methods;
    std::size_t repetitions = 5;
    std::uint64_t master_seed = 42;
    std::size_t epochs = 100;  // desk-scale default; the full recipe uses 300
    std::size_t batch_size = 16;
    double learning_rate = 1e-4;
    std::map<std::size_t, std::size_t> citl_sources;  // target leaf -> source leaf
    TrainConfig::TransferScope transfer_scope =
        TrainConfig::TransferScope::kLastHiddenAndOutput;
    std::filesystem::path output_dir = "out";
    unsigned threads = 0;  // 0 = QMEM_THREADS env or hardware

    bool wants(Method m) const {
        return std::find(methods.begin(), methods.end(), m) != methods.end() ||
               std::find(sweep_methods.begin(), sweep_methods.end(), m) != sweep_methods.end();
    }
};

struct MetricTriple {
    double mse = 0.0;
    double kld = 0.0;
    double infidelity = 0.0;
};

struct RepResult {
    MetricTriple d;
    MetricTriple r;  // improvement rates vs this rep's unmitigated baseline
    double train_seconds = 0.0;
    std::size_t trainable_params = 0;
    double leaf_train_seconds = 0.0;         // ci/citl: summed leaf-net training time
    double target_leaf_train_seconds = 0.0;  // ci/citl: summed over citl target leaves
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;

    static Aggregate of(const std::vector<double>& xs) {
        Aggregate a;
        if (xs.empty()) return a;
        double sum = 0.0;
        a.min = xs.front();
        for (double x : xs) {
            sum += x;
            a.min = std::min(a.min, x);
        }
        a.mean = sum / static_cast<double>(xs.size());
        double sq = 0.0;
        for (double x : xs) sq += (x - a.mean) * (x - a.mean);
        a.stddev = xs.size() > 1 ? std::sqrt(sq / static_cast<double>(xs.size() - 1)) : 0.0;
        return a;
    }
};

struct MethodStats {
    std::vector<RepResult> reps;
    Aggregate d_mse, d_kld, d_if;
    Aggregate r_mse, r_kld, r_if;
    double mean_train_seconds = 0.0;
    std::size_t trainable_params = 0;

    void aggregate() {
        auto collect = [&](auto proj) {
            std::vector<double> xs;
            xs.reserve(reps.size());
            for (const auto& rep : reps) xs.push_back(proj(rep));
            return Aggregate::of(xs);
        };
        d_mse = collect([](const RepResult& r) { return r.d.mse; });
        d_kld = collect([](const RepResult& r) { return r.d.kld; });
        d_if = collect([](const RepResult& r) { return r.d.infidelity; });
        r_mse = collect([](const RepResult& r) { return r.r.mse; });
        r_kld = collect([](const RepResult& r) { return r.r.kld; });
        r_if = collect([](const RepResult& r) { return r.r.infidelity; });
        double t = 0.0;
        for (const auto& rep : reps) t += rep.train_seconds;
        mean_train_seconds = reps.empty() ? 0.0 : t / static_cast<double>(reps.size());
        trainable_params = reps.empty() ? 0 : reps.front().trainable_params;
    }
};

struct SweepPoint {
    std::size_t train_size = 0;
    std::vector<double> mse_per_rep;
    Aggregate mse;
};

struct RunReport {
    std::uint64_t config_hash = 0;
    std::size_t qubit_count = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    std::uint64_t shots = 0;
    std::size_t repetitions = 0;
    std::size_t epochs = 0;
    std::vector<Method> method_order;  // unmitigated first
    std::map<Method, MethodStats> stats;
    std::map<Method, std::vector<SweepPoint>> sweeps;
    std::uint64_t dataset_clamp_events = 0;
    double li_condition_estimate = 0.0;
    double total_seconds = 0.0;  // informational only
};

namespace detail {

inline MetricTriple mean_metrics(const Dataset& test,
                                 const std::function<ProbDist(const ProbDist&)>& mitigate) {
    MetricTriple sum;
    for (const auto& sample : test.samples) {
        const ProbDist out = mitigate(sample.noisy);
        sum.mse += metrics::mse(sample.ideal, out);
        sum.kld += metrics::kld(sample.ideal, out);
        sum.infidelity += metrics::infidelity(sample.ideal, out);
    }
    const auto n = static_cast<double>(test.samples.size());
    return {sum.mse / n, sum.kld / n, sum.infidelity / n};
}

inline MetricTriple rates_against(const MetricTriple& unmitigated, const MetricTriple& d) {
    return {metrics::improvement_rate(unmitigated.mse, d.mse),
            metrics::improvement_rate(unmitigated.kld, d.kld),
            metrics::improvement_rate(unmitigated.infidelity, d.infidelity)};
}

inline Dataset head(const Dataset& source, std::size_t count) {
    Dataset out{source.meta, {source.samples.begin(),
                              source.samples.begin() + static_cast<std::ptrdiff_t>(count)}};
    out.meta.sample_count = count;
    return out;
}

}  // namespace detail

/// Runs the full grid: generate (or load) the dataset once, then for every
/// repetition split it, train each requested method, evaluate all three
/// distances on the test split, and compute improvement rates against that
/// repetition's unmitigated baseline. Sweep entries retrain on nested
/// train subsets against the same per-repetition test split. Every number
/// in the returned report is a pure function of the configuration.
inline RunReport run_experiment(const ExperimentConfig& config) {
    const auto wall_start = std::chrono::steady_clock::now();

    if (config.repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
    CouplingGraph graph;
    NoiseModel noise;
    try {
        graph = CouplingGraph::load(config.graph_file);
        noise = NoiseModel::load(config.noise_file);
        noise.validate(graph);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("noise/graph setup: ") + e.what());
    }
    const std::size_t qubit_count = noise.qubit_count;

    PartitionSpec partition;
    const bool needs_partition = config.wants(Method::kCi) || config.wants(Method::kCitl);
    if (needs_partition) {
        try {
            partition = PartitionSpec::load(config.partition_file);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("partition setup: ") + e.what());
        }
        const ValidationReport report = validate_partition(graph, partition);
        if (!report.valid)
            throw ConfigError("partition rejected:\n" + report.to_string());
    }
    if (config.wants(Method::kCitl)) {
        if (config.citl_sources.empty())
            throw ConfigError("citl requested but no citl_sources given");
        for (const auto& [target, source] : config.citl_sources)
            if (target >= partition.leaves.size() || source >= partition.leaves.size())
                throw ConfigError("citl_sources leaf index out of range");
    }
    for (Method m : config.sweep_methods)
        if (m == Method::kUnmitigated || m == Method::kLi)
            throw ConfigError("sweep applies to trained methods only");
    if (!config.sweep_sizes.empty() && config.sweep_methods.empty())
        throw ConfigError("sweep_sizes given but sweep_methods empty");

    RunReport report;
    report.qubit_count = qubit_count;
    report.shots = config.shots;
    report.repetitions = config.repetitions;
    report.epochs = config.epochs;

    // Dataset: one per experiment, shared by all repetitions.
    NoiseDiagnostics noise_diag;
    Dataset dataset;
    if (!config.dataset_file.empty()) {
        dataset = load(config.dataset_file, hex64(noise.fingerprint()));
        if (dataset.meta.qubit_count != qubit_count)
            throw ConfigError("dataset qubit count differs from noise model");
    } else {
        dataset = generate(qubit_count, config.samples, config.shots, noise, graph,
                           config.master_seed, &noise_diag, config.threads);
    }
    report.dataset_clamp_events = noise_diag.clamp_events;

    const std::size_t total = dataset.samples.size();
    const auto train_count = static_cast<std::size_t>(
        std::llround(config.train_fraction * static_cast<double>(total)));
    if (train_count == 0 || train_count >= total)
        throw ConfigError("degenerate train/test split");
    report.train_count = train_count;
    report.test_count = total - train_count;
    for (std::size_t s : config.sweep_sizes)
        if (s < 1 || s > train_count)
            throw ConfigError("sweep size " + std::to_string(s) +
                              " outside [1, train_count]");

    // Config identity: content fingerprints plus every science-relevant knob.
    {
        std::string text = "noise=" + hex64(noise.fingerprint()) +
                           "|graph=" + hex64(json_fingerprint(graph.to_json()));
        if (needs_partition)
            text += "|partition=" + hex64(json_fingerprint(partition.to_json()));
        text += "|samples=" + std::to_string(total) + "|shots=" + std::to_string(config.shots) +
                "|frac=" + dtoa17(config.train_fraction) +
                "|reps=" + std::to_string(config.repetitions) +
                "|seed=" + std::to_string(config.master_seed) +
                "|epochs=" + std::to_string(config.epochs) +
                "|batch=" + std::to_string(config.batch_size) +
                "|lr=" + dtoa17(config.learning_rate) + "|methods=";
        for (Method m : config.methods) text += std::string(method_name(m)) + ",";
        text += "|sweep=";
        for (std::size_t s : config.sweep_sizes) text += std::to_string(s) + ",";
        for (Method m : config.sweep_methods) text += std::string(method_name(m)) + ",";
        for (const auto& [t, s] : config.citl_sources)
            text += std::to_string(t) + ":" + std::to_string(s) + ",";
        report.config_hash = fnv1a64(text);
    }

    // One calibration per experiment (split-independent), reused by reps.
    std::optional<LiMitigator> li;
    if (config.wants(Method::kLi)) {
        const Executor executor = make_simulator_executor(
            noise, graph, RngStream::derive(config.master_seed, "calibrate").next_u64());
        li.emplace(calibrate(executor, qubit_count, config.shots));
        report.li_condition_estimate = li->condition_estimate();
    }

    // Per-repetition splits and unmitigated baselines (cheap, done upfront
    // so every parallel task can read its rep's baseline).
    std::vector<Dataset> rep_train(config.repetitions), rep_test(config.repetitions);
    std::vector<MetricTriple> rep_unmit(config.repetitions);
    for (std::size_t r = 0; r < config.repetitions; ++r) {
        const std::uint64_t rep_seed =
            RngStream::derive(config.master_seed, "rep" + std::to_string(r)).next_u64();
        auto [train_part, test_part] = split(dataset, config.train_fraction, rep_seed);
        rep_train[r] = std::move(train_part);
        rep_test[r] = std::move(test_part);
        rep_unmit[r] =
            detail::mean_metrics(rep_test[r], [](const ProbDist& noisy) { return noisy; });
    }

    const TrainConfig base_train_config{
        TrainSchedule{config.epochs, config.batch_size}, config.learning_rate,
        TrainConfig::default_tau_skip(config.shots), config.transfer_scope};

    // Canonical method order, unmitigated always reported.
    report.method_order = {Method::kUnmitigated};
    for (Method m : {Method::kLi, Method::kNn, Method::kCi, Method::kCitl})
        if (std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end())
            report.method_order.push_back(m);

    struct Task {
        bool sweep = false;
        Method method = Method::kUnmitigated;
        std::size_t rep = 0;
        std::size_t size_index = 0;
    };
    std::vector<Task> tasks;
    for (Method m : report.method_order)
        for (std::size_t r = 0; r < config.repetitions; ++r) tasks.push_back({false, m, r, 0});
    for (Method m : config.sweep_methods)
        for (std::size_t si = 0; si < config.sweep_sizes.size(); ++si)
            for (std::size_t r = 0; r < config.repetitions; ++r)
                tasks.push_back({true, m, r, si});

    std::vector<RepResult> main_results(tasks.size());
    std::vector<double> sweep_results(tasks.size(), 0.0);

    auto train_and_eval = [&](Method method, const Dataset& train_set, const Dataset& test_set,
                              const std::string& seed_label, RepResult& out) {
        const std::uint64_t seed =
            RngStream::derive(config.master_seed, seed_label).next_u64();
        const auto started = std::chrono::steady_clock::now();
        CiModel model;
        switch (method) {
            case Method::kNn:
                model = train_ci(train_set, PartitionSpec::trivial(qubit_count),
                                 base_train_config, seed, 1);
                break;
            case Method::kCi:
                model = train_ci(train_set, partition, base_train_config, seed, 1);
                break;
            case Method::kCitl:
                model = train_citl(train_set, partition, config.citl_sources,
                                   base_train_config, seed, 1);
                break;
            default:
                throw std::logic_error("train_and_eval: not a trained method");
        }
        out.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        out.trainable_params = model.trainable_param_count();
        for (const auto& [key, record] : model.leaf_nets) {
            out.leaf_train_seconds += record.train_seconds;
            if (config.citl_sources.count(key.leaf))
                out.target_leaf_train_seconds += record.train_seconds;
        }
        out.d = detail::mean_metrics(
            test_set, [&](const ProbDist& noisy) { return mitigate_ci(model, noisy); });
    };

    parallel_for(
        tasks.size(),
        [&](std::size_t ti) {
            const Task& task = tasks[ti];
            const Dataset& test_set = rep_test[task.rep];
            if (!task.sweep) {
                RepResult result;
                switch (task.method) {
                    case Method::kUnmitigated:
                        result.d = rep_unmit[task.rep];
                        break;
                    case Method::kLi:
                        result.d = detail::mean_metrics(test_set, [&](const ProbDist& noisy) {
                            return li->mitigate(noisy);
                        });
                        break;
                    default:
                        train_and_eval(task.method, rep_train[task.rep], test_set,
                                       "rep" + std::to_string(task.rep) + "/" +
                                           method_name(task.method),
                                       result);
                }
                result.r = detail::rates_against(rep_unmit[task.rep], result.d);
                main_results[ti] = result;
            } else {
                const std::size_t size = config.sweep_sizes[task.size_index];
                RepResult result;
                train_and_eval(task.method, detail::head(rep_train[task.rep], size), test_set,
                               "rep" + std::to_string(task.rep) + "/" +
                                   method_name(task.method) + "/sweep" + std::to_string(size),
                               result);
                sweep_results[ti] = result.d.mse;
            }
        },
        config.threads);

    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const Task& task = tasks[ti];
        if (!task.sweep) {
            report.stats[task.method].reps.resize(config.repetitions);
            report.stats[task.method].reps[task.rep] = main_results[ti];
        } else {
            auto& points = report.sweeps[task.method];
            points.resize(config.sweep_sizes.size());
            auto& point = points[task.size_index];
            point.train_size = config.sweep_sizes[task.size_index];
            point.mse_per_rep.resize(config.repetitions);
            point.mse_per_rep[task.rep] = sweep_results[ti];
        }
    }
    for (auto& [method, stats] : report.stats) stats.aggregate();
    for (auto& [method, points] : report.sweeps)
        for (auto& point : points) point.mse = Aggregate::of(point.mse_per_rep);

    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return report;
}

// ---------------------------------------------------------------------------
// Report emission: a raw CSV (one row per method x metric x repetition,
// 17-significant-digit values), a human-readable summary, and sweep curve
// data with a gnuplot script.

namespace detail {

inline std::string format_cell(double mean, double stddev) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%8.2f +- %-6.2f", mean, stddev);
    return buf;
}

}  // namespace detail

inline void emit_report(const RunReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);

    // raw.csv
    {
        std::string csv = "# config_hash=" + hex64(report.config_hash) +
                          " qubits=" + std::to_string(report.qubit_count) +
                          " shots=" + std::to_string(report.shots) +
                          " train=" + std::to_string(report.train_count) +
                          " test=" + std::to_string(report.test_count) +
                          " reps=" + std::to_string(report.repetitions) +
                          " epochs=" + std::to_string(report.epochs) + "\n";
        csv += "method,metric,rep,train_size,d_value,r_value\n";
        const char* metric_names[3] = {"mse", "kld", "infidelity"};
        for (Method m : report.method_order) {
            const MethodStats& stats = report.stats.at(m);
            for (std::size_t r = 0; r < stats.reps.size(); ++r) {
                const RepResult& rep = stats.reps[r];
                const double d[3] = {rep.d.mse, rep.d.kld, rep.d.infidelity};
                const double rate[3] = {rep.r.mse, rep.r.kld, rep.r.infidelity};
                for (int k = 0; k < 3; ++k)
                    csv += std::string(method_name(m)) + "," + metric_names[k] + "," +
                           std::to_string(r) + "," + std::to_string(report.train_count) + "," +
                           dtoa17(d[k]) + "," + dtoa17(rate[k]) + "\n";
            }
        }
        for (const auto& [m, points] : report.sweeps)
            for (const auto& point : points)
                for (std::size_t r = 0; r < point.mse_per_rep.size(); ++r)
                    csv += std::string(method_name(m)) + ",mse," + std::to_string(r) + "," +
                           std::to_string(point.train_size) + "," +
                           dtoa17(point.mse_per_rep[r]) + ",\n";
        spit(out_dir / "raw.csv", csv);
    }

    // summary.txt
    {
        std::string text = "qmem experiment summary\n";
        text += "config hash: " + hex64(report.config_hash) + "\n";
        text += "qubits: " + std::to_string(report.qubit_count) +
                ", shots: " + std::to_string(report.shots) +
                ", split: " + std::to_string(report.train_count) + "/" +
                std::to_string(report.test_count) +
                ", repetitions: " + std::to_string(report.repetitions) +
                ", epochs: " + std::to_string(report.epochs) + "\n";
        text += "dataset clamp events: " + std::to_string(report.dataset_clamp_events) + "\n";
        if (report.stats.count(Method::kLi))
            text += "calibration condition estimate: " + dtoa17(report.li_condition_estimate) +
                    "\n";
        text += "\nimprovement rates, percent (mean +- std over repetitions)\n";
        char line[256];
        std::snprintf(line, sizeof line, "%-12s %12s %22s %22s %22s\n", "method", "params",
                      "R_MSE", "R_KLD", "R_IF");
        text += line;
        for (Method m : report.method_order) {
            const MethodStats& s = report.stats.at(m);
            std::snprintf(line, sizeof line, "%-12s %12zu %22s %22s %22s\n", method_name(m),
                          s.trainable_params, detail::format_cell(s.r_mse.mean, s.r_mse.stddev).c_str(),
                          detail::format_cell(s.r_kld.mean, s.r_kld.stddev).c_str(),
                          detail::format_cell(s.r_if.mean, s.r_if.stddev).c_str());
            text += line;
        }
        text += "\ndistances (mean over repetitions; min in parentheses)\n";
        std::snprintf(line, sizeof line, "%-12s %16s %16s %16s\n", "method", "D_MSE", "D_KLD",
                      "D_IF");
        text += line;
        for (Method m : report.method_order) {
            const MethodStats& s = report.stats.at(m);
            std::snprintf(line, sizeof line, "%-12s %10.3e (%9.3e) %10.3e (%9.3e) %10.3e (%9.3e)\n",
                          method_name(m), s.d_mse.mean, s.d_mse.min, s.d_kld.mean, s.d_kld.min,
                          s.d_if.mean, s.d_if.min);
            text += line;
        }
        if (!report.sweeps.empty()) {
            text += "\ntraining-size sweep (test MSE)\n";
            for (const auto& [m, points] : report.sweeps) {
                text += std::string(method_name(m)) + ":\n";
                for (const auto& point : points) {
                    std::snprintf(line, sizeof line,
                                  "  size %6zu  mean %10.3e  std %10.3e  min %10.3e\n",
                                  point.train_size, point.mse.mean, point.mse.stddev,
                                  point.mse.min);
                    text += line;
                }
            }
        }
        text += "\ntimings, seconds (informational, excluded from determinism)\n";
        for (Method m : report.method_order) {
            const MethodStats& s = report.stats.at(m);
            std::snprintf(line, sizeof line, "%-12s mean train %10.2f\n", method_name(m),
                          s.mean_train_seconds);
            text += line;
        }
        std::snprintf(line, sizeof line, "total wall time %.2f\n", report.total_seconds);
        text += line;
        spit(out_dir / "summary.txt", text);
    }

    // Sweep curve data + gnuplot script.
    if (!report.sweeps.empty()) {
        std::string gp = "set xlabel 'training samples'\nset ylabel 'test MSE'\n"
                         "set logscale y\nset key top right\nplot ";
        bool first = true;
        for (const auto& [m, points] : report.sweeps) {
            std::string data = "# train_size mse_mean mse_std mse_min\n";
            for (const auto& point : points)
                data += std::to_string(point.train_size) + " " + dtoa17(point.mse.mean) + " " +
                        dtoa17(point.mse.stddev) + " " + dtoa17(point.mse.min) + "\n";
            const std::string filename = "sweep_" + std::string(method_name(m)) + ".dat";
            spit(out_dir / filename, data);
            if (!first) gp += ", ";
            first = false;
            gp += "'" + filename + "' using 1:2:3 with yerrorlines title '" +
                  method_name(m) + "'";
        }
        gp += "\n";
        spit(out_dir / "plot.gp", gp);
    }
}

}  // namespace qmem
