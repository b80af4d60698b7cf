// Command-line front end: dataset generation, calibration, training,
// mitigation, evaluation, and full experiment runs.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qmem/ci.hpp"
#include "qmem/dataset.hpp"
#include "qmem/experiment.hpp"
#include "qmem/li.hpp"
#include "qmem/metrics.hpp"

namespace {

using namespace qmem;

std::vector<Method> parse_methods(const std::string& text) {
    std::vector<Method> methods;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ','))
        if (!item.empty()) methods.push_back(method_from_name(item));
    if (methods.empty()) throw ConfigError("no methods given");
    return methods;
}

std::map<std::size_t, std::size_t> parse_sources(const std::string& text) {
    std::map<std::size_t, std::size_t> sources;
    if (text.empty()) return sources;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("citl-sources entries must look like target:source");
        sources[std::stoul(item.substr(0, colon))] = std::stoul(item.substr(colon + 1));
    }
    return sources;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> sizes;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ','))
        if (!item.empty()) sizes.push_back(std::stoul(item));
    return sizes;
}

TrainConfig::TransferScope parse_scope(const std::string& text) {
    if (text == "last_hidden_and_output") return TrainConfig::TransferScope::kLastHiddenAndOutput;
    if (text == "output_only") return TrainConfig::TransferScope::kOutputOnly;
    throw ConfigError("transfer scope must be last_hidden_and_output or output_only");
}

struct CommonFiles {
    std::string noise, graph;
};

std::pair<NoiseModel, CouplingGraph> load_noise_and_graph(const CommonFiles& files) {
    CouplingGraph graph = CouplingGraph::load(files.graph);
    NoiseModel noise = NoiseModel::load(files.noise);
    noise.validate(graph);
    return {std::move(noise), std::move(graph)};
}

void print_metrics(const char* label, const MetricTriple& d) {
    std::printf("%-12s mse %.6e  kld %.6e  infidelity %.6e\n", label, d.mse, d.kld,
                d.infidelity);
}

int run_gen(const CommonFiles& files, std::size_t samples, std::uint64_t shots,
            std::optional<std::uint64_t> seed, const std::string& out, unsigned threads) {
    auto [noise, graph] = load_noise_and_graph(files);
    NoiseDiagnostics diag;
    Dataset dataset = generate(noise.qubit_count, samples, shots, noise, graph,
                               seed.value_or(noise.seed), &diag, threads);
    save(dataset, out);
    std::printf("wrote %zu samples (%zu qubits, %llu shots) to %s\n", dataset.samples.size(),
                dataset.meta.qubit_count, static_cast<unsigned long long>(shots), out.c_str());
    if (diag.clamp_events)
        std::printf("warning: %llu clamped flip probabilities; check the noise model\n",
                    static_cast<unsigned long long>(diag.clamp_events));
    return 0;
}

int run_calibrate(const CommonFiles& files, std::uint64_t shots,
                  std::optional<std::uint64_t> seed, const std::string& out) {
    auto [noise, graph] = load_noise_and_graph(files);
    const Executor executor =
        make_simulator_executor(noise, graph, seed.value_or(noise.seed));
    const CalibrationMatrix cal = calibrate(executor, noise.qubit_count, shots);
    cal.save(out);
    std::printf("wrote %zu-qubit calibration matrix to %s\n", cal.qubit_count, out.c_str());
    return 0;
}

int run_train(const std::string& dataset_path, const std::string& method_name_text,
              const std::string& partition_path, const std::string& sources_text,
              std::size_t epochs, std::size_t batch, double lr, const std::string& scope_text,
              std::uint64_t seed, const std::string& out, unsigned threads) {
    const Dataset dataset = load(dataset_path);
    const Method method = method_from_name(method_name_text);

    TrainConfig config;
    config.schedule = {epochs, batch};
    config.learning_rate = lr;
    config.tau_skip = TrainConfig::default_tau_skip(dataset.meta.shots);
    config.transfer_scope = parse_scope(scope_text);

    PartitionSpec spec;
    if (method == Method::kNn) {
        spec = PartitionSpec::trivial(dataset.meta.qubit_count);
    } else if (method == Method::kCi || method == Method::kCitl) {
        if (partition_path.empty()) throw ConfigError("ci/citl training needs --partition");
        spec = PartitionSpec::load(partition_path);
    } else {
        throw ConfigError("trainable methods are nn, ci, citl");
    }

    CiModel model;
    if (method == Method::kCitl) {
        const auto sources = parse_sources(sources_text);
        if (sources.empty()) throw ConfigError("citl training needs --citl-sources");
        model = train_citl(dataset, spec, sources, config, seed, threads);
    } else {
        model = train_ci(dataset, spec, config, seed, threads);
    }
    model.save(out);
    std::printf("trained %zu networks, %zu trainable parameters; bundle at %s\n",
                model.network_count(), model.trainable_param_count(), out.c_str());
    return 0;
}

int run_mitigate(const std::string& model_path, const std::string& calibration_path,
                 const std::string& dataset_path, const std::string& out) {
    const Dataset dataset = load(dataset_path);
    std::function<ProbDist(const ProbDist&)> mitigate;
    std::string method_text;
    std::optional<CiModel> model;
    std::optional<LiMitigator> li;
    if (!model_path.empty()) {
        model = CiModel::load(model_path);
        mitigate = [&](const ProbDist& noisy) { return mitigate_ci(*model, noisy); };
        method_text = "ci-model";
    } else if (!calibration_path.empty()) {
        li.emplace(CalibrationMatrix::load(calibration_path));
        mitigate = [&](const ProbDist& noisy) { return li->mitigate(noisy); };
        method_text = "linear-inversion";
    } else {
        throw ConfigError("mitigate needs --model or --calibration");
    }

    std::string text = "{\"format\":\"qmem-mitigated\",\"version\":1,\"method\":\"" +
                       method_text + "\",\"qubit_count\":" +
                       std::to_string(dataset.meta.qubit_count) +
                       ",\"sample_count\":" + std::to_string(dataset.samples.size()) + "}\n";
    for (const auto& sample : dataset.samples) {
        text += "{\"mitigated\":";
        append_double_array(text, mitigate(sample.noisy).values());
        text += "}\n";
    }
    spit(out, text);
    std::printf("wrote %zu mitigated distributions to %s\n", dataset.samples.size(),
                out.c_str());
    return 0;
}

int run_evaluate(const std::string& dataset_path, const std::string& model_path,
                 const std::string& calibration_path) {
    const Dataset dataset = load(dataset_path);
    const MetricTriple unmitigated =
        detail::mean_metrics(dataset, [](const ProbDist& noisy) { return noisy; });
    print_metrics("unmitigated", unmitigated);

    std::optional<CiModel> model;
    std::optional<LiMitigator> li;
    std::function<ProbDist(const ProbDist&)> mitigate;
    if (!model_path.empty()) {
        model = CiModel::load(model_path);
        mitigate = [&](const ProbDist& noisy) { return mitigate_ci(*model, noisy); };
    } else if (!calibration_path.empty()) {
        li.emplace(CalibrationMatrix::load(calibration_path));
        mitigate = [&](const ProbDist& noisy) { return li->mitigate(noisy); };
    } else {
        return 0;
    }
    const MetricTriple mitigated = detail::mean_metrics(dataset, mitigate);
    print_metrics("mitigated", mitigated);
    std::printf("%-12s mse %.2f%%  kld %.2f%%  infidelity %.2f%%\n", "improvement",
                metrics::improvement_rate(unmitigated.mse, mitigated.mse),
                metrics::improvement_rate(unmitigated.kld, mitigated.kld),
                metrics::improvement_rate(unmitigated.infidelity, mitigated.infidelity));
    return 0;
}

int run_report(const std::string& raw_path, const std::string& out_dir) {
    // Rebuilds aggregates and the summary from a raw.csv produced by
    // `experiment`. Timings are not stored in the CSV and re-emit as 0.
    const std::string content = slurp(raw_path);
    std::stringstream stream(content);
    std::string line;

    RunReport report;
    std::map<std::string, std::string> header;
    std::map<Method, std::size_t> params;
    while (std::getline(stream, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::stringstream fields(line.substr(1));
            std::string field;
            while (fields >> field) {
                const auto eq = field.find('=');
                if (eq != std::string::npos)
                    header[field.substr(0, eq)] = field.substr(eq + 1);
            }
            continue;
        }
        if (line.rfind("method,", 0) == 0) continue;
        std::stringstream row(line);
        std::string method_text, metric, rep_text, size_text, d_text, r_text;
        std::getline(row, method_text, ',');
        std::getline(row, metric, ',');
        std::getline(row, rep_text, ',');
        std::getline(row, size_text, ',');
        std::getline(row, d_text, ',');
        std::getline(row, r_text, ',');
        const Method method = method_from_name(method_text);
        const auto rep = std::stoul(rep_text);
        const auto size = std::stoul(size_text);
        const double d = std::stod(d_text);

        const auto train_count = std::stoul(header.count("train") ? header["train"] : "0");
        if (size == train_count && !r_text.empty()) {
            auto& stats = report.stats[method];
            if (stats.reps.size() <= rep) stats.reps.resize(rep + 1);
            RepResult& result = stats.reps[rep];
            const double r = std::stod(r_text);
            if (metric == "mse") {
                result.d.mse = d;
                result.r.mse = r;
            } else if (metric == "kld") {
                result.d.kld = d;
                result.r.kld = r;
            } else {
                result.d.infidelity = d;
                result.r.infidelity = r;
            }
        } else if (metric == "mse") {
            auto& points = report.sweeps[method];
            auto it = std::find_if(points.begin(), points.end(),
                                   [&](const SweepPoint& p) { return p.train_size == size; });
            if (it == points.end()) {
                points.push_back(SweepPoint{size, {}, {}});
                it = points.end() - 1;
            }
            if (it->mse_per_rep.size() <= rep) it->mse_per_rep.resize(rep + 1);
            it->mse_per_rep[rep] = d;
        }
    }
    if (header.count("config_hash"))
        report.config_hash = std::stoull(header["config_hash"], nullptr, 16);
    if (header.count("qubits")) report.qubit_count = std::stoul(header["qubits"]);
    if (header.count("shots")) report.shots = std::stoull(header["shots"]);
    if (header.count("train")) report.train_count = std::stoul(header["train"]);
    if (header.count("test")) report.test_count = std::stoul(header["test"]);
    if (header.count("reps")) report.repetitions = std::stoul(header["reps"]);
    if (header.count("epochs")) report.epochs = std::stoul(header["epochs"]);

    for (Method m :
         {Method::kUnmitigated, Method::kLi, Method::kNn, Method::kCi, Method::kCitl})
        if (report.stats.count(m)) report.method_order.push_back(m);
    for (auto& [method, stats] : report.stats) stats.aggregate();
    for (auto& [method, points] : report.sweeps) {
        std::sort(points.begin(), points.end(),
                  [](const SweepPoint& a, const SweepPoint& b) {
                      return a.train_size < b.train_size;
                  });
        for (auto& point : points) point.mse = Aggregate::of(point.mse_per_rep);
    }
    emit_report(report, out_dir);
    std::printf("summary rebuilt under %s\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qmem: a laboratory for quantum measurement error mitigation.\n"
                 "Thread count can also be set via the QMEM_THREADS environment variable."};
    app.require_subcommand(1);

    CommonFiles files;
    std::size_t samples = 7500;
    std::uint64_t shots = 32000;
    std::optional<std::uint64_t> seed_opt;
    std::string out = "out";
    unsigned threads = 0;

    auto* gen = app.add_subcommand("gen", "Generate a (noisy, ideal) dataset");
    gen->add_option("--noise", files.noise, "Noise model JSON")->required();
    gen->add_option("--graph", files.graph, "Coupling graph JSON")->required();
    gen->add_option("--samples", samples, "Number of samples");
    gen->add_option("--shots", shots, "Shots per circuit (0 = analytic)");
    gen->add_option("--seed", seed_opt, "Master seed (default: noise file seed)");
    gen->add_option("--out", out, "Output JSONL path")->required();
    gen->add_option("--threads", threads, "Worker threads (0 = auto)");

    auto* cal = app.add_subcommand("calibrate", "Run the 2^n basis-state calibration");
    cal->add_option("--noise", files.noise, "Noise model JSON")->required();
    cal->add_option("--graph", files.graph, "Coupling graph JSON")->required();
    cal->add_option("--shots", shots, "Shots per circuit (0 = analytic)");
    cal->add_option("--seed", seed_opt, "Sampling seed (default: noise file seed)");
    cal->add_option("--out", out, "Output calibration JSON")->required();

    std::string dataset_path, method_text = "ci", partition_path, sources_text;
    std::string scope_text = "last_hidden_and_output";
    std::size_t epochs = 100, batch = 16;
    double lr = 1e-4;
    std::uint64_t train_seed = 1;
    auto* train_cmd = app.add_subcommand("train", "Train a mitigation model on a dataset");
    train_cmd->add_option("--dataset", dataset_path, "Training dataset JSONL")->required();
    train_cmd->add_option("--method", method_text, "nn, ci, or citl");
    train_cmd->add_option("--partition", partition_path, "Partition JSON (ci/citl)");
    train_cmd->add_option("--citl-sources", sources_text,
                          "target:source leaf pairs, e.g. 1:0,3:2");
    train_cmd->add_option("--epochs", epochs, "Training epochs");
    train_cmd->add_option("--batch", batch, "Batch size");
    train_cmd->add_option("--lr", lr, "Learning rate");
    train_cmd->add_option("--transfer-scope", scope_text,
                          "last_hidden_and_output or output_only");
    train_cmd->add_option("--seed", train_seed, "Training seed");
    train_cmd->add_option("--out", out, "Output model bundle path")->required();
    train_cmd->add_option("--threads", threads, "Worker threads (0 = auto)");

    std::string model_path, calibration_path;
    auto* mit = app.add_subcommand("mitigate", "Mitigate every sample of a dataset");
    mit->add_option("--model", model_path, "CI model bundle");
    mit->add_option("--calibration", calibration_path, "Calibration matrix JSON");
    mit->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    mit->add_option("--out", out, "Output JSONL path")->required();

    auto* eval = app.add_subcommand("evaluate", "Mean distances of a model on a dataset");
    eval->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    eval->add_option("--model", model_path, "CI model bundle");
    eval->add_option("--calibration", calibration_path, "Calibration matrix JSON");

    ExperimentConfig config;
    std::string methods_text = "unmitigated,li,ci", sweep_text, sweep_methods_text;
    std::string exp_sources_text, exp_scope_text = "last_hidden_and_output";
    std::string exp_noise, exp_graph, exp_partition, exp_dataset, exp_out = "out";
    auto* exp = app.add_subcommand("experiment", "Run a full method-comparison experiment");
    exp->set_config("--config", "", "Config file (key=value lines; flags override)");
    exp->add_option("--noise", exp_noise, "Noise model JSON")->required();
    exp->add_option("--graph", exp_graph, "Coupling graph JSON")->required();
    exp->add_option("--partition", exp_partition, "Partition JSON (ci/citl)");
    exp->add_option("--dataset", exp_dataset, "Load dataset instead of generating");
    exp->add_option("--samples", config.samples, "Samples to generate");
    exp->add_option("--shots", config.shots, "Shots per circuit (0 = analytic)");
    exp->add_option("--train-frac", config.train_fraction, "Training fraction of the split");
    exp->add_option("--methods", methods_text, "Comma list of methods");
    exp->add_option("--sweep", sweep_text, "Comma list of training sizes");
    exp->add_option("--sweep-methods", sweep_methods_text, "Methods swept over sizes");
    exp->add_option("--reps", config.repetitions, "Repetitions with distinct seeds");
    exp->add_option("--seed", config.master_seed, "Master seed");
    exp->add_option("--epochs", config.epochs, "Training epochs (default 100, smoke scale)");
    exp->add_option("--batch", config.batch_size, "Batch size");
    exp->add_option("--lr", config.learning_rate, "Learning rate");
    exp->add_option("--citl-sources", exp_sources_text, "target:source leaf pairs");
    exp->add_option("--transfer-scope", exp_scope_text,
                    "last_hidden_and_output or output_only");
    exp->add_option("--out", exp_out, "Output directory");
    exp->add_option("--threads", config.threads, "Worker threads (0 = auto)");

    std::string raw_path;
    auto* rep = app.add_subcommand("report", "Rebuild the summary from a raw.csv");
    rep->add_option("--raw", raw_path, "raw.csv from a previous run")->required();
    rep->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(gen))
            return run_gen(files, samples, shots, seed_opt, out, threads);
        if (app.got_subcommand(cal)) return run_calibrate(files, shots, seed_opt, out);
        if (app.got_subcommand(train_cmd))
            return run_train(dataset_path, method_text, partition_path, sources_text, epochs,
                             batch, lr, scope_text, train_seed, out, threads);
        if (app.got_subcommand(mit))
            return run_mitigate(model_path, calibration_path, dataset_path, out);
        if (app.got_subcommand(eval))
            return run_evaluate(dataset_path, model_path, calibration_path);
        if (app.got_subcommand(exp)) {
            config.noise_file = exp_noise;
            config.graph_file = exp_graph;
            config.partition_file = exp_partition;
            config.dataset_file = exp_dataset;
            config.methods = parse_methods(methods_text);
            config.sweep_sizes = parse_sizes(sweep_text);
            if (!sweep_methods_text.empty())
                config.sweep_methods = parse_methods(sweep_methods_text);
            config.citl_sources = parse_sources(exp_sources_text);
            config.transfer_scope = parse_scope(exp_scope_text);
            config.output_dir = exp_out;
            const RunReport report = run_experiment(config);
            emit_report(report, config.output_dir);
            std::printf("%s", slurp(config.output_dir / "summary.txt").c_str());
            return 0;
        }
        if (app.got_subcommand(rep)) return run_report(raw_path, out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
