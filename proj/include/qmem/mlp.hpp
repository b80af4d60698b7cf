#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qmem/jsonutil.hpp"
#include "qmem/probdist.hpp"
#include "qmem/rng.hpp"

namespace qmem {

// SELU constants from the self-normalizing-network definition.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

/// Floor for logarithm arguments in the cross-entropy loss.
inline constexpr double kLossClip = 1e-12;

inline double selu(double z) {
    return z > 0.0 ? kSeluLambda * z : kSeluLambda * kSeluAlpha * (std::exp(z) - 1.0);
}

/// Feedforward network: SELU hidden layers, softmax output. freeze[l]
/// marks layer l's weights and biases as not trainable (transfer
/// learning); frozen parameters are bit-stable under training.
struct Mlp {
    std::vector<std::size_t> layer_dims;        // [d_in, hidden..., d_out]
    std::vector<Eigen::MatrixXd> weights;       // weights[l]: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    std::vector<bool> freeze;                   // per (weights, biases) pair

    /// The standard shape for a width-k distribution: four hidden layers
    /// of 5 * 2^k nodes each.
    static std::vector<std::size_t> default_dims(std::size_t io_dim) {
        const std::size_t hidden = 5 * io_dim;
        return {io_dim, hidden, hidden, hidden, hidden, io_dim};
    }

    /// LeCun-normal initialization (variance 1/fan_in), zero biases.
    static Mlp init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
        if (dims.size() < 2) throw std::invalid_argument("Mlp::init: need at least 2 layers");
        Mlp net;
        net.layer_dims = dims;
        RngStream rng(seed);
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
            const auto cols = static_cast<Eigen::Index>(dims[l]);
            const double stddev = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            Eigen::MatrixXd w(rows, cols);
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = rng.normal(0.0, stddev);
            net.weights.push_back(std::move(w));
            net.biases.push_back(Eigen::VectorXd::Zero(rows));
            net.freeze.push_back(false);
        }
        return net;
    }

    std::size_t layer_count() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    std::size_t trainable_param_count() const {
        std::size_t count = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (!freeze[l]) count += static_cast<std::size_t>(weights[l].size()) +
                                     static_cast<std::size_t>(biases[l].size());
        return count;
    }

    std::size_t total_param_count() const {
        std::size_t count = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            count += static_cast<std::size_t>(weights[l].size()) +
                     static_cast<std::size_t>(biases[l].size());
        return count;
    }

    /// Batch forward pass; columns are samples, outputs are softmax
    /// distributions.
    Eigen::MatrixXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const {
        Eigen::MatrixXd a = inputs;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            Eigen::MatrixXd z = (weights[l] * a).colwise() + biases[l];
            if (l + 1 < weights.size())
                a = (z.array() > 0.0)
                        .select(kSeluLambda * z.array(),
                                kSeluLambda * kSeluAlpha * (z.array().exp() - 1.0))
                        .matrix();
            else
                a = softmax_columns(z);
        }
        return a;
    }

    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& input) const {
        return forward_batch(input);
    }

    static Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& z) {
        Eigen::MatrixXd out(z.rows(), z.cols());
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            const double zmax = z.col(j).maxCoeff();
            Eigen::ArrayXd e = (z.col(j).array() - zmax).exp();
            out.col(j) = e / e.sum();
        }
        return out;
    }

    std::string to_text() const;
    static Mlp from_json(const json& j);
    void save(const std::filesystem::path& path) const;
    static Mlp load(const std::filesystem::path& path);
};

inline Eigen::VectorXd to_vector(const ProbDist& p) {
    return Eigen::Map<const Eigen::VectorXd>(p.values().data(),
                                             static_cast<Eigen::Index>(p.size()));
}

inline ProbDist to_probdist(std::size_t width, const Eigen::VectorXd& v) {
    return ProbDist(width, std::vector<double>(v.data(), v.data() + v.size()));
}

/// Soft-label categorical cross-entropy; targets are distributions.
inline double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& predicted,
                            const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (predicted.size() != target.size())
        throw std::invalid_argument("cross_entropy: length mismatch");
    double loss = 0.0;
    for (Eigen::Index i = 0; i < predicted.size(); ++i)
        if (target[i] > 0.0) loss -= target[i] * std::log(std::max(predicted[i], kLossClip));
    return loss;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;

    static Gradients zeros_like(const Mlp& net) {
        Gradients g;
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            g.weight.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                        net.weights[l].cols()));
            g.bias.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        }
        return g;
    }
};

/// Scratch buffers reused across backprop calls.
struct BackpropWorkspace {
    std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
    std::vector<Eigen::MatrixXd> act;   // activations per layer (last = softmax)
    Eigen::MatrixXd delta, delta_next;
};

namespace detail {

/// Backprop for the mean batch loss. Writes mean gradients into `grads`
/// (zeros for frozen layers) and returns the summed batch loss. Delta
/// propagation stops below the lowest trainable layer.
inline double gradients_into(const Mlp& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                             const Eigen::Ref<const Eigen::MatrixXd>& targets, Gradients& grads,
                             BackpropWorkspace& ws) {
    const std::size_t layers = net.layer_count();
    const auto batch = inputs.cols();
    if (batch == 0) throw std::invalid_argument("gradients: empty batch");
    const double inv_batch = 1.0 / static_cast<double>(batch);

    ws.pre.resize(layers);
    ws.act.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& below = l == 0 ? inputs : Eigen::Ref<const Eigen::MatrixXd>(ws.act[l - 1]);
        ws.pre[l].noalias() = net.weights[l] * below;
        ws.pre[l].colwise() += net.biases[l];
        if (l + 1 < layers)
            ws.act[l] = (ws.pre[l].array() > 0.0)
                            .select(kSeluLambda * ws.pre[l].array(),
                                    kSeluLambda * kSeluAlpha * (ws.pre[l].array().exp() - 1.0))
                            .matrix();
        else
            ws.act[l] = Mlp::softmax_columns(ws.pre[l]);
    }

    const Eigen::MatrixXd& prob = ws.act[layers - 1];
    double loss_sum = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j)
        loss_sum += cross_entropy(prob.col(j), targets.col(j));

    std::size_t lowest_trainable = layers;  // `layers` means everything frozen
    for (std::size_t l = 0; l < layers; ++l)
        if (!net.freeze[l]) {
            lowest_trainable = l;
            break;
        }
    for (std::size_t l = 0; l < layers; ++l) {
        grads.weight[l].setZero();
        grads.bias[l].setZero();
    }
    if (lowest_trainable == layers) return loss_sum;

    // dL/dP with the loss clip folded in, then through the softmax.
    Eigen::ArrayXXd dp = (prob.array() >= kLossClip)
                             .select(-targets.array() / prob.array().max(kLossClip), 0.0);
    Eigen::Array<double, 1, Eigen::Dynamic> inner = (dp * prob.array()).colwise().sum();
    ws.delta = (prob.array() * (dp.rowwise() - inner)).matrix();

    for (std::size_t l = layers; l-- > lowest_trainable;) {
        if (!net.freeze[l]) {
            const auto& below =
                l == 0 ? inputs : Eigen::Ref<const Eigen::MatrixXd>(ws.act[l - 1]);
            grads.weight[l].noalias() = ws.delta * below.transpose() * inv_batch;
            grads.bias[l] = ws.delta.rowwise().sum() * inv_batch;
        }
        if (l > lowest_trainable) {
            ws.delta_next.noalias() = net.weights[l].transpose() * ws.delta;
            ws.delta = (ws.delta_next.array() *
                        (ws.pre[l - 1].array() > 0.0)
                            .select(Eigen::ArrayXXd::Constant(ws.pre[l - 1].rows(),
                                                              ws.pre[l - 1].cols(), kSeluLambda),
                                    kSeluLambda * kSeluAlpha * ws.pre[l - 1].array().exp()))
                           .matrix();
        }
    }
    return loss_sum;
}

}  // namespace detail

/// Mean gradient of the cross-entropy loss over a batch (columns).
inline Gradients gradients(const Mlp& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           const Eigen::Ref<const Eigen::MatrixXd>& targets) {
    Gradients grads = Gradients::zeros_like(net);
    BackpropWorkspace ws;
    detail::gradients_into(net, inputs, targets, grads, ws);
    return grads;
}

/// Adam with the standard bias correction. Hyperparameter defaults follow
/// the training recipe used throughout this project.
struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long long step = 0;
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;

    static AdamState for_net(const Mlp& net, double learning_rate = 1e-4) {
        AdamState s;
        s.learning_rate = learning_rate;
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            s.m_w.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                     net.weights[l].cols()));
            s.v_w.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                     net.weights[l].cols()));
            s.m_b.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
            s.v_b.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        }
        return s;
    }
};

/// One Adam update; frozen layers are untouched (parameters and moments).
inline void adam_step(Mlp& net, AdamState& state, const Gradients& grads) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (net.freeze[l]) continue;
        auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
            param.array() -= state.learning_rate * (m.array() / bc1) /
                             ((v.array() / bc2).sqrt() + state.epsilon);
        };
        update(net.weights[l], state.m_w[l], state.v_w[l], grads.weight[l]);
        update(net.biases[l], state.m_b[l], state.v_b[l], grads.bias[l]);
    }
}

struct TrainSchedule {
    std::size_t epochs = 300;
    std::size_t batch_size = 16;
};

using TrainingPair = std::pair<Eigen::VectorXd, Eigen::VectorXd>;

/// Shuffled mini-batch training; the last incomplete batch is used as-is.
/// Returns the per-epoch mean training loss (evaluated before each step,
/// as seen by the optimizer).
inline std::vector<double> train(Mlp& net, const std::vector<TrainingPair>& pairs,
                                 AdamState& opt, const TrainSchedule& schedule,
                                 RngStream& shuffle_rng) {
    if (pairs.empty()) throw std::invalid_argument("train: no training pairs");
    const auto n = pairs.size();
    const auto d_in = static_cast<Eigen::Index>(net.input_dim());
    const auto d_out = static_cast<Eigen::Index>(net.output_dim());
    Eigen::MatrixXd all_x(d_in, static_cast<Eigen::Index>(n));
    Eigen::MatrixXd all_t(d_out, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (pairs[i].first.size() != d_in || pairs[i].second.size() != d_out)
            throw std::invalid_argument("train: pair dimensions do not match the network");
        all_x.col(static_cast<Eigen::Index>(i)) = pairs[i].first;
        all_t.col(static_cast<Eigen::Index>(i)) = pairs[i].second;
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    const std::size_t batch = std::max<std::size_t>(1, schedule.batch_size);
    Eigen::MatrixXd x(d_in, static_cast<Eigen::Index>(batch));
    Eigen::MatrixXd t(d_out, static_cast<Eigen::Index>(batch));
    Gradients grads = Gradients::zeros_like(net);
    BackpropWorkspace ws;

    std::vector<double> trace;
    trace.reserve(schedule.epochs);
    for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const auto b = static_cast<Eigen::Index>(std::min(batch, n - start));
            for (Eigen::Index k = 0; k < b; ++k) {
                x.col(k) = all_x.col(static_cast<Eigen::Index>(order[start + k]));
                t.col(k) = all_t.col(static_cast<Eigen::Index>(order[start + k]));
            }
            loss_sum += detail::gradients_into(net, x.leftCols(b), t.leftCols(b), grads, ws);
            adam_step(net, opt, grads);
        }
        trace.push_back(loss_sum / static_cast<double>(n));
    }
    return trace;
}

// Model file: nested arrays written at 17 significant digits, so a round
// trip reloads bit-identical parameters.
inline std::string Mlp::to_text() const {
    std::string out = "{\"layer_dims\":[";
    for (std::size_t i = 0; i < layer_dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(layer_dims[i]);
    }
    out += "],\"freeze\":[";
    for (std::size_t l = 0; l < freeze.size(); ++l) {
        if (l) out += ',';
        out += freeze[l] ? "true" : "false";
    }
    out += "],\"weights\":[";
    std::vector<double> row;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (l) out += ',';
        out += '[';
        for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
            if (r) out += ',';
            row.assign(weights[l].cols(), 0.0);
            for (Eigen::Index c = 0; c < weights[l].cols(); ++c)
                row[static_cast<std::size_t>(c)] = weights[l](r, c);
            append_double_array(out, row);
        }
        out += ']';
    }
    out += "],\"biases\":[";
    for (std::size_t l = 0; l < biases.size(); ++l) {
        if (l) out += ',';
        row.assign(biases[l].data(), biases[l].data() + biases[l].size());
        append_double_array(out, row);
    }
    out += "]}";
    return out;
}

inline Mlp Mlp::from_json(const json& j) {
    Mlp net;
    net.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    net.freeze = j.at("freeze").get<std::vector<bool>>();
    const auto& jw = j.at("weights");
    const auto& jb = j.at("biases");
    if (net.layer_dims.size() < 2 || jw.size() + 1 != net.layer_dims.size() ||
        jb.size() != jw.size() || net.freeze.size() != jw.size())
        throw std::invalid_argument("Mlp::from_json: inconsistent structure");
    for (std::size_t l = 0; l < jw.size(); ++l) {
        const auto rows = static_cast<Eigen::Index>(net.layer_dims[l + 1]);
        const auto cols = static_cast<Eigen::Index>(net.layer_dims[l]);
        Eigen::MatrixXd w(rows, cols);
        if (std::size_t(rows) != jw[l].size())
            throw std::invalid_argument("Mlp::from_json: weight shape mismatch");
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = jw[l][static_cast<std::size_t>(r)];
            if (std::size_t(cols) != row.size())
                throw std::invalid_argument("Mlp::from_json: weight shape mismatch");
            for (Eigen::Index c = 0; c < cols; ++c)
                w(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
        net.weights.push_back(std::move(w));
        Eigen::VectorXd b(rows);
        if (std::size_t(rows) != jb[l].size())
            throw std::invalid_argument("Mlp::from_json: bias shape mismatch");
        for (Eigen::Index r = 0; r < rows; ++r)
            b(r) = jb[l][static_cast<std::size_t>(r)].get<double>();
        net.biases.push_back(std::move(b));
    }
    return net;
}

inline void Mlp::save(const std::filesystem::path& path) const {
    spit(path, to_text() + "\n");
}

inline Mlp Mlp::load(const std::filesystem::path& path) { return from_json(load_json(path)); }

}  // namespace qmem
