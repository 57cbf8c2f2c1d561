#pragma once

#include <hybridcast/error.hpp>
#include <hybridcast/market_data.hpp>
#include <hybridcast/numkernel.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hybridcast::lstm {

/// Affine map of the concatenated [h_{t-1}, x_t] vector for one gate.
/// `weights` is hidden x (hidden + input); the first `hidden` columns act on
/// the previous hidden state.
struct Gate {
    Matrix weights;
    Vector bias;

    friend bool operator==(const Gate&, const Gate&) = default;
};

/// Single-layer LSTM parameters. Also used as the gradient container, since
/// gradients have exactly the same shapes.
struct LstmParams {
    std::size_t hidden = 0;
    std::size_t input = 0;
    Gate forget;
    Gate input_gate;
    Gate candidate;
    Gate output;

    static LstmParams zeros(std::size_t hidden, std::size_t input) {
        LstmParams p;
        p.hidden = hidden;
        p.input = input;
        for (Gate* g : p.gates()) {
            g->weights = Matrix(hidden, hidden + input);
            g->bias.assign(hidden, 0.0);
        }
        return p;
    }

    /// Weights ~ U[-1/sqrt(k+d), +1/sqrt(k+d)], biases zero except the forget
    /// gate, which starts at 1.
    static LstmParams initialize(std::size_t hidden, std::size_t input, Rng& rng) {
        if (hidden == 0 || input == 0) throw SizingError("LstmParams: hidden and input sizes must be positive");
        LstmParams p = zeros(hidden, input);
        const double scale = 1.0 / std::sqrt(static_cast<double>(hidden + input));
        for (Gate* g : p.gates()) g->weights = seeded_uniform(rng, hidden, hidden + input, scale);
        std::fill(p.forget.bias.begin(), p.forget.bias.end(), 1.0);
        return p;
    }

    std::vector<Gate*> gates() { return {&forget, &input_gate, &candidate, &output}; }
    std::vector<const Gate*> gates() const { return {&forget, &input_gate, &candidate, &output}; }

    static constexpr const char* gate_name(std::size_t i) {
        constexpr const char* names[] = {"forget", "input", "candidate", "output"};
        return names[i];
    }

    /// Every trainable array in a fixed order.
    std::vector<std::span<double>> arrays() {
        std::vector<std::span<double>> out;
        for (Gate* g : gates()) {
            out.emplace_back(g->weights.data());
            out.emplace_back(g->bias);
        }
        return out;
    }

    void validate() const {
        const auto gs = gates();
        for (std::size_t i = 0; i < gs.size(); ++i) {
            const Gate& g = *gs[i];
            if (g.weights.rows() != hidden || g.weights.cols() != hidden + input) {
                throw ShapeError(std::string(gate_name(i)) + " gate weights are " + g.weights.shape_string() +
                                 ", expected " + Matrix::shape_string(hidden, hidden + input));
            }
            if (g.bias.size() != hidden) {
                throw ShapeError(std::string(gate_name(i)) + " gate bias has " + std::to_string(g.bias.size()) +
                                 " entries, expected " + std::to_string(hidden));
            }
            if (!g.weights.all_finite() ||
                !std::all_of(g.bias.begin(), g.bias.end(), [](double v) { return std::isfinite(v); })) {
                throw DomainError(std::string(gate_name(i)) + " gate has non-finite parameters");
            }
        }
    }

    friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

struct LstmState {
    Vector hidden;
    Vector cell;

    static LstmState zeros(std::size_t k) { return {Vector(k, 0.0), Vector(k, 0.0)}; }
};

/// Activations of one step, kept for the backward pass.
struct StepCache {
    Vector concat;     // [h_{t-1}, x_t]
    Vector cell_prev;  // C_{t-1}
    Vector forget;
    Vector input;
    Vector candidate;
    Vector output;
    Vector cell;       // C_t
    Vector tanh_cell;  // tanh(C_t)
    Vector hidden;     // h_t
};

struct ForwardCache {
    std::size_t hidden = 0;
    std::size_t input = 0;
    std::vector<StepCache> steps;
};

inline std::pair<LstmState, StepCache> cell_forward(const LstmParams& p, std::span<const double> x,
                                                   const LstmState& prev) {
    const std::size_t k = p.hidden;
    if (x.size() != p.input) {
        throw ShapeError("cell_forward: input has " + std::to_string(x.size()) + " features, weights expect " +
                         std::to_string(p.input));
    }
    if (prev.hidden.size() != k || prev.cell.size() != k) {
        throw ShapeError("cell_forward: previous state size does not match hidden size " + std::to_string(k));
    }

    StepCache c;
    c.concat.resize(k + p.input);
    std::copy(prev.hidden.begin(), prev.hidden.end(), c.concat.begin());
    std::copy(x.begin(), x.end(), c.concat.begin() + static_cast<std::ptrdiff_t>(k));
    c.cell_prev = prev.cell;

    auto affine = [&](const Gate& g) {
        Vector a = g.bias;
        gemv_accumulate(g.weights, c.concat, a);
        return a;
    };
    c.forget = affine(p.forget);
    c.input = affine(p.input_gate);
    c.candidate = affine(p.candidate);
    c.output = affine(p.output);
    c.cell.resize(k);
    c.tanh_cell.resize(k);
    c.hidden.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        c.forget[j] = sigmoid(c.forget[j]);
        c.input[j] = sigmoid(c.input[j]);
        c.candidate[j] = std::tanh(c.candidate[j]);
        c.output[j] = sigmoid(c.output[j]);
        assert(c.forget[j] >= 0.0 && c.forget[j] <= 1.0);
        assert(c.input[j] >= 0.0 && c.input[j] <= 1.0);
        assert(c.output[j] >= 0.0 && c.output[j] <= 1.0);
        assert(c.candidate[j] >= -1.0 && c.candidate[j] <= 1.0);
        c.cell[j] = c.forget[j] * c.cell_prev[j] + c.input[j] * c.candidate[j];
        c.tanh_cell[j] = std::tanh(c.cell[j]);
        c.hidden[j] = c.output[j] * c.tanh_cell[j];
    }
    LstmState next{c.hidden, c.cell};
    return {std::move(next), std::move(c)};
}

struct SequenceOutput {
    Vector final_hidden;  // h_n, the latent passed downstream
    Vector final_cell;
    ForwardCache cache;
};

/// Runs the cell over the rows of `x` (n x d), starting from `initial`.
inline SequenceOutput sequence_forward(const LstmParams& p, const Matrix& x, const LstmState& initial) {
    if (x.cols() != p.input) {
        throw ShapeError("sequence_forward: sequence has " + std::to_string(x.cols()) +
                         " features, weights expect " + std::to_string(p.input));
    }
    SequenceOutput out;
    out.cache.hidden = p.hidden;
    out.cache.input = p.input;
    out.cache.steps.reserve(x.rows());
    LstmState state = initial;
    for (std::size_t t = 0; t < x.rows(); ++t) {
        auto [next, step] = cell_forward(p, x.row(t), state);
        state = std::move(next);
        out.cache.steps.push_back(std::move(step));
    }
    out.final_hidden = std::move(state.hidden);
    out.final_cell = std::move(state.cell);
    return out;
}

inline SequenceOutput sequence_forward(const LstmParams& p, const Matrix& x) {
    return sequence_forward(p, x, LstmState::zeros(p.hidden));
}

/// Backpropagation through time. Given dL/dh_n, returns dL/dθ for every
/// weight and bias, accumulated over all steps in the cache.
inline LstmParams sequence_backward(const LstmParams& p, const ForwardCache& cache, std::span<const double> grad_hn) {
    const std::size_t k = p.hidden;
    if (cache.hidden != k || cache.input != p.input) {
        throw ShapeError("sequence_backward: cache was produced by a network of a different shape");
    }
    if (grad_hn.size() != k) throw ShapeError("sequence_backward: gradient size does not match hidden size");

    LstmParams grad = LstmParams::zeros(k, p.input);
    Vector dh(grad_hn.begin(), grad_hn.end());
    Vector dc(k, 0.0);
    Vector da_f(k), da_i(k), da_g(k), da_o(k);
    Vector dconcat(k + p.input);

    for (std::size_t step = cache.steps.size(); step-- > 0;) {
        const StepCache& s = cache.steps[step];
        for (std::size_t j = 0; j < k; ++j) {
            const double d_out = dh[j] * s.tanh_cell[j];
            dc[j] += dh[j] * s.output[j] * (1.0 - s.tanh_cell[j] * s.tanh_cell[j]);
            const double d_forget = dc[j] * s.cell_prev[j];
            const double d_input = dc[j] * s.candidate[j];
            const double d_cand = dc[j] * s.input[j];
            da_f[j] = d_forget * s.forget[j] * (1.0 - s.forget[j]);
            da_i[j] = d_input * s.input[j] * (1.0 - s.input[j]);
            da_g[j] = d_cand * (1.0 - s.candidate[j] * s.candidate[j]);
            da_o[j] = d_out * s.output[j] * (1.0 - s.output[j]);
            dc[j] *= s.forget[j];  // flows to C_{t-1}
        }
        const std::pair<const Vector*, Gate*> per_gate[] = {
            {&da_f, &grad.forget}, {&da_i, &grad.input_gate}, {&da_g, &grad.candidate}, {&da_o, &grad.output}};
        for (const auto& [da, g] : per_gate) {
            outer_accumulate(g->weights, *da, s.concat);
            for (std::size_t j = 0; j < k; ++j) g->bias[j] += (*da)[j];
        }
        std::fill(dconcat.begin(), dconcat.end(), 0.0);
        gemv_transpose_accumulate(p.forget.weights, da_f, dconcat);
        gemv_transpose_accumulate(p.input_gate.weights, da_i, dconcat);
        gemv_transpose_accumulate(p.candidate.weights, da_g, dconcat);
        gemv_transpose_accumulate(p.output.weights, da_o, dconcat);
        std::copy_n(dconcat.begin(), k, dh.begin());
    }
    return grad;
}

/// Temporary linear read-out used to train the network; ŷ = W h + b.
struct LinearHead {
    Matrix weights;  // n_out x hidden
    Vector bias;     // n_out

    Vector apply(std::span<const double> h) const {
        if (h.size() != weights.cols()) throw ShapeError("LinearHead: hidden size mismatch");
        Vector y = bias;
        gemv_accumulate(weights, h, y);
        return y;
    }

    friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

enum class Optimizer { adam, sgd };

struct TrainConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 100;
    double learning_rate = 0.01;
    std::uint64_t seed = 42;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double clip_norm = 5.0;     // <= 0 disables clipping
    std::size_t batch_size = 0; // 0 = full batch

    void validate() const {
        if (hidden == 0) throw ConfigError("lstm: hidden size must be at least 1");
        if (epochs == 0) throw ConfigError("lstm: epochs must be at least 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("lstm: learning rate must be finite and non-negative");
        }
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("lstm: Adam betas must lie in [0, 1)");
        }
        if (!(adam_epsilon > 0.0)) throw ConfigError("lstm: Adam epsilon must be positive");
    }
};

struct TrainResult {
    LstmParams params;
    LinearHead head;
    Vector loss_history;  // mean squared error at the start of each epoch
};

/// Called after every epoch with (1-based epoch, loss).
using EpochObserver = std::function<void(std::size_t, double)>;

namespace detail {

class AdamState {
public:
    explicit AdamState(const std::vector<std::span<double>>& shape) {
        for (const auto& a : shape) {
            m_.emplace_back(a.size(), 0.0);
            v_.emplace_back(a.size(), 0.0);
        }
    }

    void step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads,
              const TrainConfig& cfg) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
        for (std::size_t a = 0; a < params.size(); ++a) {
            for (std::size_t i = 0; i < params[a].size(); ++i) {
                const double g = grads[a][i];
                m_[a][i] = cfg.beta1 * m_[a][i] + (1.0 - cfg.beta1) * g;
                v_[a][i] = cfg.beta2 * v_[a][i] + (1.0 - cfg.beta2) * g * g;
                const double mhat = m_[a][i] / c1;
                const double vhat = v_[a][i] / c2;
                params[a][i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
            }
        }
    }

private:
    std::vector<Vector> m_;
    std::vector<Vector> v_;
    std::uint64_t t_ = 0;
};

inline std::vector<std::span<double>> all_arrays(LstmParams& p, LinearHead& head) {
    auto out = p.arrays();
    out.emplace_back(head.weights.data());
    out.emplace_back(head.bias);
    return out;
}

}  // namespace detail

/// Fits the network and a linear head to the (scaled) horizon targets by full
/// BPTT, minimising mean squared error.
inline TrainResult train(const data::WindowedDataset& ds, const TrainConfig& cfg, const EpochObserver& observer = {}) {
    cfg.validate();
    if (ds.size() == 0) throw SizingError("lstm::train: empty training set");

    Rng rng(cfg.seed);
    TrainResult res;
    res.params = LstmParams::initialize(cfg.hidden, ds.n_features, rng);
    res.head.weights = seeded_uniform(rng, ds.n_out, cfg.hidden, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
    res.head.bias.assign(ds.n_out, 0.0);

    const std::size_t N = ds.size();
    const std::size_t batch = cfg.batch_size == 0 ? N : std::min(cfg.batch_size, N);
    auto param_arrays = detail::all_arrays(res.params, res.head);
    detail::AdamState adam(param_arrays);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < N; begin += batch) {
            const std::size_t end = std::min(N, begin + batch);
            const double denom = static_cast<double>((end - begin) * ds.n_out);
            LstmParams grad = LstmParams::zeros(cfg.hidden, ds.n_features);
            LinearHead head_grad{Matrix(ds.n_out, cfg.hidden), Vector(ds.n_out, 0.0)};
            double loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                auto fwd = sequence_forward(res.params, ds.inputs[i]);
                const Vector pred = res.head.apply(fwd.final_hidden);
                Vector dpred(ds.n_out);
                for (std::size_t s = 0; s < ds.n_out; ++s) {
                    const double e = pred[s] - ds.targets(i, s);
                    loss += e * e;
                    dpred[s] = 2.0 * e / denom;
                }
                outer_accumulate(head_grad.weights, dpred, fwd.final_hidden);
                for (std::size_t s = 0; s < ds.n_out; ++s) head_grad.bias[s] += dpred[s];
                Vector dh(cfg.hidden, 0.0);
                gemv_transpose_accumulate(res.head.weights, dpred, dh);
                LstmParams g = sequence_backward(res.params, fwd.cache, dh);
                auto dst = grad.arrays();
                auto src = g.arrays();
                for (std::size_t a = 0; a < dst.size(); ++a)
                    for (std::size_t j = 0; j < dst[a].size(); ++j) dst[a][j] += src[a][j];
            }
            loss /= denom;
            if (!std::isfinite(loss)) throw TrainingError("LSTM loss is not finite", epoch);
            epoch_loss += loss * static_cast<double>(end - begin);

            auto grad_arrays = detail::all_arrays(grad, head_grad);
            if (cfg.clip_norm > 0.0) {
                double sq = 0.0;
                for (const auto& a : grad_arrays)
                    for (double v : a) sq += v * v;
                const double norm = std::sqrt(sq);
                if (!std::isfinite(norm)) throw TrainingError("LSTM gradient is not finite", epoch);
                if (norm > cfg.clip_norm) {
                    const double f = cfg.clip_norm / norm;
                    for (auto& a : grad_arrays)
                        for (double& v : a) v *= f;
                }
            }
            if (cfg.optimizer == Optimizer::adam) {
                adam.step(param_arrays, grad_arrays, cfg);
            } else {
                for (std::size_t a = 0; a < param_arrays.size(); ++a)
                    for (std::size_t j = 0; j < param_arrays[a].size(); ++j)
                        param_arrays[a][j] -= cfg.learning_rate * grad_arrays[a][j];
            }
        }
        epoch_loss /= static_cast<double>(N);
        res.loss_history.push_back(epoch_loss);
        if (observer) observer(epoch, epoch_loss);
    }
    return res;
}

/// Z (N x k): row i is the final hidden state for sample i.
inline Matrix extract_latents(const LstmParams& p, const data::WindowedDataset& ds) {
    if (ds.size() > 0 && ds.n_features != p.input) {
        throw ShapeError("extract_latents: dataset has " + std::to_string(ds.n_features) +
                         " features, network expects " + std::to_string(p.input));
    }
    Matrix z(ds.size(), p.hidden);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto out = sequence_forward(p, ds.inputs[i]);
        std::copy(out.final_hidden.begin(), out.final_hidden.end(), z.row(i).begin());
    }
    return z;
}

}  // namespace hybridcast::lstm
