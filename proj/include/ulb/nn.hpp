#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulb/rng.hpp"

namespace ulb {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;

// Correct-class probabilities are clamped to [kProbClamp, 1 - kProbClamp]
// before logit scaling, which bounds the statistic to about +-20.72.
inline constexpr double kProbClamp = 1e-9;

// Layer widths, input first, class count last. Hidden layers use a rectifier,
// the output layer is linear.
struct Architecture {
    std::vector<int> layer_sizes;

    int input_dim() const { return layer_sizes.front(); }
    int num_classes() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

    void validate() const {
        if (layer_sizes.size() < 2) throw std::invalid_argument("architecture needs at least input and output sizes");
        for (int s : layer_sizes)
            if (s < 1) throw std::invalid_argument("architecture layer sizes must be positive");
    }

    bool operator==(const Architecture&) const = default;
};

// Dense parameters of the fixed MLP family. Weight matrices are
// (out x in); float in production paths, double in gradient checks.
template <class Scalar>
struct Params {
    std::vector<MatrixX<Scalar>> weights;
    std::vector<VectorX<Scalar>> biases;

    int num_layers() const { return static_cast<int>(weights.size()); }

    Architecture arch() const {
        Architecture a;
        a.layer_sizes.reserve(weights.size() + 1);
        a.layer_sizes.push_back(static_cast<int>(weights.front().cols()));
        for (const auto& w : weights) a.layer_sizes.push_back(static_cast<int>(w.rows()));
        return a;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
        for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& w : weights)
            if (!w.allFinite()) return false;
        for (const auto& b : biases)
            if (!b.allFinite()) return false;
        return true;
    }

    bool same_shape(const Params& other) const {
        if (weights.size() != other.weights.size()) return false;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols())
                return false;
        return true;
    }

    bool operator==(const Params& other) const {
        if (!same_shape(other)) return false;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
        return true;
    }
};

using ParamsF = Params<float>;
using ParamsD = Params<double>;

template <class Scalar>
Params<Scalar> zeros_like(const Params<Scalar>& p) {
    Params<Scalar> z;
    z.weights.reserve(p.weights.size());
    z.biases.reserve(p.biases.size());
    for (const auto& w : p.weights) z.weights.push_back(MatrixX<Scalar>::Zero(w.rows(), w.cols()));
    for (const auto& b : p.biases) z.biases.push_back(VectorX<Scalar>::Zero(b.size()));
    return z;
}

template <class To, class From>
Params<To> cast_params(const Params<From>& p) {
    Params<To> out;
    out.weights.reserve(p.weights.size());
    out.biases.reserve(p.biases.size());
    for (const auto& w : p.weights) out.weights.push_back(w.template cast<To>());
    for (const auto& b : p.biases) out.biases.push_back(b.template cast<To>());
    return out;
}

// Half-width of the fan-in scaled uniform initializer for one layer.
inline double init_bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn row-major, biases zero.
// A deterministic function of (arch, seed).
template <class Scalar>
Params<Scalar> init_params(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(derive_seed(seed, "param-init"));
    Params<Scalar> p;
    p.weights.reserve(static_cast<std::size_t>(arch.num_layers()));
    p.biases.reserve(static_cast<std::size_t>(arch.num_layers()));
    for (int l = 0; l < arch.num_layers(); ++l) {
        const int in = arch.layer_sizes[static_cast<std::size_t>(l)];
        const int out = arch.layer_sizes[static_cast<std::size_t>(l) + 1];
        const double bound = init_bound(in);
        MatrixX<Scalar> w(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
        p.weights.push_back(std::move(w));
        p.biases.push_back(VectorX<Scalar>::Zero(out));
    }
    return p;
}

// Activations kept around for backprop: activations[0] is the input batch,
// activations[l+1] the (post-rectifier) output of layer l.
template <class Scalar>
struct ForwardTrace {
    std::vector<MatrixX<Scalar>> activations;
};

// Batch forward pass; columns are examples, returns raw logits (K x B).
template <class Scalar>
MatrixX<Scalar> forward_batch(const Params<Scalar>& p, const MatrixX<Scalar>& x,
                              ForwardTrace<Scalar>* trace = nullptr) {
    if (x.rows() != p.weights.front().cols())
        throw std::invalid_argument("forward: input dimension mismatch (" + std::to_string(x.rows()) + " vs " +
                                    std::to_string(p.weights.front().cols()) + ")");
    if (trace) {
        trace->activations.clear();
        trace->activations.push_back(x);
    }
    MatrixX<Scalar> a = x;
    const int last = p.num_layers() - 1;
    for (int l = 0; l <= last; ++l) {
        MatrixX<Scalar> z = (p.weights[static_cast<std::size_t>(l)] * a).colwise() + p.biases[static_cast<std::size_t>(l)];
        if (l < last) z = z.cwiseMax(Scalar(0));
        if (trace) trace->activations.push_back(z);
        a = std::move(z);
    }
    return a;
}

template <class Scalar>
VectorX<Scalar> forward(const Params<Scalar>& p, const VectorX<Scalar>& x) {
    MatrixX<Scalar> xm(x.size(), 1);
    xm.col(0) = x;
    return forward_batch(p, xm).col(0);
}

// Softmax of a logit vector, computed in double.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return e / e.sum();
}

// -sum p ln p with 0 ln 0 := 0.
inline double prediction_entropy(const Eigen::VectorXd& probs) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i)
        if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
    return h;
}

// Probability of the correct class under the model, clamped away from 0/1.
template <class Scalar>
double confidence_correct(const Params<Scalar>& p, const VectorX<Scalar>& x, int label) {
    const int k = static_cast<int>(p.weights.back().rows());
    if (label < 0 || label >= k) throw std::invalid_argument("confidence_correct: label out of range");
    Eigen::VectorXd probs = softmax(forward(p, x).template cast<double>());
    double v = probs[label];
    if (v < kProbClamp) v = kProbClamp;
    if (v > 1.0 - kProbClamp) v = 1.0 - kProbClamp;
    return v;
}

// h = ln(p) - ln(1-p); the 1-d test statistic.
inline double logit_scale(double p) { return std::log(p) - std::log1p(-p); }

template <class Scalar>
struct OptimizerState {
    std::vector<MatrixX<Scalar>> weight_momentum;
    std::vector<VectorX<Scalar>> bias_momentum;

    static OptimizerState zero(const Params<Scalar>& p) {
        OptimizerState s;
        const Params<Scalar> z = zeros_like(p);
        s.weight_momentum = z.weights;
        s.bias_momentum = z.biases;
        return s;
    }
};

// v <- momentum*v + (g + wd*theta); theta <- theta - lr*v
template <class Scalar>
void sgd_momentum_step(Params<Scalar>& params, const Params<Scalar>& grads, OptimizerState<Scalar>& state,
                       double lr, double momentum, double weight_decay) {
    if (!(lr > 0)) throw std::invalid_argument("sgd: lr must be positive");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("sgd: momentum must be in [0,1)");
    if (weight_decay < 0) throw std::invalid_argument("sgd: weight_decay must be non-negative");
    if (!params.same_shape(grads)) throw std::invalid_argument("sgd: parameter/gradient shape mismatch");
    const auto m = static_cast<Scalar>(momentum);
    const auto wd = static_cast<Scalar>(weight_decay);
    const auto step = static_cast<Scalar>(lr);
    for (int l = 0; l < params.num_layers(); ++l) {
        auto li = static_cast<std::size_t>(l);
        state.weight_momentum[li] = m * state.weight_momentum[li] + (grads.weights[li] + wd * params.weights[li]);
        state.bias_momentum[li] = m * state.bias_momentum[li] + (grads.biases[li] + wd * params.biases[li]);
        params.weights[li] -= step * state.weight_momentum[li];
        params.biases[li] -= step * state.bias_momentum[li];
    }
}

}  // namespace ulb
