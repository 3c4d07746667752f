#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

#include "ulb/nn.hpp"

namespace ulb {

// Per-class loss weights; the training recipe uses reciprocal class counts.
struct ClassWeights {
    Eigen::VectorXd values;

    static ClassWeights uniform(int num_classes) {
        ClassWeights w;
        w.values = Eigen::VectorXd::Ones(num_classes);
        return w;
    }
    void validate() const {
        if (values.size() < 1) throw std::invalid_argument("class weights: empty");
        for (Eigen::Index i = 0; i < values.size(); ++i)
            if (!(values[i] > 0)) throw std::invalid_argument("class weights: entries must be positive");
    }
};

enum class LossKind {
    ce,              // class-weighted cross-entropy
    ce_entropy_mse,  // ce + squared error pulling prediction entropy to the reference model's
    ce_sym_kl,       // ce + symmetric KL against the reference model's predictions
    kl_distill,      // KL(model || reference); with aux group: alpha-paired ascent/descent
    mse_distill,     // mean squared error between model and reference predicted distributions
    uniform_kl,      // KL(model || uniform)
    contrastive,     // dot-product contrast of main-group vs aux-group logits (see docs below)
    neggrad_plus,    // alpha*ce(main) - (1-alpha)*ce(aux)
    l1_ce,           // ce + l1 penalty on all parameters
};

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

inline bool loss_needs_reference(LossKind k) {
    return k == LossKind::ce_entropy_mse || k == LossKind::ce_sym_kl || k == LossKind::kl_distill ||
           k == LossKind::mse_distill;
}
inline bool loss_needs_aux_group(LossKind k) {
    return k == LossKind::contrastive || k == LossKind::neggrad_plus;
}

template <class Scalar>
struct LossSpec {
    LossKind kind = LossKind::ce;
    double alpha = 1.0;        // retain/forget balance for paired variants
    double l1_weight = 0.0;    // l1_ce
    double temperature = 1.0;  // contrastive, kl_distill
    const Params<Scalar>* reference = nullptr;

    void validate() const {
        if (loss_needs_reference(kind) && reference == nullptr)
            throw std::invalid_argument(std::string("loss ") + loss_kind_name(kind) + " needs a reference model");
        if (kind == LossKind::neggrad_plus && (alpha < 0.0 || alpha > 1.0))
            throw std::invalid_argument("neggrad_plus: alpha must be in [0,1]");
        if (!(temperature > 0.0)) throw std::invalid_argument("loss: temperature must be positive");
        if (kind == LossKind::l1_ce && l1_weight < 0.0) throw std::invalid_argument("l1_ce: negative l1 weight");
    }
};

// A batch is one feature-column matrix with labels; paired variants
// (neggrad_plus, contrastive; kl_distill when used for ascent/descent) carry
// a second group in aux. multipliers, when non-empty, scale per-example
// losses and switch the reduction to sum/batch-size so that batches with
// large total weight take proportionally larger steps.
template <class Scalar>
struct LossBatch {
    MatrixX<Scalar> main_x;
    Eigen::VectorXi main_y;
    MatrixX<Scalar> aux_x;
    Eigen::VectorXi aux_y;
    Eigen::VectorXd multipliers;

    bool has_aux() const { return aux_x.cols() > 0; }
};

template <class Scalar>
struct LossResult {
    double loss = 0.0;
    Params<Scalar> grads;
};

namespace detail {

// exp of log-probabilities; arguments under -700 would produce denormal
// doubles (and drag every later multiply onto the slow microcode path), so
// masses below e^-700 ~ 1e-304 are flushed to zero.
inline Eigen::VectorXd exp_log_probs(const Eigen::Ref<const Eigen::VectorXd>& lp) {
    Eigen::VectorXd p(lp.size());
    for (Eigen::Index i = 0; i < lp.size(); ++i) p[i] = lp[i] < -700.0 ? 0.0 : std::exp(lp[i]);
    return p;
}

inline Eigen::MatrixXd log_softmax_cols(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd lp(z.rows(), z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double m = z.col(c).maxCoeff();
        const double lse = m + std::log(exp_log_probs((z.col(c).array() - m).matrix()).sum());
        lp.col(c) = z.col(c).array() - lse;
    }
    return lp;
}

// Backprop dL/dZ(out) through the stored activations, adding into grads.
template <class Scalar>
void backprop_into(const Params<Scalar>& p, const ForwardTrace<Scalar>& trace, MatrixX<Scalar> dz,
                   Params<Scalar>& grads) {
    for (int l = p.num_layers() - 1; l >= 0; --l) {
        auto li = static_cast<std::size_t>(l);
        grads.weights[li].noalias() += dz * trace.activations[li].transpose();
        grads.biases[li] += dz.rowwise().sum();
        if (l > 0) {
            MatrixX<Scalar> da = p.weights[li].transpose() * dz;
            // rectifier gate: activations[l] is the post-rectifier hidden output
            dz = da.cwiseProduct(
                (trace.activations[li].array() > Scalar(0)).template cast<Scalar>().matrix());
        }
    }
}

// Weighted cross-entropy on one group. Returns the loss and writes dL/dZ.
// Reduction follows the usual weighted-mean convention (sum w_y*l / sum w_y)
// unless per-example multipliers are given, in which case it is
// sum(w_y*m*l)/B so the batch's total weight scales the step.
inline double cross_entropy_group(const Eigen::MatrixXd& lp, const Eigen::VectorXi& y,
                                  const Eigen::VectorXd& class_w, const Eigen::VectorXd& multipliers,
                                  double outer_scale, Eigen::MatrixXd& dz) {
    const Eigen::Index b = lp.cols();
    Eigen::VectorXd w(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        w[i] = class_w[y[i]];
        if (multipliers.size() > 0) w[i] *= multipliers[i];
    }
    const double denom = multipliers.size() > 0 ? static_cast<double>(b) : w.sum();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        loss += -w[i] * lp(y[i], i);
        const double s = outer_scale * w[i] / denom;
        Eigen::VectorXd p = exp_log_probs(lp.col(i));
        dz.col(i) += s * p;
        dz(y[i], i) -= s;
    }
    return loss / denom;
}

}  // namespace detail

// Loss value (double accumulation) and exact analytic parameter gradients
// for every variant. Throws if the loss comes out non-finite.
template <class Scalar>
LossResult<Scalar> loss_and_grad(const Params<Scalar>& params, const LossBatch<Scalar>& batch,
                                 const LossSpec<Scalar>& spec, const ClassWeights& weights) {
    spec.validate();
    weights.validate();
    if (batch.main_x.cols() == 0) throw std::invalid_argument("loss_and_grad: empty batch");
    if (batch.main_x.cols() != batch.main_y.size())
        throw std::invalid_argument("loss_and_grad: feature/label count mismatch");
    if (loss_needs_aux_group(spec.kind) && !batch.has_aux())
        throw std::invalid_argument(std::string("loss ") + loss_kind_name(spec.kind) + " needs an aux group");

    LossResult<Scalar> out;
    out.grads = zeros_like(params);

    ForwardTrace<Scalar> trace;
    const MatrixX<Scalar> z_s = forward_batch(params, batch.main_x, &trace);
    const Eigen::MatrixXd z = z_s.template cast<double>();
    const Eigen::Index b = z.cols();
    const Eigen::Index k = z.rows();
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(k, b);
    double loss = 0.0;

    const double tau = spec.temperature;

    switch (spec.kind) {
        case LossKind::ce:
        case LossKind::l1_ce: {
            const Eigen::MatrixXd lp = detail::log_softmax_cols(z);
            loss = detail::cross_entropy_group(lp, batch.main_y, weights.values, batch.multipliers, 1.0, dz);
            if (spec.kind == LossKind::l1_ce) {
                for (int l = 0; l < params.num_layers(); ++l) {
                    auto li = static_cast<std::size_t>(l);
                    loss += spec.l1_weight *
                            (params.weights[li].template cast<double>().cwiseAbs().sum() +
                             params.biases[li].template cast<double>().cwiseAbs().sum());
                    out.grads.weights[li] +=
                        static_cast<Scalar>(spec.l1_weight) * params.weights[li].cwiseSign();
                    out.grads.biases[li] += static_cast<Scalar>(spec.l1_weight) * params.biases[li].cwiseSign();
                }
            }
            break;
        }

        case LossKind::ce_entropy_mse: {
            const Eigen::MatrixXd lp = detail::log_softmax_cols(z);
            loss = detail::cross_entropy_group(lp, batch.main_y, weights.values, batch.multipliers, 1.0, dz);
            const Eigen::MatrixXd z0 =
                forward_batch(*spec.reference, batch.main_x).template cast<double>();
            const Eigen::MatrixXd lp0 = detail::log_softmax_cols(z0);
            for (Eigen::Index i = 0; i < b; ++i) {
                const Eigen::VectorXd p = detail::exp_log_probs(lp.col(i));
                const Eigen::VectorXd p0 = detail::exp_log_probs(lp0.col(i));
                const double h = -(p.array() * lp.col(i).array()).sum();
                const double h0 = -(p0.array() * lp0.col(i).array()).sum();
                loss += (h - h0) * (h - h0) / static_cast<double>(b);
                // dH/dz_j = -p_j (ln p_j + H)
                dz.col(i) += (2.0 * (h - h0) / static_cast<double>(b)) *
                             (-(p.array() * (lp.col(i).array() + h))).matrix();
            }
            break;
        }

        case LossKind::ce_sym_kl: {
            const Eigen::MatrixXd lp = detail::log_softmax_cols(z);
            loss = detail::cross_entropy_group(lp, batch.main_y, weights.values, batch.multipliers, 1.0, dz);
            const Eigen::MatrixXd z0 =
                forward_batch(*spec.reference, batch.main_x).template cast<double>();
            const Eigen::MatrixXd lq = detail::log_softmax_cols(z0);
            for (Eigen::Index i = 0; i < b; ++i) {
                const Eigen::VectorXd p = detail::exp_log_probs(lp.col(i));
                const Eigen::VectorXd q = detail::exp_log_probs(lq.col(i));
                const Eigen::ArrayXd diff = lp.col(i).array() - lq.col(i).array();
                const double kl_pq = (p.array() * diff).sum();
                const double kl_qp = -(q.array() * diff).sum();
                loss += (kl_pq + kl_qp) / static_cast<double>(b);
                dz.col(i) += ((p.array() * (diff - kl_pq)) + (p - q).array()).matrix() / static_cast<double>(b);
            }
            break;
        }

        case LossKind::kl_distill: {
            // Plain form: mean KL(model || reference) over the batch.
            // With an aux group the phase is an ascent/descent pairing,
            // alpha*(ce(main) + KL(main)) - (1-alpha)*KL(aux): the label term
            // is required because pure distillation of the reference into
            // itself is a zero-gradient fixed point at the starting weights.
            auto kl_group = [&](const MatrixX<Scalar>& x, const Eigen::MatrixXd& zg, double scale,
                                Eigen::MatrixXd& dzg) -> double {
                const Eigen::MatrixXd lp = detail::log_softmax_cols(zg / tau);
                const Eigen::MatrixXd lq = detail::log_softmax_cols(
                    forward_batch(*spec.reference, x).template cast<double>() / tau);
                const Eigen::Index n = zg.cols();
                double total = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const Eigen::VectorXd p = detail::exp_log_probs(lp.col(i));
                    const Eigen::ArrayXd diff = lp.col(i).array() - lq.col(i).array();
                    const double kl = (p.array() * diff).sum();
                    total += kl / static_cast<double>(n);
                    dzg.col(i) +=
                        (scale / (tau * static_cast<double>(n))) * (p.array() * (diff - kl)).matrix();
                }
                return total;
            };
            if (batch.has_aux()) {
                const Eigen::MatrixXd lp = detail::log_softmax_cols(z);
                loss = spec.alpha * detail::cross_entropy_group(lp, batch.main_y, weights.values,
                                                                batch.multipliers, spec.alpha, dz);
                loss += spec.alpha * kl_group(batch.main_x, z, spec.alpha, dz);
                ForwardTrace<Scalar> aux_trace;
                const Eigen::MatrixXd za =
                    forward_batch(params, batch.aux_x, &aux_trace).template cast<double>();
                Eigen::MatrixXd dza = Eigen::MatrixXd::Zero(za.rows(), za.cols());
                loss -= (1.0 - spec.alpha) * kl_group(batch.aux_x, za, -(1.0 - spec.alpha), dza);
                detail::backprop_into(params, aux_trace, MatrixX<Scalar>(dza.template cast<Scalar>()),
                                      out.grads);
            } else {
                loss = kl_group(batch.main_x, z, 1.0, dz);
            }
            break;
        }

        case LossKind::mse_distill: {
            // Squared error between softmax outputs, not raw logits: the
            // reference model's logits can be arbitrarily large after heavy
            // training, and probability space keeps the gradients bounded.
            const Eigen::MatrixXd lp = detail::log_softmax_cols(z);
            const Eigen::MatrixXd lp0 = detail::log_softmax_cols(
                forward_batch(*spec.reference, batch.main_x).template cast<double>());
            const double scale = 1.0 / static_cast<double>(b * k);
            for (Eigen::Index i = 0; i < b; ++i) {
                const Eigen::VectorXd p = detail::exp_log_probs(lp.col(i));
                const Eigen::VectorXd p0 = detail::exp_log_probs(lp0.col(i));
                loss += scale * (p - p0).squaredNorm();
                const Eigen::VectorXd g = 2.0 * scale * (p - p0);
                const double dot = g.dot(p);
                dz.col(i) += (p.array() * (g.array() - dot)).matrix();
            }
            break;
        }

        case LossKind::uniform_kl: {
            const Eigen::MatrixXd lp = detail::log_softmax_cols(z);
            const double log_k = std::log(static_cast<double>(k));
            for (Eigen::Index i = 0; i < b; ++i) {
                const Eigen::VectorXd p = detail::exp_log_probs(lp.col(i));
                const double h = -(p.array() * lp.col(i).array()).sum();
                loss += (log_k - h) / static_cast<double>(b);
                dz.col(i) += (p.array() * (lp.col(i).array() + h)).matrix() / static_cast<double>(b);
            }
            break;
        }

        case LossKind::neggrad_plus: {
            const Eigen::MatrixXd lp = detail::log_softmax_cols(z);
            loss = spec.alpha * detail::cross_entropy_group(lp, batch.main_y, weights.values,
                                                            batch.multipliers, spec.alpha, dz);
            ForwardTrace<Scalar> aux_trace;
            const Eigen::MatrixXd za = forward_batch(params, batch.aux_x, &aux_trace).template cast<double>();
            const Eigen::MatrixXd lpa = detail::log_softmax_cols(za);
            Eigen::MatrixXd dza = Eigen::MatrixXd::Zero(za.rows(), za.cols());
            loss -= (1.0 - spec.alpha) * detail::cross_entropy_group(lpa, batch.aux_y, weights.values,
                                                                     Eigen::VectorXd(), -(1.0 - spec.alpha), dza);
            detail::backprop_into(params, aux_trace, MatrixX<Scalar>(dza.template cast<Scalar>()), out.grads);
            break;
        }

        case LossKind::contrastive: {
            // Scores s_ij = dot(main logit i, aux logit j) / tau; example i is
            // paired with aux column (i mod |aux|). The value is the negated
            // contrastive objective, s_pair - logsumexp_j(s_ij), so descending
            // this loss drives main-group predictions away from aux-group ones.
            ForwardTrace<Scalar> aux_trace;
            const Eigen::MatrixXd za = forward_batch(params, batch.aux_x, &aux_trace).template cast<double>();
            const Eigen::Index na = za.cols();
            Eigen::MatrixXd dza = Eigen::MatrixXd::Zero(za.rows(), na);
            const Eigen::MatrixXd scores = (z.transpose() * za) / tau;  // b x na
            for (Eigen::Index i = 0; i < b; ++i) {
                const Eigen::Index pair = i % na;
                const double m = scores.row(i).maxCoeff();
                const double lse =
                    m + std::log(detail::exp_log_probs((scores.row(i).transpose().array() - m).matrix()).sum());
                loss += (scores(i, pair) - lse) / static_cast<double>(b);
                const Eigen::ArrayXd sigma =
                    detail::exp_log_probs((scores.row(i).transpose().array() - lse).matrix()).array();
                Eigen::VectorXd coeff = -sigma.matrix();  // dL/ds_ij before the pair term
                coeff[pair] += 1.0;
                coeff /= static_cast<double>(b);
                dz.col(i) += (za * coeff) / tau;
                for (Eigen::Index j = 0; j < na; ++j) dza.col(j) += (coeff[j] / tau) * z.col(i);
            }
            detail::backprop_into(params, aux_trace, MatrixX<Scalar>(dza.template cast<Scalar>()), out.grads);
            break;
        }
    }

    if (!std::isfinite(loss)) throw std::runtime_error("loss_and_grad: loss is not finite");
    detail::backprop_into(params, trace, MatrixX<Scalar>(dz.template cast<Scalar>()), out.grads);
    out.loss = loss;
    return out;
}

}  // namespace ulb
