#pragma once
// Objective terms and their composition.
//
// Per example:
//   l_s     = CE(a_o_hat, a_o) + CE(a_f_s_hat, a_f)       experience terms
//   l_p     = MSE(x_f_hat, x_f) + CE(a_f_p_hat, a_f)      pattern terms
//   l_cyc_p = MSE(x_o_hat, x_o)                           feature cycle
//   l_cyc_s = CE(a_f_s_hat, target(a_f_p_hat))            label cycle
//   l_c     = l_cyc_p + l_cyc_s
//   total   = lambda_s * l_s + lambda_p * l_p + lambda_c * l_c
//
// The label-cycle target is the pattern path's prediction treated as ground
// truth: it is stop-gradiented, so this term never pushes a_f_p_hat toward
// a_f_s_hat. Soft targets keep the term differentiable; a hard variant
// (one-hot argmax) is available behind cycle_label_target.
//
// Term switches exist for the ablation suites; a disabled term contributes
// an exact 0 so the decomposition identities hold for every configuration.

#include <optional>
#include <string>

#include "aact/models.hpp"
#include "aact/tensor.hpp"

namespace aact {

struct Lambdas {
    double semantic = 1.0;  // lambda_s
    double pattern = 1.0;   // lambda_p
    double cycle = 1.0;     // lambda_c
};

enum class CycleLabelTarget { soft, hard };

inline CycleLabelTarget cycle_label_target_from_string(const std::string& s) {
    if (s == "soft") return CycleLabelTarget::soft;
    if (s == "hard") return CycleLabelTarget::hard;
    throw std::invalid_argument("unknown cycle_label_target '" + s +
                                "' (expected soft or hard)");
}

/// Which terms of the objective are active. Defaults to everything the model
/// kind produces; the ablation suites switch individual terms off.
struct LossTerms {
    bool ce_observed = true;     // CE(a_o_hat, a_o)
    bool ce_experience = true;   // CE(a_f_s_hat, a_f)
    bool mse_future = true;      // MSE(x_f_hat, x_f)
    bool ce_pattern = true;      // CE(a_f_p_hat, a_f)
    bool cycle_feature = true;   // MSE(x_o_hat, x_o)
    bool cycle_semantic = true;  // CE(a_f_s_hat, sg(a_f_p_hat))

    static LossTerms all() { return {}; }
    static LossTerms none() { return {false, false, false, false, false, false}; }
};

struct LossBreakdown {
    double l_s = 0.0;
    double l_p = 0.0;
    double l_cyc_p = 0.0;
    double l_cyc_s = 0.0;
    double l_c = 0.0;
    double total = 0.0;
    Lambdas lambdas;
};

/// The four component scalars as live graph tensors; disabled terms are exact
/// constant zeros. Training averages these over a batch before composing.
struct ComponentScalars {
    Tensor l_s, l_p, l_cyc_p, l_cyc_s;
};

/// A composed objective: the recorded scalar to differentiate plus the plain
/// component values.
struct ComposedLoss {
    Tensor total;  // scalar on the tape
    LossBreakdown breakdown;
};

/// Ground truth for one example as the losses see it.
struct LossTargets {
    Tensor x_o;  // M x d observed frames
    Tensor x_f;  // N x d future frames
    std::size_t a_o = 0;
    std::size_t a_f = 0;
};

namespace detail {

inline Tensor add_opt(const std::optional<Tensor>& a, const std::optional<Tensor>& b) {
    if (a && b) return add(*a, *b);
    if (a) return *a;
    if (b) return *b;
    return Tensor::scalar(0.0);
}

/// Label-cycle target from the pattern prediction. Soft: the stop-gradiented
/// distribution itself. Hard: its one-hot argmax.
inline Tensor cycle_target(const Tensor& a_f_p, CycleLabelTarget mode) {
    if (mode == CycleLabelTarget::soft) return stop_gradient(a_f_p);
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < a_f_p.numel(); ++i)
        if (a_f_p.at(i) > a_f_p.at(argmax)) argmax = i;
    std::vector<double> onehot(a_f_p.numel(), 0.0);
    onehot[argmax] = 1.0;
    return Tensor::from({a_f_p.numel()}, std::move(onehot));
}

}  // namespace detail

inline ComponentScalars loss_components(const SeOutputs& out, const LossTargets& target,
                                        LossTerms terms = LossTerms::all()) {
    ComponentScalars c;
    std::optional<Tensor> ce_o, ce_e;
    if (terms.ce_observed) ce_o = cross_entropy(out.a_o_hat, target.a_o);
    if (terms.ce_experience) ce_e = cross_entropy(out.a_f_s, target.a_f);
    c.l_s = detail::add_opt(ce_o, ce_e);
    c.l_p = Tensor::scalar(0.0);
    c.l_cyc_p = Tensor::scalar(0.0);
    c.l_cyc_s = Tensor::scalar(0.0);
    return c;
}

inline ComponentScalars loss_components(const PvOutputs& out, const LossTargets& target,
                                        LossTerms terms = LossTerms::all()) {
    ComponentScalars c;
    std::optional<Tensor> m, ce_p;
    if (terms.mse_future) m = mse(out.x_f_hat, target.x_f);
    if (terms.ce_pattern) ce_p = cross_entropy(out.a_f_p, target.a_f);
    c.l_s = Tensor::scalar(0.0);
    c.l_p = detail::add_opt(m, ce_p);
    c.l_cyc_p = Tensor::scalar(0.0);
    c.l_cyc_s = Tensor::scalar(0.0);
    return c;
}

/// Components of the full cycle-model objective. `frozen_cycle_target`, when
/// given, replaces the stop-gradiented pattern prediction as the label-cycle
/// target; the finite-difference oracle passes the value captured at the
/// unperturbed parameters, which is exactly the function the analytic
/// gradient differentiates.
inline ComponentScalars loss_components(const ActOutputs& out, const LossTargets& target,
                                        LossTerms terms = LossTerms::all(),
                                        CycleLabelTarget cycle_mode = CycleLabelTarget::soft,
                                        const Tensor* frozen_cycle_target = nullptr) {
    ComponentScalars c;
    std::optional<Tensor> ce_o, ce_e, m, ce_p;
    if (terms.ce_observed) ce_o = cross_entropy(out.a_o_hat, target.a_o);
    if (terms.ce_experience) ce_e = cross_entropy(out.a_f_s, target.a_f);
    if (terms.mse_future) m = mse(out.x_f_hat, target.x_f);
    if (terms.ce_pattern) ce_p = cross_entropy(out.a_f_p, target.a_f);
    c.l_s = detail::add_opt(ce_o, ce_e);
    c.l_p = detail::add_opt(m, ce_p);
    c.l_cyc_p = terms.cycle_feature ? mse(out.x_o_hat, target.x_o) : Tensor::scalar(0.0);
    if (terms.cycle_semantic) {
        Tensor t = frozen_cycle_target ? *frozen_cycle_target
                                       : detail::cycle_target(out.a_f_p, cycle_mode);
        c.l_cyc_s = cross_entropy(out.a_f_s, t);
    } else {
        c.l_cyc_s = Tensor::scalar(0.0);
    }
    return c;
}

/// Weighted total. The breakdown is read back off the same graph nodes, so
/// l_c = l_cyc_p + l_cyc_s and total = the lambda-weighted sum hold exactly,
/// not merely to rounding.
inline ComposedLoss compose_total(const ComponentScalars& c, const Lambdas& lambdas) {
    ComposedLoss out;
    Tensor l_c = add(c.l_cyc_p, c.l_cyc_s);
    out.total = add(add(scale(c.l_s, lambdas.semantic), scale(c.l_p, lambdas.pattern)),
                    scale(l_c, lambdas.cycle));
    out.breakdown.l_s = c.l_s.item();
    out.breakdown.l_p = c.l_p.item();
    out.breakdown.l_cyc_p = c.l_cyc_p.item();
    out.breakdown.l_cyc_s = c.l_cyc_s.item();
    out.breakdown.l_c = l_c.item();
    out.breakdown.total = out.total.item();
    out.breakdown.lambdas = lambdas;
    return out;
}

inline ComposedLoss composed_losses(const SeOutputs& out, const LossTargets& target,
                                    const Lambdas& lambdas, LossTerms terms = LossTerms::all()) {
    return compose_total(loss_components(out, target, terms), lambdas);
}

inline ComposedLoss composed_losses(const PvOutputs& out, const LossTargets& target,
                                    const Lambdas& lambdas, LossTerms terms = LossTerms::all()) {
    return compose_total(loss_components(out, target, terms), lambdas);
}

inline ComposedLoss composed_losses(const ActOutputs& out, const LossTargets& target,
                                    const Lambdas& lambdas, LossTerms terms = LossTerms::all(),
                                    CycleLabelTarget cycle_mode = CycleLabelTarget::soft,
                                    const Tensor* frozen_cycle_target = nullptr) {
    return compose_total(loss_components(out, target, terms, cycle_mode, frozen_cycle_target),
                         lambdas);
}

}  // namespace aact
