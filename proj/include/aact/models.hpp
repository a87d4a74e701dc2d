#pragma once
// The three anticipation models, assembled from the shared encoder and small
// MLP heads.
//
//   experience path:  observed frames -> recognition encoder -> observed
//                     label -> experience MLP -> future label
//   pattern path:     observed frames -> translation encoder -> future
//                     frames -> classifier -> future label
//   cycle model:      forward translation to future frames, classification,
//                     reverse translation back to observed frames,
//                     recognition of the reconstruction, and experience-based
//                     anticipation from the recognized label.

#include <optional>
#include <string>

#include "aact/attention.hpp"
#include "aact/tensor.hpp"

namespace aact {

enum class ModelKind { semantic_experience, pattern_visualization, cycle_transform };

inline const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::semantic_experience: return "se";
        case ModelKind::pattern_visualization: return "pv";
        case ModelKind::cycle_transform: return "act";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "se") return ModelKind::semantic_experience;
    if (s == "pv") return ModelKind::pattern_visualization;
    if (s == "act") return ModelKind::cycle_transform;
    throw std::invalid_argument("unknown model kind '" + s + "' (expected se, pv or act)");
}

/// Two-layer MLP head over frame features: d -> d hidden with relu, then
/// d -> A logits and softmax.
struct ClassifierParams {
    Tensor w1, b1;  // d x d, d
    Tensor w2, b2;  // d x A, A
};

enum class ClassifyMode { pooled, dense };

/// Two-layer MLP over a label distribution: A -> A hidden with relu, then
/// A -> A logits and softmax. Maps a recognized label to an anticipated one.
struct ExperienceParams {
    Tensor w1, b1;
    Tensor w2, b2;
};

inline ClassifierParams make_classifier(const std::string& prefix, std::size_t d, std::size_t a,
                                        Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    ClassifierParams mlp;
    mlp.w1 = Tensor::param_uniform(prefix + ".w1", {d, d}, -bound, bound, rng);
    mlp.b1 = Tensor::param(prefix + ".b1", {d}, std::vector<double>(d, 0.0));
    mlp.w2 = Tensor::param_uniform(prefix + ".w2", {d, a}, -bound, bound, rng);
    mlp.b2 = Tensor::param(prefix + ".b2", {a}, std::vector<double>(a, 0.0));
    return mlp;
}

inline ExperienceParams make_experience(const std::string& prefix, std::size_t a, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(a));
    ExperienceParams mlp;
    mlp.w1 = Tensor::param_uniform(prefix + ".w1", {a, a}, -bound, bound, rng);
    mlp.b1 = Tensor::param(prefix + ".b1", {a}, std::vector<double>(a, 0.0));
    mlp.w2 = Tensor::param_uniform(prefix + ".w2", {a, a}, -bound, bound, rng);
    mlp.b2 = Tensor::param(prefix + ".b2", {a}, std::vector<double>(a, 0.0));
    return mlp;
}

template <typename Visitor>
void visit_params(ClassifierParams& mlp, Visitor&& visit) {
    visit(mlp.w1);
    visit(mlp.b1);
    visit(mlp.w2);
    visit(mlp.b2);
}

template <typename Visitor>
void visit_params(ExperienceParams& mlp, Visitor&& visit) {
    visit(mlp.w1);
    visit(mlp.b1);
    visit(mlp.w2);
    visit(mlp.b2);
}

namespace detail {

inline Tensor mlp_rows(const Tensor& rows, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                       const Tensor& b2) {
    Tensor hidden = relu(add_rowvec(matmul(rows, w1), b1));
    return add_rowvec(matmul(hidden, w2), b2);
}

}  // namespace detail

/// Pooled mode: mean over rows, MLP, softmax -> one distribution over A.
/// Dense mode: MLP per row, softmax per row -> T distributions.
inline Tensor classify(const Tensor& features, const ClassifierParams& mlp,
                       ClassifyMode mode = ClassifyMode::pooled) {
    if (features.shape().size() != 2 || features.rows() == 0)
        throw std::invalid_argument("classify: need a nonempty frame sequence, got " +
                                    shape_str(features.shape()));
    if (mode == ClassifyMode::pooled) {
        Tensor pooled = reshape(mean_rows(features), {1, features.cols()});
        Tensor logits = detail::mlp_rows(pooled, mlp.w1, mlp.b1, mlp.w2, mlp.b2);
        return softmax(reshape(logits, {logits.cols()}));
    }
    Tensor logits = detail::mlp_rows(features, mlp.w1, mlp.b1, mlp.w2, mlp.b2);
    return softmax(logits, 1);
}

/// Experience step: anticipated label distribution from a recognized one.
/// Consumes the soft distribution, so the whole path stays differentiable.
inline Tensor experience_anticipate(const Tensor& recognized, const ExperienceParams& mlp) {
    const std::size_t a = mlp.b2.numel();
    if (recognized.shape() != Shape{a})
        throw std::invalid_argument("experience_anticipate: input " +
                                    shape_str(recognized.shape()) + " but " + std::to_string(a) +
                                    " classes");
    Tensor row = reshape(recognized, {1, a});
    Tensor logits = detail::mlp_rows(row, mlp.w1, mlp.b1, mlp.w2, mlp.b2);
    return softmax(reshape(logits, {a}));
}

// ---------------------------------------------------------------------------
// model parameter bundles
// ---------------------------------------------------------------------------

struct Geometry {
    std::size_t d = 16;       // frame feature width
    std::size_t num_actions = 12;
    std::size_t observed = 8;  // M
    std::size_t future = 4;    // N
    std::size_t horizon = 4;   // k, gap between windows in frames
};

struct ModelParams {
    ModelKind kind = ModelKind::cycle_transform;
    Geometry geometry;
    std::size_t heads = 8;
    std::size_t layers = 2;

    std::optional<EncoderParams> g_o;   // recognition (experience model)
    std::optional<EncoderParams> g_t;   // translation (pattern model)
    std::optional<EncoderParams> g_a;   // forward translation (cycle model)
    std::optional<EncoderParams> g_r;   // reverse translation (cycle model)
    std::optional<ClassifierParams> head;  // classification head on g_o
    std::optional<ClassifierParams> v;     // classifier on translated frames
    std::optional<ClassifierParams> v_a;   // future recognition (cycle model)
    std::optional<ClassifierParams> v_r;   // past recognition (cycle model)
    std::optional<ExperienceParams> experience;
};

inline ModelParams make_model(ModelKind kind, const Geometry& geo, std::size_t heads,
                              std::size_t layers, Rng& rng) {
    ModelParams model;
    model.kind = kind;
    model.geometry = geo;
    model.heads = heads;
    model.layers = layers;
    switch (kind) {
        case ModelKind::semantic_experience:
            model.g_o = make_encoder("g_o", geo.d, layers, heads, 0, rng);
            model.head = make_classifier("head", geo.d, geo.num_actions, rng);
            model.experience = make_experience("e", geo.num_actions, rng);
            break;
        case ModelKind::pattern_visualization:
            model.g_t = make_encoder("g_t", geo.d, layers, heads, geo.future, rng);
            model.v = make_classifier("v", geo.d, geo.num_actions, rng);
            break;
        case ModelKind::cycle_transform:
            model.g_a = make_encoder("g_a", geo.d, layers, heads, geo.future, rng);
            model.v_a = make_classifier("v_a", geo.d, geo.num_actions, rng);
            model.g_r = make_encoder("g_r", geo.d, layers, heads, geo.observed, rng);
            model.v_r = make_classifier("v_r", geo.d, geo.num_actions, rng);
            model.experience = make_experience("e", geo.num_actions, rng);
            break;
    }
    return model;
}

template <typename Visitor>
void visit_params(ModelParams& model, Visitor&& visit) {
    if (model.g_o) visit_params(*model.g_o, visit);
    if (model.g_t) visit_params(*model.g_t, visit);
    if (model.g_a) visit_params(*model.g_a, visit);
    if (model.g_r) visit_params(*model.g_r, visit);
    if (model.head) visit_params(*model.head, visit);
    if (model.v) visit_params(*model.v, visit);
    if (model.v_a) visit_params(*model.v_a, visit);
    if (model.v_r) visit_params(*model.v_r, visit);
    if (model.experience) visit_params(*model.experience, visit);
}

inline ParameterMap parameters(ModelParams& model) {
    ParameterMap out;
    visit_params(model, [&](Tensor& t) { out.emplace(t.name(), t); });
    return out;
}

// ---------------------------------------------------------------------------
// forward passes
// ---------------------------------------------------------------------------

struct SeOutputs {
    Tensor a_o_hat;  // recognized observed action
    Tensor a_f_s;    // anticipated future action (experience path)
};

struct PvOutputs {
    Tensor x_f_hat;  // synthesized future frames, N x d
    Tensor a_f_p;    // anticipated future action (pattern path)
};

struct ActOutputs {
    Tensor x_f_hat;  // N x d
    Tensor a_f_p;    // from the synthesized future frames
    Tensor x_o_hat;  // M x d reconstruction of the observed frames
    Tensor a_o_hat;  // recognized from the reconstruction
    Tensor a_f_s;    // anticipated from the recognized label
};

namespace detail {

inline void check_kind(const ModelParams& model, ModelKind expected, const char* op) {
    if (model.kind != expected)
        throw std::invalid_argument(std::string(op) + ": model kind is " +
                                    to_string(model.kind));
}

inline void check_observed(const ModelParams& model, const Tensor& x_o, const char* op) {
    const Geometry& geo = model.geometry;
    if (x_o.shape() != Shape{geo.observed, geo.d})
        throw std::invalid_argument(std::string(op) + ": observed frames " +
                                    shape_str(x_o.shape()) + ", expected " +
                                    std::to_string(geo.observed) + "x" + std::to_string(geo.d));
}

}  // namespace detail

inline SeOutputs se_forward(const Tensor& x_o, const ModelParams& model) {
    detail::check_kind(model, ModelKind::semantic_experience, "se_forward");
    detail::check_observed(model, x_o, "se_forward");
    SeOutputs out;
    Tensor encoded = encoder_forward(x_o, *model.g_o, x_o.rows());
    out.a_o_hat = classify(encoded, *model.head);
    out.a_f_s = experience_anticipate(out.a_o_hat, *model.experience);
    return out;
}

inline PvOutputs pv_forward(const Tensor& x_o, const ModelParams& model, std::size_t future_len) {
    detail::check_kind(model, ModelKind::pattern_visualization, "pv_forward");
    detail::check_observed(model, x_o, "pv_forward");
    PvOutputs out;
    out.x_f_hat = encoder_forward(x_o, *model.g_t, future_len);
    out.a_f_p = classify(out.x_f_hat, *model.v);
    return out;
}

inline ActOutputs act_forward(const Tensor& x_o, const ModelParams& model,
                              std::size_t future_len) {
    detail::check_kind(model, ModelKind::cycle_transform, "act_forward");
    detail::check_observed(model, x_o, "act_forward");
    ActOutputs out;
    out.x_f_hat = encoder_forward(x_o, *model.g_a, future_len);        // pattern visualization
    out.a_f_p = classify(out.x_f_hat, *model.v_a);                     // action anticipation
    out.x_o_hat = encoder_forward(out.x_f_hat, *model.g_r, x_o.rows());  // reconstruction
    out.a_o_hat = classify(out.x_o_hat, *model.v_r);                   // recognition
    out.a_f_s = experience_anticipate(out.a_o_hat, *model.experience);  // anticipation
    return out;
}

/// The distribution a trained model is scored on: the pattern path when the
/// model has one, otherwise the experience path.
inline Tensor future_distribution(const SeOutputs& out) { return out.a_f_s; }
inline Tensor future_distribution(const PvOutputs& out) { return out.a_f_p; }
inline Tensor future_distribution(const ActOutputs& out) { return out.a_f_p; }

}  // namespace aact
