#pragma once
// Deterministic mini-batch training with Adam, plus checkpoints.
//
// All randomness (parameter init, epoch shuffling, the gradient-check batch)
// comes from the config seed, batches walk the shuffled order, and Adam
// iterates parameters in name order, so a config reproduces its run bitwise.
//
// Checkpoint file layout (integers and reals little-endian):
//   magic    7 bytes "AACTCP1"
//   version  u32     1
//   config   u32 length + that many bytes of `key = value` lines
//   count    u64     number of tensor records, sorted by name
//   record:  u32 name length, name bytes, u32 rank, rank u64 extents,
//            then the f64 values

#include <cinttypes>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "aact/losses.hpp"
#include "aact/models.hpp"
#include "aact/parallel.hpp"
#include "aact/synthetic.hpp"
#include "aact/tensor.hpp"

namespace aact {

struct TrainConfig {
    ModelKind model_kind = ModelKind::cycle_transform;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    Lambdas lambdas;
    std::uint64_t seed = 1;
    CycleLabelTarget cycle_label_target = CycleLabelTarget::soft;
    Geometry geometry;
    std::size_t heads = 8;
    std::size_t layers = 2;
    bool grad_check = false;  // verify one random batch before training

    void validate() const {
        if (learning_rate <= 0.0 || adam_eps <= 0.0)
            throw std::invalid_argument("train config: rates and epsilons must be positive");
        if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
            throw std::invalid_argument("train config: betas must lie in (0, 1)");
        if (lambdas.semantic < 0.0 || lambdas.pattern < 0.0 || lambdas.cycle < 0.0)
            throw std::invalid_argument("train config: lambdas must be nonnegative");
        if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be > 0");
    }
};

struct EpochStats {
    LossBreakdown loss;     // example-weighted means, identities recomposed
    double train_top1 = 0.0;
    double val_top1 = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
    ModelParams model;
    TrainHistory history;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> moments;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// left untouched, moments included.
inline void adam_step(ParameterMap& params, const GradientMap& grads, AdamState& state,
                      const AdamHyper& hyper) {
    state.step += 1;
    const double bias1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (auto& [name, grad] : grads) {
        auto it = params.find(name);
        if (it == params.end())
            throw std::invalid_argument("adam_step: gradient for unknown parameter " + name);
        Tensor param = it->second;
        if (grad.shape() != param.shape())
            throw std::invalid_argument("adam_step: gradient shape " + shape_str(grad.shape()) +
                                        " != parameter shape " + shape_str(param.shape()) +
                                        " for " + name);
        AdamState::Moments& mom = state.moments[name];
        if (mom.m.empty()) {
            mom.m.assign(param.numel(), 0.0);
            mom.v.assign(param.numel(), 0.0);
        }
        auto& values = param.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad.at(i);
            mom.m[i] = hyper.beta1 * mom.m[i] + (1.0 - hyper.beta1) * g;
            mom.v[i] = hyper.beta2 * mom.v[i] + (1.0 - hyper.beta2) * g * g;
            const double m_hat = mom.m[i] / bias1;
            const double v_hat = mom.v[i] / bias2;
            values[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// batch objective
// ---------------------------------------------------------------------------

inline std::size_t argmax_index(const Tensor& dist) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.numel(); ++i)
        if (dist.at(i) > dist.at(best)) best = i;
    return best;
}

struct BatchResult {
    ComposedLoss loss;
    std::vector<std::size_t> predicted;  // argmax future label per example
};

/// Mean objective over a batch. Component scalars are summed across examples
/// and scaled once, then composed, so the logged breakdown satisfies the
/// decomposition identities exactly. `frozen_cycle_targets`, when given,
/// replaces the per-example stop-gradient targets (finite-difference oracle).
inline BatchResult batch_loss(const ModelParams& model, const std::vector<LossTargets>& batch,
                              const Lambdas& lambdas, LossTerms terms,
                              CycleLabelTarget cycle_mode,
                              const std::vector<Tensor>* frozen_cycle_targets = nullptr) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    BatchResult result;
    result.predicted.reserve(batch.size());
    std::optional<ComponentScalars> sum;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const LossTargets& ex = batch[i];
        ComponentScalars c;
        switch (model.kind) {
            case ModelKind::semantic_experience: {
                SeOutputs out = se_forward(ex.x_o, model);
                result.predicted.push_back(argmax_index(future_distribution(out)));
                c = loss_components(out, ex, terms);
                break;
            }
            case ModelKind::pattern_visualization: {
                PvOutputs out = pv_forward(ex.x_o, model, model.geometry.future);
                result.predicted.push_back(argmax_index(future_distribution(out)));
                c = loss_components(out, ex, terms);
                break;
            }
            case ModelKind::cycle_transform: {
                ActOutputs out = act_forward(ex.x_o, model, model.geometry.future);
                result.predicted.push_back(argmax_index(future_distribution(out)));
                const Tensor* frozen =
                    frozen_cycle_targets ? &(*frozen_cycle_targets)[i] : nullptr;
                c = loss_components(out, ex, terms, cycle_mode, frozen);
                break;
            }
        }
        if (!sum) {
            sum = c;
        } else {
            sum->l_s = add(sum->l_s, c.l_s);
            sum->l_p = add(sum->l_p, c.l_p);
            sum->l_cyc_p = add(sum->l_cyc_p, c.l_cyc_p);
            sum->l_cyc_s = add(sum->l_cyc_s, c.l_cyc_s);
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    ComponentScalars mean;
    mean.l_s = scale(sum->l_s, inv);
    mean.l_p = scale(sum->l_p, inv);
    mean.l_cyc_p = scale(sum->l_cyc_p, inv);
    mean.l_cyc_s = scale(sum->l_cyc_s, inv);
    result.loss = compose_total(mean, lambdas);
    return result;
}

// ---------------------------------------------------------------------------
// gradient check
// ---------------------------------------------------------------------------

/// Worst relative disagreement between reverse-mode and central-difference
/// gradients of the batch objective. The oracle evaluates the objective with
/// the label-cycle targets frozen at their unperturbed values, which is the
/// function the stop-gradient objective actually differentiates.
inline double model_gradient_check(ModelParams& model, const std::vector<LossTargets>& batch,
                                   const Lambdas& lambdas, LossTerms terms,
                                   CycleLabelTarget cycle_mode, double step = 1e-4) {
    ParameterMap params = parameters(model);

    std::vector<Tensor> frozen;
    if (model.kind == ModelKind::cycle_transform) {
        NoGradGuard guard;
        frozen.reserve(batch.size());
        for (const LossTargets& ex : batch)
            frozen.push_back(act_forward(ex.x_o, model, model.geometry.future).a_f_p);
    }
    const std::vector<Tensor>* frozen_ptr = frozen.empty() ? nullptr : &frozen;

    GradientMap analytic =
        backward(batch_loss(model, batch, lambdas, terms, cycle_mode).loss.total);
    GradientMap numeric = finite_diff_grad(
        [&] {
            return batch_loss(model, batch, lambdas, terms, cycle_mode, frozen_ptr)
                .loss.breakdown.total;
        },
        params, step);
    return max_relative_error(analytic, numeric);
}

/// Self-contained check on a freshly initialized model and synthetic batch.
/// Instances near a relu kink are redrawn: central differences are only a
/// valid oracle at locally smooth points.
inline double gradient_check(ModelKind kind, const Geometry& geo, std::size_t heads,
                             std::size_t layers, std::uint64_t seed, std::size_t batch_size = 2,
                             double step = 1e-4) {
    Rng rng(seed);
    ModelParams model = make_model(kind, geo, heads, layers, rng);
    Lambdas lambdas;
    LossTerms terms = LossTerms::all();

    std::vector<LossTargets> batch;
    for (int attempt = 0; attempt < 64; ++attempt) {
        batch.clear();
        for (std::size_t b = 0; b < batch_size; ++b) {
            LossTargets ex;
            std::vector<double> xo(geo.observed * geo.d), xf(geo.future * geo.d);
            for (double& v : xo) v = rng.uniform(-1, 1);
            for (double& v : xf) v = rng.uniform(-1, 1);
            ex.x_o = Tensor::from({geo.observed, geo.d}, std::move(xo));
            ex.x_f = Tensor::from({geo.future, geo.d}, std::move(xf));
            ex.a_o = rng.uniform_index(geo.num_actions);
            ex.a_f = rng.uniform_index(geo.num_actions);
            batch.push_back(std::move(ex));
        }
        KinkScope scope;
        NoGradGuard guard;
        batch_loss(model, batch, lambdas, terms, CycleLabelTarget::soft);
        if (scope.min_margin() > 2e-3) break;
    }
    return model_gradient_check(model, batch, lambdas, terms, CycleLabelTarget::soft, step);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace detail {

inline double dataset_top1(const ModelParams& model, const Dataset& data) {
    if (data.examples.empty()) return 0.0;
    std::vector<unsigned char> hit(data.size(), 0);
    parallel_for(data.size(), [&](std::size_t i) {
        NoGradGuard guard;
        const AnticipationExample& ex = data.examples[i];
        std::size_t predicted = 0;
        switch (model.kind) {
            case ModelKind::semantic_experience:
                predicted = argmax_index(future_distribution(se_forward(ex.x_o, model)));
                break;
            case ModelKind::pattern_visualization:
                predicted = argmax_index(
                    future_distribution(pv_forward(ex.x_o, model, model.geometry.future)));
                break;
            case ModelKind::cycle_transform:
                predicted = argmax_index(
                    future_distribution(act_forward(ex.x_o, model, model.geometry.future)));
                break;
        }
        hit[i] = predicted == ex.a_f ? 1 : 0;
    });
    std::size_t correct = 0;
    for (unsigned char h : hit) correct += h;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline void check_geometry(const Geometry& a, const Geometry& b, const char* what) {
    if (a.d != b.d || a.num_actions != b.num_actions || a.observed != b.observed ||
        a.future != b.future || a.horizon != b.horizon)
        throw std::invalid_argument(std::string("train: ") + what +
                                    " geometry does not match the config");
}

}  // namespace detail

/// Default-on term set for a model kind (the cycle terms only exist on the
/// cycle model).
inline LossTerms default_terms(ModelKind kind) {
    LossTerms terms = LossTerms::all();
    if (kind == ModelKind::semantic_experience) {
        terms.mse_future = terms.ce_pattern = false;
        terms.cycle_feature = terms.cycle_semantic = false;
    } else if (kind == ModelKind::pattern_visualization) {
        terms.ce_observed = terms.ce_experience = false;
        terms.cycle_feature = terms.cycle_semantic = false;
    }
    return terms;
}

inline TrainResult train(const TrainConfig& config, const Dataset& train_set,
                         const Dataset& val_set, LossTerms terms) {
    config.validate();
    if (train_set.examples.empty()) throw std::invalid_argument("train: empty training set");
    detail::check_geometry(train_set.geometry, config.geometry, "training set");
    if (!val_set.examples.empty())
        detail::check_geometry(val_set.geometry, config.geometry, "validation set");

    Rng rng(config.seed);
    TrainResult result;
    result.model = make_model(config.model_kind, config.geometry, config.heads, config.layers, rng);
    ParameterMap params = parameters(result.model);
    AdamState adam;
    const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.adam_eps};

    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    if (config.grad_check) {
        // one random batch, redrawn while it sits near a relu kink
        const std::size_t probe = std::min<std::size_t>(2, n);
        std::vector<LossTargets> batch;
        for (int attempt = 0; attempt < 32; ++attempt) {
            batch.clear();
            for (std::size_t b = 0; b < probe; ++b)
                batch.push_back(targets_of(train_set.examples[rng.uniform_index(n)]));
            KinkScope scope;
            NoGradGuard guard;
            batch_loss(result.model, batch, config.lambdas, terms, config.cycle_label_target);
            if (scope.min_margin() > 2e-3) break;
        }
        const double err = model_gradient_check(result.model, batch, config.lambdas, terms,
                                                config.cycle_label_target);
        if (err > 1e-4)
            throw std::runtime_error("train: gradient check failed, max relative error " +
                                     std::to_string(err));
    }

    result.history.reserve(config.epochs);
    std::vector<LossTargets> batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates from the run seed
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = rng.uniform_index(i);
            std::swap(order[i - 1], order[j]);
        }
        double sum_l_s = 0.0, sum_l_p = 0.0, sum_cyc_p = 0.0, sum_cyc_s = 0.0;
        std::size_t train_hits = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i)
                batch.push_back(targets_of(train_set.examples[order[i]]));
            BatchResult step = batch_loss(result.model, batch, config.lambdas, terms,
                                          config.cycle_label_target);
            for (std::size_t i = start; i < stop; ++i)
                if (step.predicted[i - start] == train_set.examples[order[i]].a_f) ++train_hits;
            const double weight = static_cast<double>(stop - start);
            sum_l_s += step.loss.breakdown.l_s * weight;
            sum_l_p += step.loss.breakdown.l_p * weight;
            sum_cyc_p += step.loss.breakdown.l_cyc_p * weight;
            sum_cyc_s += step.loss.breakdown.l_cyc_s * weight;
            GradientMap grads = backward(step.loss.total);
            adam_step(params, grads, adam, hyper);
        }
        EpochStats stats;
        stats.loss.l_s = sum_l_s / static_cast<double>(n);
        stats.loss.l_p = sum_l_p / static_cast<double>(n);
        stats.loss.l_cyc_p = sum_cyc_p / static_cast<double>(n);
        stats.loss.l_cyc_s = sum_cyc_s / static_cast<double>(n);
        stats.loss.l_c = stats.loss.l_cyc_p + stats.loss.l_cyc_s;
        stats.loss.total = config.lambdas.semantic * stats.loss.l_s +
                           config.lambdas.pattern * stats.loss.l_p +
                           config.lambdas.cycle * stats.loss.l_c;
        stats.loss.lambdas = config.lambdas;
        stats.train_top1 = static_cast<double>(train_hits) / static_cast<double>(n);
        stats.val_top1 = detail::dataset_top1(result.model, val_set);
        result.history.push_back(stats);
    }
    return result;
}

inline TrainResult train(const TrainConfig& config, const Dataset& train_set,
                         const Dataset& val_set) {
    return train(config, train_set, val_set, default_terms(config.model_kind));
}

// ---------------------------------------------------------------------------
// config echo (canonical key = value form, used in checkpoints)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string to_config_text(const TrainConfig& c) {
    std::string out;
    auto line = [&](const char* key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    };
    line("model", to_string(c.model_kind));
    line("epochs", std::to_string(c.epochs));
    line("batch-size", std::to_string(c.batch_size));
    line("lr", detail::format_real(c.learning_rate));
    line("beta1", detail::format_real(c.beta1));
    line("beta2", detail::format_real(c.beta2));
    line("adam-eps", detail::format_real(c.adam_eps));
    line("lambda-s", detail::format_real(c.lambdas.semantic));
    line("lambda-p", detail::format_real(c.lambdas.pattern));
    line("lambda-c", detail::format_real(c.lambdas.cycle));
    line("seed", std::to_string(c.seed));
    line("cycle-label-target",
         c.cycle_label_target == CycleLabelTarget::soft ? "soft" : "hard");
    line("d", std::to_string(c.geometry.d));
    line("num-actions", std::to_string(c.geometry.num_actions));
    line("observed", std::to_string(c.geometry.observed));
    line("future", std::to_string(c.geometry.future));
    line("horizon", std::to_string(c.geometry.horizon));
    line("heads", std::to_string(c.heads));
    line("layers", std::to_string(c.layers));
    line("grad-check", c.grad_check ? "true" : "false");
    return out;
}

inline TrainConfig train_config_from_text(const std::string& text) {
    TrainConfig c;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string lineText = text.substr(pos, eol - pos);
        pos = eol + 1;
        const std::size_t hash = lineText.find('#');
        if (hash != std::string::npos) lineText.resize(hash);
        const std::size_t eq = lineText.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const std::size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const std::size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(lineText.substr(0, eq));
        const std::string value = trim(lineText.substr(eq + 1));
        if (key.empty()) continue;
        if (key == "model") c.model_kind = model_kind_from_string(value);
        else if (key == "epochs") c.epochs = std::stoull(value);
        else if (key == "batch-size") c.batch_size = std::stoull(value);
        else if (key == "lr") c.learning_rate = std::stod(value);
        else if (key == "beta1") c.beta1 = std::stod(value);
        else if (key == "beta2") c.beta2 = std::stod(value);
        else if (key == "adam-eps") c.adam_eps = std::stod(value);
        else if (key == "lambda-s") c.lambdas.semantic = std::stod(value);
        else if (key == "lambda-p") c.lambdas.pattern = std::stod(value);
        else if (key == "lambda-c") c.lambdas.cycle = std::stod(value);
        else if (key == "seed") c.seed = std::stoull(value);
        else if (key == "cycle-label-target")
            c.cycle_label_target = cycle_label_target_from_string(value);
        else if (key == "d") c.geometry.d = std::stoull(value);
        else if (key == "num-actions") c.geometry.num_actions = std::stoull(value);
        else if (key == "observed") c.geometry.observed = std::stoull(value);
        else if (key == "future") c.geometry.future = std::stoull(value);
        else if (key == "horizon") c.geometry.horizon = std::stoull(value);
        else if (key == "heads") c.heads = std::stoull(value);
        else if (key == "layers") c.layers = std::stoull(value);
        else if (key == "grad-check") c.grad_check = value == "true";
        else throw std::runtime_error("unknown config key '" + key + "'");
    }
    return c;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = "AACTCP1";

inline void checkpoint_save(ModelParams& model, const TrainConfig& config,
                            const std::string& path) {
    std::string out;
    out.append(kCheckpointMagic, 7);
    io::put_u32(out, 1);
    const std::string echo = to_config_text(config);
    io::put_u32(out, static_cast<std::uint32_t>(echo.size()));
    out += echo;
    ParameterMap params = parameters(model);
    io::put_u64(out, params.size());
    for (const auto& [name, tensor] : params) {
        io::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        io::put_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
        for (std::size_t extent : tensor.shape()) io::put_u64(out, extent);
        for (double v : tensor.data()) io::put_f64(out, v);
    }
    io::store_file(path, out, "checkpoint_save");
}

struct Checkpoint {
    ModelParams model;
    TrainConfig config;
};

inline Checkpoint checkpoint_load(const std::string& path) {
    const std::string buffer = io::load_file(path, "checkpoint_load");
    io::Reader r{&buffer, 0, "checkpoint_load"};
    if (r.bytes(7) != std::string(kCheckpointMagic, 7))
        throw std::runtime_error("checkpoint_load: " + path +
                                 " is not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw std::runtime_error("checkpoint_load: unsupported version " +
                                 std::to_string(version));
    const std::uint32_t echo_len = r.u32();
    Checkpoint cp;
    cp.config = train_config_from_text(r.bytes(echo_len));

    Rng rng(cp.config.seed);
    cp.model = make_model(cp.config.model_kind, cp.config.geometry, cp.config.heads,
                          cp.config.layers, rng);
    ParameterMap params = parameters(cp.model);

    const std::uint64_t count = r.u64();
    std::map<std::string, bool> filled;
    for (const auto& [name, tensor] : params) {
        (void)tensor;
        filled[name] = false;
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        r.context = "checkpoint_load: tensor record " + std::to_string(i);
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        r.context = "checkpoint_load: tensor " + name;
        const std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (std::uint32_t j = 0; j < rank; ++j) shape[j] = r.u64();
        auto it = params.find(name);
        if (it == params.end())
            throw std::runtime_error("checkpoint_load: unexpected tensor " + name);
        if (it->second.shape() != shape)
            throw std::runtime_error("checkpoint_load: tensor " + name + " has shape " +
                                     shape_str(shape) + ", model expects " +
                                     shape_str(it->second.shape()));
        auto& values = it->second.mutable_data();
        for (double& v : values) v = r.f64();
        filled[name] = true;
    }
    for (const auto& [name, was_filled] : filled)
        if (!was_filled)
            throw std::runtime_error("checkpoint_load: missing tensor " + name);
    if (r.pos != buffer.size())
        throw std::runtime_error("checkpoint_load: trailing bytes after the last tensor");
    return cp;
}

/// Load with a geometry contract: the checkpoint's architecture fields must
/// match the requested config.
inline Checkpoint checkpoint_load(const std::string& path, const TrainConfig& expected) {
    Checkpoint cp = checkpoint_load(path);
    const Geometry& have = cp.config.geometry;
    const Geometry& want = expected.geometry;
    auto fail = [&](const char* what, std::size_t h, std::size_t w) {
        throw std::runtime_error(std::string("checkpoint_load: ") + what + " mismatch: file has " +
                                 std::to_string(h) + ", requested " + std::to_string(w));
    };
    if (have.num_actions != want.num_actions)
        fail("action count", have.num_actions, want.num_actions);
    if (have.d != want.d) fail("feature dim", have.d, want.d);
    if (have.observed != want.observed) fail("observed length", have.observed, want.observed);
    if (have.future != want.future) fail("future length", have.future, want.future);
    if (cp.config.heads != expected.heads) fail("head count", cp.config.heads, expected.heads);
    if (cp.config.layers != expected.layers) fail("layer count", cp.config.layers, expected.layers);
    return cp;
}

}  // namespace aact
