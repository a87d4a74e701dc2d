#pragma once
// Metrics and experiment protocols.
//
// Two per-model protocols: `at_horizon` scores the pooled future-action
// prediction with Top-1/Top-5, `dense_future` scores per-frame labels of the
// future window with mean-over-classes accuracy. On top of those sit the
// suites: model comparison, cycle-space ablation, loss-term ablation, horizon
// sweep and data-fraction sweep, each training per-cell models from a shared
// seed list and emitting one report.
//
// Reports are rows of (protocol, model, param, metric, value, seed, n); rows
// are sorted before emission so concurrent evaluation stays deterministic.

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "aact/parallel.hpp"
#include "aact/synthetic.hpp"
#include "aact/training.hpp"

namespace aact {

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Fraction of examples whose target class sits among the k highest
/// probabilities. Ties rank the lower class index first.
inline double top_k_accuracy(const std::vector<std::vector<double>>& predictions,
                             const std::vector<std::size_t>& targets, std::size_t k) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("top_k_accuracy: " + std::to_string(predictions.size()) +
                                    " predictions vs " + std::to_string(targets.size()) +
                                    " targets");
    if (predictions.empty()) throw std::invalid_argument("top_k_accuracy: empty input");
    const std::size_t classes = predictions.front().size();
    if (k < 1 || k > classes)
        throw std::invalid_argument("top_k_accuracy: k " + std::to_string(k) +
                                    " out of range for " + std::to_string(classes) + " classes");
    std::size_t hits = 0;
    std::vector<std::size_t> rank(classes);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const std::vector<double>& p = predictions[i];
        if (p.size() != classes)
            throw std::invalid_argument("top_k_accuracy: ragged prediction row " +
                                        std::to_string(i));
        std::iota(rank.begin(), rank.end(), 0);
        std::stable_sort(rank.begin(), rank.end(),
                         [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
        for (std::size_t j = 0; j < k; ++j)
            if (rank[j] == targets[i]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

/// Per-class frame accuracy averaged over the classes that appear in the
/// targets; classes never observed contribute nothing.
inline double moc_accuracy(const std::vector<std::size_t>& predicted,
                           const std::vector<std::size_t>& targets, std::size_t num_classes) {
    if (predicted.size() != targets.size())
        throw std::invalid_argument("moc_accuracy: " + std::to_string(predicted.size()) +
                                    " predictions vs " + std::to_string(targets.size()) +
                                    " targets");
    if (predicted.empty()) throw std::invalid_argument("moc_accuracy: empty input");
    std::vector<std::size_t> total(num_classes, 0), correct(num_classes, 0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] >= num_classes)
            throw std::invalid_argument("moc_accuracy: target class " +
                                        std::to_string(targets[i]) + " out of range");
        ++total[targets[i]];
        if (predicted[i] == targets[i]) ++correct[targets[i]];
    }
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (total[c] == 0) continue;
        sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
        ++present;
    }
    return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string protocol;
    std::string model;
    double param = 0.0;  // horizon k, data fraction, etc.
    std::string metric;
    double value = 0.0;
    std::uint64_t seed = 0;
    std::size_t n = 0;

    bool operator<(const EvalRow& o) const {
        auto key = [](const EvalRow& r) {
            return std::tie(r.protocol, r.model, r.param, r.metric, r.seed);
        };
        return key(*this) < key(o);
    }
};

struct EvalReport {
    std::vector<EvalRow> rows;

    void append(EvalRow row) { rows.push_back(std::move(row)); }
    void sort() { std::stable_sort(rows.begin(), rows.end()); }

    /// Mean of a metric across seeds for one cell.
    double seed_mean(const std::string& protocol, const std::string& model, double param,
                     const std::string& metric) const {
        double sum = 0.0;
        std::size_t count = 0;
        for (const EvalRow& row : rows)
            if (row.protocol == protocol && row.model == model && row.param == param &&
                row.metric == metric) {
                sum += row.value;
                ++count;
            }
        if (count == 0)
            throw std::invalid_argument("seed_mean: no rows for " + protocol + "/" + model + "/" +
                                        metric + " at param " + std::to_string(param));
        return sum / static_cast<double>(count);
    }

    std::string to_csv() const {
        std::string out = "protocol,model,param,metric,value,seed,n\n";
        char buf[64];
        for (const EvalRow& row : rows) {
            out += row.protocol;
            out += ',';
            out += row.model;
            out += ',';
            std::snprintf(buf, sizeof buf, "%.17g", row.param);
            out += buf;
            out += ',';
            out += row.metric;
            out += ',';
            std::snprintf(buf, sizeof buf, "%.17g", row.value);
            out += buf;
            out += ',';
            out += std::to_string(row.seed);
            out += ',';
            out += std::to_string(row.n);
            out += '\n';
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// evaluation of a trained model
// ---------------------------------------------------------------------------

enum class Protocol { at_horizon, dense_future };

inline Protocol protocol_from_string(const std::string& s) {
    if (s == "at_horizon") return Protocol::at_horizon;
    if (s == "dense_future") return Protocol::dense_future;
    throw std::invalid_argument("unknown protocol '" + s +
                                "' (expected at_horizon or dense_future)");
}

namespace detail {

inline void check_eval_geometry(const ModelParams& model, const Dataset& data) {
    const Geometry& a = model.geometry;
    const Geometry& b = data.geometry;
    if (a.d != b.d || a.num_actions != b.num_actions || a.observed != b.observed ||
        a.future != b.future)
        throw std::invalid_argument("evaluate: model geometry does not match the dataset");
}

/// Pooled future-action distribution per example, fanned out over workers.
inline std::vector<std::vector<double>> future_predictions(const ModelParams& model,
                                                           const Dataset& data) {
    std::vector<std::vector<double>> preds(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        NoGradGuard guard;
        const Tensor& x_o = data.examples[i].x_o;
        switch (model.kind) {
            case ModelKind::semantic_experience:
                preds[i] = future_distribution(se_forward(x_o, model)).data();
                break;
            case ModelKind::pattern_visualization:
                preds[i] = future_distribution(pv_forward(x_o, model, model.geometry.future)).data();
                break;
            case ModelKind::cycle_transform:
                preds[i] = future_distribution(act_forward(x_o, model, model.geometry.future)).data();
                break;
        }
    });
    return preds;
}

/// Per-frame labels for the future window. The pattern models classify their
/// synthesized frames densely; the experience model has no future frames and
/// repeats its pooled anticipation for every frame.
inline std::vector<std::size_t> dense_future_predictions(const ModelParams& model,
                                                         const Dataset& data) {
    const std::size_t n_future = data.geometry.future;
    std::vector<std::size_t> preds(data.size() * n_future);
    parallel_for(data.size(), [&](std::size_t i) {
        NoGradGuard guard;
        const Tensor& x_o = data.examples[i].x_o;
        if (model.kind == ModelKind::semantic_experience) {
            const std::size_t label =
                argmax_index(future_distribution(se_forward(x_o, model)));
            for (std::size_t f = 0; f < n_future; ++f) preds[i * n_future + f] = label;
            return;
        }
        Tensor frames, dists;
        if (model.kind == ModelKind::pattern_visualization) {
            PvOutputs out = pv_forward(x_o, model, n_future);
            dists = classify(out.x_f_hat, *model.v, ClassifyMode::dense);
        } else {
            ActOutputs out = act_forward(x_o, model, n_future);
            dists = classify(out.x_f_hat, *model.v_a, ClassifyMode::dense);
        }
        const std::size_t classes = dists.cols();
        for (std::size_t f = 0; f < n_future; ++f) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c)
                if (dists.at(f * classes + c) > dists.at(f * classes + best)) best = c;
            preds[i * n_future + f] = best;
        }
    });
    return preds;
}

}  // namespace detail

/// Scores one trained model under one protocol and appends rows stamped with
/// seed and sample count. Model parameters are read-only throughout.
inline void evaluate(const ModelParams& model, const Dataset& data, Protocol protocol,
                     EvalReport& report, std::uint64_t seed, const std::string& model_label,
                     const std::string& protocol_label) {
    if (data.examples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    detail::check_eval_geometry(model, data);
    const double param = static_cast<double>(data.geometry.horizon);
    if (protocol == Protocol::at_horizon) {
        std::vector<std::vector<double>> preds = detail::future_predictions(model, data);
        std::vector<std::size_t> targets(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) targets[i] = data.examples[i].a_f;
        const std::size_t top5 = std::min<std::size_t>(5, data.geometry.num_actions);
        report.append({protocol_label, model_label, param, "top1",
                       top_k_accuracy(preds, targets, 1), seed, data.size()});
        report.append({protocol_label, model_label, param, "top5",
                       top_k_accuracy(preds, targets, top5), seed, data.size()});
        return;
    }
    std::vector<std::size_t> preds = detail::dense_future_predictions(model, data);
    std::vector<std::size_t> targets;
    targets.reserve(preds.size());
    for (const AnticipationExample& ex : data.examples)
        for (std::uint32_t label : ex.future_labels) targets.push_back(label);
    report.append({protocol_label, model_label, param, "moc",
                   moc_accuracy(preds, targets, data.geometry.num_actions), seed,
                   data.size()});
}

inline EvalReport evaluate(const ModelParams& model, const Dataset& data, Protocol protocol,
                           std::uint64_t seed = 0) {
    EvalReport report;
    evaluate(model, data, protocol, report, seed, to_string(model.kind),
             protocol == Protocol::at_horizon ? "at_horizon" : "dense_future");
    report.sort();
    return report;
}

// ---------------------------------------------------------------------------
// suites
// ---------------------------------------------------------------------------

enum class Suite { model_comparison, cycle_ablation, loss_ablation, horizon_sweep, data_fraction };

inline Suite suite_from_string(const std::string& s) {
    if (s == "model_comparison" || s == "model") return Suite::model_comparison;
    if (s == "cycle_ablation" || s == "cycle") return Suite::cycle_ablation;
    if (s == "loss_ablation" || s == "loss") return Suite::loss_ablation;
    if (s == "horizon_sweep" || s == "horizon") return Suite::horizon_sweep;
    if (s == "data_fraction" || s == "data") return Suite::data_fraction;
    throw std::invalid_argument("unknown suite '" + s + "'");
}

inline const char* to_string(Suite suite) {
    switch (suite) {
        case Suite::model_comparison: return "model_comparison";
        case Suite::cycle_ablation: return "cycle_ablation";
        case Suite::loss_ablation: return "loss_ablation";
        case Suite::horizon_sweep: return "horizon_sweep";
        case Suite::data_fraction: return "data_fraction";
    }
    return "?";
}

struct SuiteConfig {
    Suite suite = Suite::model_comparison;
    TrainConfig train;           // per-cell training configuration
    DataConfig data;             // grammar + train split source
    std::size_t n_test = 500;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<std::size_t> horizons = {0, 2, 4, 6, 8};
    std::vector<double> fractions = {0.10, 0.20, 0.30, 0.50};
};

namespace detail {

/// Test split: same grammar, disjoint video stream.
inline DataConfig test_split(const DataConfig& base, std::size_t n_test) {
    DataConfig test = base;
    test.n_examples = n_test;
    test.seed = base.seed ^ 0x9E3779B97F4A7C15ULL;
    return test;
}

/// Stratified subsample: per future-action class, proportional to the class
/// share, at least one example per present class. Selection is seeded.
inline Dataset stratified_fraction(const Dataset& full, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("stratified_fraction: fraction " +
                                    std::to_string(fraction) + " out of (0, 1]");
    std::map<std::uint32_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < full.size(); ++i) by_class[full.examples[i].a_f].push_back(i);
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& [cls, members] : by_class) {
        (void)cls;
        std::size_t want = static_cast<std::size_t>(
            fraction * static_cast<double>(members.size()) + 0.5);
        if (want == 0) want = 1;
        if (want > members.size())
            throw std::invalid_argument("stratified_fraction: class too small to sample");
        // seeded partial Fisher-Yates
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + rng.uniform_index(members.size() - i);
            std::swap(members[i], members[j]);
            chosen.push_back(members[i]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.geometry = full.geometry;
    out.examples.reserve(chosen.size());
    for (std::size_t idx : chosen) out.examples.push_back(full.examples[idx]);
    return out;
}

struct Cell {
    std::string label;
    ModelKind kind;
    LossTerms terms;
};

}  // namespace detail

/// Runs one suite: per cell and per seed, generate the splits, train, score,
/// and collect rows. Cells differ in model kind (comparison, sweeps) or in
/// the active loss terms (ablations).
inline EvalReport run_suite(const SuiteConfig& cfg) {
    EvalReport report;

    auto run_cell = [&](const std::string& label, ModelKind kind, const LossTerms& terms,
                        const Geometry& geometry, const DataConfig& data_cfg,
                        std::uint64_t seed, double param, bool dense) {
        TrainConfig train_cfg = cfg.train;
        train_cfg.model_kind = kind;
        train_cfg.geometry = geometry;
        train_cfg.seed = seed;
        DataConfig train_data = data_cfg;
        train_data.seed = data_cfg.seed ^ (seed * 0xA24BAED4963EE407ULL);
        Dataset train_set = generate_dataset(geometry, train_data);
        Dataset test_set =
            generate_dataset(geometry, detail::test_split(train_data, cfg.n_test));
        TrainResult result = train(train_cfg, train_set, Dataset{}, terms);

        EvalReport local;
        evaluate(result.model, test_set, Protocol::at_horizon, local, seed, label,
                 cfg.suite == Suite::model_comparison ? "at_horizon" : to_string(cfg.suite));
        if (dense)
            evaluate(result.model, test_set, Protocol::dense_future, local, seed, label,
                     "dense_future");
        for (EvalRow& row : local.rows) {
            if (cfg.suite == Suite::data_fraction) row.param = param;
            report.append(std::move(row));
        }
    };

    switch (cfg.suite) {
        case Suite::model_comparison: {
            for (ModelKind kind : {ModelKind::semantic_experience,
                                   ModelKind::pattern_visualization, ModelKind::cycle_transform})
                for (std::uint64_t seed : cfg.seeds)
                    run_cell(to_string(kind), kind, default_terms(kind), cfg.train.geometry,
                             cfg.data, seed, 0.0, true);
            break;
        }
        case Suite::cycle_ablation: {
            const std::vector<detail::Cell> cells = [] {
                LossTerms semantic = LossTerms::all();
                semantic.cycle_feature = false;
                LossTerms feature = LossTerms::all();
                feature.cycle_semantic = false;
                return std::vector<detail::Cell>{
                    {"semantic", ModelKind::cycle_transform, semantic},
                    {"feature", ModelKind::cycle_transform, feature},
                    {"both", ModelKind::cycle_transform, LossTerms::all()},
                };
            }();
            for (const detail::Cell& cell : cells)
                for (std::uint64_t seed : cfg.seeds)
                    run_cell(cell.label, cell.kind, cell.terms, cfg.train.geometry, cfg.data,
                             seed, 0.0, false);
            break;
        }
        case Suite::loss_ablation: {
            // row 1: feature cycle + pattern anticipation loss
            LossTerms row1 = LossTerms::none();
            row1.cycle_feature = row1.ce_pattern = true;
            // row 2: + recognition loss on the reconstructed frames
            LossTerms row2 = row1;
            row2.ce_observed = true;
            // row 3: the full objective
            const std::vector<detail::Cell> cells = {
                {"cyc_p+ce_f", ModelKind::cycle_transform, row1},
                {"cyc_p+ce_f+ce_o", ModelKind::cycle_transform, row2},
                {"full", ModelKind::cycle_transform, LossTerms::all()},
            };
            for (const detail::Cell& cell : cells)
                for (std::uint64_t seed : cfg.seeds)
                    run_cell(cell.label, cell.kind, cell.terms, cfg.train.geometry, cfg.data,
                             seed, 0.0, false);
            break;
        }
        case Suite::horizon_sweep: {
            for (std::size_t k : cfg.horizons) {
                Geometry geometry = cfg.train.geometry;
                geometry.horizon = k;
                for (ModelKind kind :
                     {ModelKind::semantic_experience, ModelKind::pattern_visualization,
                      ModelKind::cycle_transform})
                    for (std::uint64_t seed : cfg.seeds)
                        run_cell(to_string(kind), kind, default_terms(kind), geometry, cfg.data,
                                 seed, static_cast<double>(k), false);
            }
            break;
        }
        case Suite::data_fraction: {
            // with and without the cycle terms, as in the source table
            LossTerms no_cycle = LossTerms::all();
            no_cycle.cycle_feature = no_cycle.cycle_semantic = false;
            const std::vector<detail::Cell> cells = {
                {"act", ModelKind::cycle_transform, LossTerms::all()},
                {"act_nocycle", ModelKind::cycle_transform, no_cycle},
            };
            for (const detail::Cell& cell : cells)
                for (double fraction : cfg.fractions)
                    for (std::uint64_t seed : cfg.seeds) {
                        // train on a stratified subset of the full split
                        TrainConfig train_cfg = cfg.train;
                        train_cfg.model_kind = cell.kind;
                        train_cfg.seed = seed;
                        DataConfig train_data = cfg.data;
                        train_data.seed = cfg.data.seed ^ (seed * 0xA24BAED4963EE407ULL);
                        Dataset full = generate_dataset(train_cfg.geometry, train_data);
                        Dataset part = detail::stratified_fraction(full, fraction, seed);
                        Dataset test_set = generate_dataset(
                            train_cfg.geometry, detail::test_split(train_data, cfg.n_test));
                        TrainResult result = train(train_cfg, part, Dataset{}, cell.terms);
                        EvalReport local;
                        evaluate(result.model, test_set, Protocol::at_horizon, local, seed,
                                 cell.label, "data_fraction");
                        for (EvalRow& row : local.rows) {
                            row.param = fraction;
                            report.append(std::move(row));
                        }
                    }
            break;
        }
    }
    report.sort();
    return report;
}

/// Plot-data companion for sweep reports: one `series,x,y` line per
/// (model, metric) at each parameter value, y the seed mean.
inline std::string plot_data(const EvalReport& report) {
    std::set<std::string> series;
    std::set<double> params;
    for (const EvalRow& row : report.rows) {
        series.insert(row.model + "/" + row.metric);
        params.insert(row.param);
    }
    std::string out = "series,x,y\n";
    char buf[64];
    for (const std::string& s : series) {
        const std::string model = s.substr(0, s.find('/'));
        const std::string metric = s.substr(s.find('/') + 1);
        for (double param : params) {
            double sum = 0.0;
            std::size_t count = 0;
            for (const EvalRow& row : report.rows)
                if (row.model == model && row.metric == metric && row.param == param) {
                    sum += row.value;
                    ++count;
                }
            if (count == 0) continue;
            out += s;
            out += ',';
            std::snprintf(buf, sizeof buf, "%.17g", param);
            out += buf;
            out += ',';
            std::snprintf(buf, sizeof buf, "%.17g", sum / static_cast<double>(count));
            out += buf;
            out += '\n';
        }
    }
    return out;
}

}  // namespace aact
