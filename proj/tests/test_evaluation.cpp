#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "aact/evaluation.hpp"

using namespace aact;

TEST_CASE("top-k accuracy closed forms") {
    std::vector<std::vector<double>> onehot = {{0, 1, 0}, {0, 0, 1}};
    std::vector<std::size_t> targets = {1, 2};
    REQUIRE(top_k_accuracy(onehot, targets, 1) == 1.0);
    // k = A is always perfect
    REQUIRE(top_k_accuracy(onehot, {0, 0}, 3) == 1.0);
    REQUIRE_THROWS_AS(top_k_accuracy(onehot, targets, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(top_k_accuracy(onehot, targets, 0), std::invalid_argument);
}

TEST_CASE("uniform predictions rank low class indices first") {
    std::vector<std::vector<double>> uniform(6, std::vector<double>(4, 0.25));
    std::vector<std::size_t> targets = {0, 1, 2, 3, 1, 3};
    // top-2 of a uniform row is {0, 1}: exactly the targets below 2 count
    REQUIRE(top_k_accuracy(uniform, targets, 2) == Catch::Approx(3.0 / 6.0));
    REQUIRE(top_k_accuracy(uniform, targets, 1) == Catch::Approx(1.0 / 6.0));
}

TEST_CASE("top1 is never above top5") {
    Rng rng(3);
    std::vector<std::vector<double>> preds;
    std::vector<std::size_t> targets;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> row(8);
        double sum = 0.0;
        for (double& v : row) {
            v = rng.uniform(0, 1);
            sum += v;
        }
        for (double& v : row) v /= sum;
        preds.push_back(row);
        targets.push_back(rng.uniform_index(8));
    }
    REQUIRE(top_k_accuracy(preds, targets, 1) <= top_k_accuracy(preds, targets, 5));
}

TEST_CASE("mean-over-classes conventions") {
    // all frames correct
    REQUIRE(moc_accuracy({1, 2, 1}, {1, 2, 1}, 4) == 1.0);
    // one class fully right, one fully wrong
    REQUIRE(moc_accuracy({0, 0, 1, 1}, {0, 0, 2, 2}, 4) == 0.5);
    // absent classes do not dilute the mean
    REQUIRE(moc_accuracy({0, 0}, {0, 0}, 10) == 1.0);
    REQUIRE_THROWS_AS(moc_accuracy({}, {}, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(moc_accuracy({0}, {0, 1}, 4), std::invalid_argument);
}

namespace {

std::size_t param_hash(ModelParams& model) {
    std::size_t h = 1469598103934665603ull;
    visit_params(model, [&](Tensor& t) {
        for (double v : t.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            h = (h ^ bits) * 1099511628211ull;
        }
    });
    return h;
}

struct SmallWorld {
    Geometry geo{.d = 8, .num_actions = 4, .observed = 4, .future = 2, .horizon = 1};
    Dataset train_set, test_set;
    SmallWorld() {
        DataConfig data;
        data.num_activities = 2;
        data.n_examples = 60;
        data.video_len = 24;
        data.noise_sigma = 0.2;
        data.grammar_seed = 5;
        data.seed = 5;
        train_set = generate_dataset(geo, data);
        data.seed = 6;
        data.n_examples = 30;
        test_set = generate_dataset(geo, data);
    }
};

}  // namespace

TEST_CASE("evaluate emits top1/top5 rows and leaves parameters untouched") {
    SmallWorld world;
    Rng rng(9);
    ModelParams model = make_model(ModelKind::cycle_transform, world.geo, 2, 1, rng);

    const std::size_t before = param_hash(model);
    EvalReport report = evaluate(model, world.test_set, Protocol::at_horizon, 42);
    REQUIRE(param_hash(model) == before);

    REQUIRE(report.rows.size() == 2);
    for (const EvalRow& row : report.rows) {
        REQUIRE(row.protocol == "at_horizon");
        REQUIRE(row.model == "act");
        REQUIRE(row.param == 1.0);
        REQUIRE(row.seed == 42);
        REQUIRE(row.n == world.test_set.size());
        REQUIRE(row.value >= 0.0);
        REQUIRE(row.value <= 1.0);
    }
    REQUIRE(report.seed_mean("at_horizon", "act", 1.0, "top1") <=
            report.seed_mean("at_horizon", "act", 1.0, "top5"));

    // report top1 equals the metric recomputed from raw predictions
    std::vector<std::vector<double>> preds;
    std::vector<std::size_t> targets;
    for (const auto& ex : world.test_set.examples) {
        NoGradGuard guard;
        preds.push_back(future_distribution(act_forward(ex.x_o, model, world.geo.future)).data());
        targets.push_back(ex.a_f);
    }
    REQUIRE(report.seed_mean("at_horizon", "act", 1.0, "top1") ==
            top_k_accuracy(preds, targets, 1));

    REQUIRE_THROWS_AS(evaluate(model, Dataset{}, Protocol::at_horizon, 0),
                      std::invalid_argument);
}

TEST_CASE("dense protocol scores per-frame labels for all kinds") {
    SmallWorld world;
    Rng rng(10);
    for (ModelKind kind : {ModelKind::semantic_experience, ModelKind::pattern_visualization,
                           ModelKind::cycle_transform}) {
        ModelParams model = make_model(kind, world.geo, 2, 1, rng);
        EvalReport report = evaluate(model, world.test_set, Protocol::dense_future, 7);
        REQUIRE(report.rows.size() == 1);
        REQUIRE(report.rows[0].metric == "moc");
        REQUIRE(report.rows[0].value >= 0.0);
        REQUIRE(report.rows[0].value <= 1.0);
    }
}

TEST_CASE("evaluate rejects geometry mismatches") {
    SmallWorld world;
    Rng rng(11);
    Geometry other = world.geo;
    other.d = 16;
    ModelParams model = make_model(ModelKind::cycle_transform, other, 2, 1, rng);
    REQUIRE_THROWS_AS(evaluate(model, world.test_set, Protocol::at_horizon, 0),
                      std::invalid_argument);
}

TEST_CASE("stratified fractions sample proportionally per class") {
    SmallWorld world;
    Dataset part = detail::stratified_fraction(world.train_set, 0.5, 3);
    REQUIRE(part.size() >= world.train_set.size() / 2 - 4);
    REQUIRE(part.size() <= world.train_set.size() / 2 + 4);

    std::map<std::uint32_t, std::size_t> full_count, part_count;
    for (const auto& ex : world.train_set.examples) full_count[ex.a_f]++;
    for (const auto& ex : part.examples) part_count[ex.a_f]++;
    for (auto& [cls, n] : part_count) {
        REQUIRE(n >= 1);
        // proportional within rounding
        const double expect = 0.5 * static_cast<double>(full_count[cls]);
        REQUIRE(std::abs(static_cast<double>(n) - expect) <= 1.0);
    }
    REQUIRE_THROWS_AS(detail::stratified_fraction(world.train_set, 0.0, 3),
                      std::invalid_argument);
}

TEST_CASE("csv and plot data render sorted rows") {
    EvalReport report;
    report.append({"at_horizon", "pv", 4.0, "top1", 0.5, 2, 100});
    report.append({"at_horizon", "act", 4.0, "top1", 0.625, 1, 100});
    report.append({"at_horizon", "act", 4.0, "top1", 0.375, 2, 100});
    report.sort();
    const std::string csv = report.to_csv();
    REQUIRE(csv.rfind("protocol,model,param,metric,value,seed,n\n", 0) == 0);
    // act rows sort before pv, seed 1 before seed 2
    REQUIRE(csv.find("act,4,top1,0.625,1") < csv.find("act,4,top1,0.375,2"));
    REQUIRE(csv.find("act,") < csv.find("pv,"));

    const std::string plot = plot_data(report);
    REQUIRE(plot.find("act/top1,4,0.5\n") != std::string::npos);
    REQUIRE(plot.find("pv/top1,4,0.5\n") != std::string::npos);
}

TEST_CASE("suites emit the expected row structure") {
    // deliberately tiny budgets: structure is under test, not accuracy
    SuiteConfig cfg;
    cfg.train.geometry = Geometry{.d = 8, .num_actions = 4, .observed = 4, .future = 2,
                                  .horizon = 1};
    cfg.train.heads = 2;
    cfg.train.layers = 1;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 16;
    cfg.data.num_activities = 2;
    cfg.data.n_examples = 24;
    cfg.data.video_len = 24;
    cfg.data.noise_sigma = 0.2;
    cfg.data.grammar_seed = 77;
    cfg.data.seed = 77;
    cfg.n_test = 12;
    cfg.seeds = {1, 2};

    SECTION("cycle ablation rows are semantic, feature, both") {
        cfg.suite = Suite::cycle_ablation;
        EvalReport report = run_suite(cfg);
        std::set<std::string> models;
        for (const EvalRow& row : report.rows) models.insert(row.model);
        REQUIRE(models == std::set<std::string>{"both", "feature", "semantic"});
        // 3 cells x 2 seeds x 2 metrics
        REQUIRE(report.rows.size() == 12);
    }

    SECTION("loss ablation emits three rows") {
        cfg.suite = Suite::loss_ablation;
        EvalReport report = run_suite(cfg);
        std::set<std::string> models;
        for (const EvalRow& row : report.rows) models.insert(row.model);
        REQUIRE(models.size() == 3);
        REQUIRE(models.count("full") == 1);
    }

    SECTION("horizon sweep emits one row set per k per model") {
        cfg.suite = Suite::horizon_sweep;
        cfg.horizons = {0, 2};
        EvalReport report = run_suite(cfg);
        // 2 horizons x 3 models x 2 seeds x 2 metrics
        REQUIRE(report.rows.size() == 24);
        std::set<double> params;
        for (const EvalRow& row : report.rows) params.insert(row.param);
        REQUIRE(params == std::set<double>{0.0, 2.0});
    }

    SECTION("model comparison fills three models and dense rows") {
        cfg.suite = Suite::model_comparison;
        EvalReport report = run_suite(cfg);
        std::set<std::string> models;
        std::set<std::string> protocols;
        for (const EvalRow& row : report.rows) {
            models.insert(row.model);
            protocols.insert(row.protocol);
        }
        REQUIRE(models == std::set<std::string>{"act", "pv", "se"});
        REQUIRE(protocols == std::set<std::string>{"at_horizon", "dense_future"});
        // 3 models x 2 seeds x (2 at_horizon + 1 moc)
        REQUIRE(report.rows.size() == 18);
    }

    SECTION("data fraction emits act and act_nocycle per fraction") {
        cfg.suite = Suite::data_fraction;
        cfg.fractions = {0.5};
        EvalReport report = run_suite(cfg);
        std::set<std::string> models;
        for (const EvalRow& row : report.rows) {
            models.insert(row.model);
            REQUIRE(row.param == 0.5);
            REQUIRE(row.protocol == "data_fraction");
        }
        REQUIRE(models == std::set<std::string>{"act", "act_nocycle"});
        REQUIRE(report.rows.size() == 8);
    }

    SECTION("suite reports are reproducible") {
        cfg.suite = Suite::cycle_ablation;
        EvalReport a = run_suite(cfg);
        EvalReport b = run_suite(cfg);
        REQUIRE(a.to_csv() == b.to_csv());
    }
}
