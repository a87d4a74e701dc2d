#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aact/models.hpp"

using namespace aact;

namespace {

Tensor rand_frames(std::size_t rows, std::size_t d, Rng& rng) {
    std::vector<double> v(rows * d);
    for (double& x : v) x = rng.uniform(-1, 1);
    return Tensor::from({rows, d}, std::move(v));
}

void require_distribution(const Tensor& dist, double tol = 1e-9) {
    double sum = 0.0;
    for (std::size_t i = 0; i < dist.numel(); ++i) {
        REQUIRE(dist.at(i) >= 0.0);
        sum += dist.at(i);
    }
    REQUIRE(std::abs(sum - 1.0) < tol);
}

std::vector<double> norm_chain(std::vector<double> row, int passes, double eps = 1e-5) {
    for (int p = 0; p < passes; ++p) {
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(row.size());
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(row.size());
        const double inv = 1.0 / std::sqrt(var + eps);
        for (double& v : row) v = (v - mean) * inv;
    }
    return row;
}

}  // namespace

TEST_CASE("dense classify emits one distribution per frame") {
    Rng rng(1);
    ClassifierParams mlp = make_classifier("v", 6, 4, rng);
    Tensor frames = rand_frames(3, 6, rng);
    Tensor dists = classify(frames, mlp, ClassifyMode::dense);
    REQUIRE(dists.shape() == Shape{3, 4});
    for (std::size_t r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            REQUIRE(dists.at(r * 4 + c) >= 0.0);
            sum += dists.at(r * 4 + c);
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("zero weights with a dominant bias force the argmax") {
    Rng rng(2);
    ClassifierParams mlp = make_classifier("v", 5, 4, rng);
    for (Tensor w : {mlp.w1, mlp.w2})
        for (double& v : w.mutable_data()) v = 0.0;
    mlp.b2.mutable_data() = {0.0, 0.0, 10.0, 0.0};
    for (int trial = 0; trial < 5; ++trial) {
        Tensor dist = classify(rand_frames(4, 5, rng), mlp);
        std::size_t argmax = 0;
        for (std::size_t i = 1; i < 4; ++i)
            if (dist.at(i) > dist.at(argmax)) argmax = i;
        REQUIRE(argmax == 2);
    }
}

TEST_CASE("pooled classify of identical rows equals the single-row result") {
    Rng rng(3);
    ClassifierParams mlp = make_classifier("v", 6, 4, rng);
    std::vector<double> row(6);
    for (double& v : row) v = rng.uniform(-1, 1);
    std::vector<double> tiled;
    for (int r = 0; r < 5; ++r) tiled.insert(tiled.end(), row.begin(), row.end());
    Tensor one = classify(Tensor::from({1, 6}, row), mlp);
    Tensor many = classify(Tensor::from({5, 6}, tiled), mlp);
    for (std::size_t i = 0; i < 4; ++i)
        REQUIRE(many.at(i) == Catch::Approx(one.at(i)).margin(1e-12));
}

TEST_CASE("classify rejects an empty sequence") {
    Rng rng(4);
    ClassifierParams mlp = make_classifier("v", 6, 4, rng);
    REQUIRE_THROWS_AS(classify(Tensor::zeros({0, 6}), mlp), std::invalid_argument);
}

TEST_CASE("experience output is a distribution; zero net is uniform") {
    Rng rng(5);
    ExperienceParams e = make_experience("e", 6, rng);
    std::vector<double> dist(6, 0.0);
    dist[2] = 1.0;
    Tensor out = experience_anticipate(Tensor::from({6}, dist), e);
    require_distribution(out, 1e-12);

    for (Tensor t : {e.w1, e.b1, e.w2, e.b2})
        for (double& v : t.mutable_data()) v = 0.0;
    Tensor uniform = experience_anticipate(Tensor::from({6}, dist), e);
    for (std::size_t i = 0; i < 6; ++i)
        REQUIRE(uniform.at(i) == Catch::Approx(1.0 / 6.0).margin(1e-12));

    REQUIRE_THROWS_AS(experience_anticipate(Tensor::zeros({5}), e), std::invalid_argument);
}

TEST_CASE("experience gradient w.r.t. its input matches finite differences") {
    Rng rng(6);
    ExperienceParams e = make_experience("e", 5, rng);
    ParameterMap params;
    params.emplace("in", Tensor::param("in", {5}, {0.3, 0.1, 0.25, 0.2, 0.15}));

    auto forward = [&]() -> Tensor {
        return cross_entropy(experience_anticipate(params.at("in"), e), std::size_t{3});
    };
    GradientMap analytic = backward(forward());
    GradientMap numeric = finite_diff_grad([&] { return forward().item(); }, params, 1e-4);
    REQUIRE(max_relative_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("se_forward produces two distributions and composes piecewise") {
    Rng rng(7);
    Geometry geo{.d = 8, .num_actions = 5, .observed = 4, .future = 3, .horizon = 2};
    ModelParams model = make_model(ModelKind::semantic_experience, geo, 2, 2, rng);
    Tensor x_o = rand_frames(4, 8, rng);

    SeOutputs out = se_forward(x_o, model);
    require_distribution(out.a_o_hat);
    require_distribution(out.a_f_s);

    // piecewise recomputation agrees bitwise
    Tensor encoded = encoder_forward(x_o, *model.g_o, 4);
    Tensor a_o = classify(encoded, *model.head);
    Tensor a_f = experience_anticipate(a_o, *model.experience);
    for (std::size_t i = 0; i < 5; ++i) {
        REQUIRE(out.a_o_hat.at(i) == a_o.at(i));
        REQUIRE(out.a_f_s.at(i) == a_f.at(i));
    }

    SeOutputs again = se_forward(x_o, model);
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(out.a_f_s.at(i) == again.a_f_s.at(i));

    REQUIRE_THROWS_AS(se_forward(rand_frames(3, 8, rng), model), std::invalid_argument);
    REQUIRE_THROWS_AS(pv_forward(x_o, model, 3), std::invalid_argument);
}

TEST_CASE("pv_forward shapes and piecewise agreement") {
    Rng rng(8);
    Geometry geo{.d = 8, .num_actions = 5, .observed = 4, .future = 3, .horizon = 2};
    ModelParams model = make_model(ModelKind::pattern_visualization, geo, 2, 2, rng);
    Tensor x_o = rand_frames(4, 8, rng);

    PvOutputs out = pv_forward(x_o, model, 3);
    REQUIRE(out.x_f_hat.shape() == Shape{3, 8});
    require_distribution(out.a_f_p);

    Tensor recls = classify(out.x_f_hat.detached(), *model.v);
    for (std::size_t i = 0; i < 5; ++i)
        REQUIRE(out.a_f_p.at(i) == Catch::Approx(recls.at(i)).margin(1e-15));
}

TEST_CASE("act_forward shapes and piecewise agreement") {
    Rng rng(9);
    Geometry geo{.d = 8, .num_actions = 4, .observed = 6, .future = 4, .horizon = 1};
    ModelParams model = make_model(ModelKind::cycle_transform, geo, 2, 2, rng);
    Tensor x_o = rand_frames(6, 8, rng);

    ActOutputs out = act_forward(x_o, model, 4);
    REQUIRE(out.x_f_hat.shape() == Shape{4, 8});
    REQUIRE(out.x_o_hat.shape() == Shape{6, 8});
    require_distribution(out.a_f_p);
    require_distribution(out.a_o_hat);
    require_distribution(out.a_f_s);

    Tensor a_f_p = classify(encoder_forward(x_o, *model.g_a, 4), *model.v_a);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(out.a_f_p.at(i) == a_f_p.at(i));
}

TEST_CASE("pass-through cycle model reproduces the analytic norm chain") {
    Rng rng(10);
    Geometry geo{.d = 8, .num_actions = 4, .observed = 3, .future = 3, .horizon = 0};
    ModelParams model = make_model(ModelKind::cycle_transform, geo, 2, 2, rng);
    auto zero_enc = [](EncoderParams& enc) {
        for (EncoderLayerParams& layer : enc.layers)
            for (Tensor w : {layer.w_q, layer.w_k, layer.w_v, layer.w_o, layer.ffn_w1,
                             layer.ffn_b1, layer.ffn_w2, layer.ffn_b2})
                for (double& v : w.mutable_data()) v = 0.0;
    };
    zero_enc(*model.g_a);
    zero_enc(*model.g_r);

    Tensor x_o = rand_frames(3, 8, rng);
    ActOutputs out = act_forward(x_o, model, 3);

    // X_f_hat: g_a's query rows through 2 layers x 2 norms each
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<double> row(8);
        for (std::size_t c = 0; c < 8; ++c) row[c] = model.g_a->query_tokens.at(r * 8 + c);
        row = norm_chain(row, 4);
        for (std::size_t c = 0; c < 8; ++c)
            REQUIRE(out.x_f_hat.at(r * 8 + c) == Catch::Approx(row[c]).margin(1e-12));
    }
    // X_o_hat: g_r's query rows through the same chain
    std::vector<double> expected_xo(3 * 8);
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<double> row(8);
        for (std::size_t c = 0; c < 8; ++c) row[c] = model.g_r->query_tokens.at(r * 8 + c);
        row = norm_chain(row, 4);
        for (std::size_t c = 0; c < 8; ++c) {
            expected_xo[r * 8 + c] = row[c];
            REQUIRE(out.x_o_hat.at(r * 8 + c) == Catch::Approx(row[c]).margin(1e-12));
        }
    }
    // mse(X_o_hat, one more pass-through of X_f_hat) against a direct evaluation
    Tensor once_more = encoder_forward(out.x_f_hat.detached(), *model.g_a, 3);
    double expected_mse = 0.0;
    for (std::size_t i = 0; i < 24; ++i) {
        const double diff = expected_xo[i] - once_more.at(i);
        expected_mse += diff * diff;
    }
    expected_mse /= 24.0;
    REQUIRE(mse(out.x_o_hat, once_more).item() == Catch::Approx(expected_mse).margin(1e-12));
}

TEST_CASE("cycle model gradients match finite differences end to end") {
    Rng rng(20);
    Geometry geo{.d = 8, .num_actions = 4, .observed = 6, .future = 4, .horizon = 2};
    ModelParams model = make_model(ModelKind::cycle_transform, geo, 2, 2, rng);
    ParameterMap params = parameters(model);

    Tensor x_o, x_f;
    std::size_t a_o = 0, a_f = 0;
    auto loss = [&]() -> Tensor {
        ActOutputs out = act_forward(x_o, model, 4);
        Tensor l = add(cross_entropy(out.a_o_hat, a_o), cross_entropy(out.a_f_s, a_f));
        l = add(l, mse(out.x_f_hat, x_f));
        l = add(l, cross_entropy(out.a_f_p, a_f));
        l = add(l, mse(out.x_o_hat, x_o));
        return l;
    };
    for (int attempt = 0; attempt < 64; ++attempt) {
        x_o = rand_frames(6, 8, rng);
        x_f = rand_frames(4, 8, rng);
        a_o = rng.uniform_index(4);
        a_f = rng.uniform_index(4);
        KinkScope scope;
        NoGradGuard guard;
        loss();
        if (scope.min_margin() > 2e-3) break;
    }

    GradientMap analytic = backward(loss());
    GradientMap numeric = finite_diff_grad([&] { return loss().item(); }, params, 1e-4);
    REQUIRE(max_relative_error(analytic, numeric) <= 1e-4);
}
