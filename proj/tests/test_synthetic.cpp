#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "aact/synthetic.hpp"

using namespace aact;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("grammar construction is deterministic and row-stochastic") {
    ActivityGrammar a = build_grammar(4, 6, 8, 42, 0.2);
    ActivityGrammar b = build_grammar(4, 6, 8, 42, 0.2);
    REQUIRE(a.transition == b.transition);
    REQUIRE(a.start_dist == b.start_dist);
    REQUIRE(a.class_embeddings == b.class_embeddings);

    for (const auto& matrix : a.transition)
        for (std::size_t row = 0; row < 6; ++row) {
            double sum = 0.0;
            for (std::size_t col = 0; col < 6; ++col) sum += matrix[row * 6 + col];
            REQUIRE(std::abs(sum - 1.0) < 1e-12);
        }
    for (const auto& dist : a.start_dist) {
        double sum = 0.0;
        for (double p : dist) sum += p;
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("grammar embeddings are unit norm and distinct") {
    ActivityGrammar g = build_grammar(2, 12, 16, 7, 0.3);
    for (std::size_t c = 0; c < 12; ++c) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < 16; ++i)
            norm2 += g.class_embeddings[c * 16 + i] * g.class_embeddings[c * 16 + i];
        REQUIRE(std::abs(norm2 - 1.0) < 1e-12);
    }
    for (std::size_t c1 = 0; c1 < 12; ++c1)
        for (std::size_t c2 = c1 + 1; c2 < 12; ++c2) {
            double dist2 = 0.0;
            for (std::size_t i = 0; i < 16; ++i) {
                const double diff =
                    g.class_embeddings[c1 * 16 + i] - g.class_embeddings[c2 * 16 + i];
                dist2 += diff * diff;
            }
            REQUIRE(dist2 > 0.01);
        }
}

TEST_CASE("degenerate two-action grammar constructs") {
    ActivityGrammar g = build_grammar(1, 2, 4, 1, 0.0);
    REQUIRE(g.num_actions == 2);
    // with A=2 the only successor of each action is the other one
    REQUIRE(g.transition[0][0 * 2 + 1] == Catch::Approx(1.0));
    REQUIRE(g.transition[0][1 * 2 + 0] == Catch::Approx(1.0));
    REQUIRE_THROWS_AS(build_grammar(1, 1, 4, 1, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(build_grammar(0, 4, 4, 1, 0.0), std::invalid_argument);
}

TEST_CASE("noise-free videos emit exact class embeddings") {
    ActivityGrammar g = build_grammar(3, 5, 6, 11, 0.0);
    Video video = sample_video(g, 40, 1, 99);
    REQUIRE(video.frames() == 40);
    for (std::size_t f = 0; f < 40; ++f) {
        REQUIRE(video.labels[f] < 5);
        for (std::size_t i = 0; i < 6; ++i)
            REQUIRE(video.features[f * 6 + i] == g.class_embeddings[video.labels[f] * 6 + i]);
    }
}

TEST_CASE("videos are seed-deterministic and validate inputs") {
    ActivityGrammar g = build_grammar(3, 5, 6, 11, 0.4);
    Video a = sample_video(g, 50, 2, 123);
    Video b = sample_video(g, 50, 2, 123);
    REQUIRE(a.labels == b.labels);
    REQUIRE(a.features == b.features);
    REQUIRE_THROWS_AS(sample_video(g, 50, 3, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(sample_video(g, 2, 0, 1), std::invalid_argument);
}

TEST_CASE("example windows follow the M + k index arithmetic") {
    ActivityGrammar g = build_grammar(1, 4, 4, 5, 0.0);
    Video video = sample_video(g, 30, 0, 7);
    Geometry geo{.d = 4, .num_actions = 4, .observed = 4, .future = 3, .horizon = 2};

    AnticipationExample ex = make_example(video, 0, geo);
    // future frames are exactly {6, 7, 8}
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(ex.future_labels[i] == video.labels[6 + i]);
        for (std::size_t c = 0; c < 4; ++c)
            REQUIRE(ex.x_f.at(i * 4 + c) == video.features[(6 + i) * 4 + c]);
    }
    REQUIRE(ex.a_f == video.labels[6]);

    // k = 0 abuts the windows
    Geometry abut = geo;
    abut.horizon = 0;
    AnticipationExample ex0 = make_example(video, 5, abut);
    REQUIRE(ex0.a_f == video.labels[5 + 4]);

    REQUIRE_THROWS_AS(make_example(video, 22, geo), std::invalid_argument);
}

TEST_CASE("observed label is the majority with earliest-label tie break") {
    Video video;
    video.d = 2;
    video.labels = {3, 3, 1, 1, 2, 2, 2, 0, 0, 0};
    video.features.assign(video.labels.size() * 2, 0.0);
    Geometry geo{.d = 2, .num_actions = 4, .observed = 4, .future = 1, .horizon = 0};

    // window {3,3,1,1}: tie between 3 and 1, 3 appears first
    REQUIRE(make_example(video, 0, geo).a_o == 3);
    // window {2,2,2,0}: clear majority
    REQUIRE(make_example(video, 4, geo).a_o == 2);
    // single-segment window
    Geometry geo2 = geo;
    geo2.observed = 3;
    REQUIRE(make_example(video, 4, geo2).a_o == 2);
}

TEST_CASE("noise-free frames are recovered by nearest embedding") {
    ActivityGrammar g = build_grammar(2, 8, 12, 21, 0.0);
    Video video = sample_video(g, 60, 0, 77);
    for (std::size_t f = 0; f < video.frames(); ++f) {
        std::size_t best = 0;
        double best_dist = 1e300;
        for (std::size_t c = 0; c < 8; ++c) {
            double dist = 0.0;
            for (std::size_t i = 0; i < 12; ++i) {
                const double diff = video.features[f * 12 + i] - g.class_embeddings[c * 12 + i];
                dist += diff * diff;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        REQUIRE(best == video.labels[f]);
    }
}

TEST_CASE("dataset generation is reproducible") {
    Geometry geo{.d = 6, .num_actions = 5, .observed = 4, .future = 2, .horizon = 1};
    DataConfig cfg;
    cfg.num_activities = 3;
    cfg.n_examples = 50;
    cfg.video_len = 32;
    cfg.seed = 99;
    Dataset a = generate_dataset(geo, cfg);
    Dataset b = generate_dataset(geo, cfg);
    REQUIRE(a.size() == 50);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.examples[i].x_o.data() == b.examples[i].x_o.data());
        REQUIRE(a.examples[i].a_f == b.examples[i].a_f);
    }
}

TEST_CASE("dataset files round-trip bitwise") {
    Geometry geo{.d = 6, .num_actions = 5, .observed = 4, .future = 2, .horizon = 1};
    DataConfig cfg;
    cfg.num_activities = 3;
    cfg.n_examples = 20;
    cfg.video_len = 32;
    cfg.seed = 5;
    Dataset data = generate_dataset(geo, cfg);

    const std::string path = temp_path("aact_ds_roundtrip.bin");
    write_dataset(data, path);
    Dataset loaded = read_dataset(path);
    REQUIRE(loaded.size() == data.size());
    REQUIRE(loaded.geometry.d == geo.d);
    REQUIRE(loaded.geometry.horizon == geo.horizon);
    for (std::size_t i = 0; i < data.size(); ++i) {
        REQUIRE(loaded.examples[i].x_o.data() == data.examples[i].x_o.data());
        REQUIRE(loaded.examples[i].x_f.data() == data.examples[i].x_f.data());
        REQUIRE(loaded.examples[i].a_o == data.examples[i].a_o);
        REQUIRE(loaded.examples[i].a_f == data.examples[i].a_f);
        REQUIRE(loaded.examples[i].future_labels == data.examples[i].future_labels);
    }

    // writing again produces byte-identical files
    const std::string path2 = temp_path("aact_ds_roundtrip2.bin");
    write_dataset(loaded, path2);
    REQUIRE(io::load_file(path, "t") == io::load_file(path2, "t"));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("empty dataset round-trips") {
    Dataset data;
    data.geometry = Geometry{.d = 4, .num_actions = 3, .observed = 2, .future = 1, .horizon = 0};
    const std::string path = temp_path("aact_ds_empty.bin");
    write_dataset(data, path);
    Dataset loaded = read_dataset(path);
    REQUIRE(loaded.size() == 0);
    REQUIRE(loaded.geometry.num_actions == 3);
    std::remove(path.c_str());
}

TEST_CASE("corrupted dataset files name the failing record") {
    Geometry geo{.d = 4, .num_actions = 3, .observed = 2, .future = 1, .horizon = 0};
    DataConfig cfg;
    cfg.num_activities = 2;
    cfg.n_examples = 3;
    cfg.video_len = 16;
    Dataset data = generate_dataset(geo, cfg);
    const std::string path = temp_path("aact_ds_corrupt.bin");
    write_dataset(data, path);

    std::string bytes = io::load_file(path, "t");
    bytes.resize(bytes.size() - 7);  // chop into the last record
    io::store_file(path, bytes, "t");
    REQUIRE_THROWS_WITH(read_dataset(path), Catch::Matchers::ContainsSubstring("record 2"));

    // bad magic
    bytes[0] = 'X';
    io::store_file(path, bytes, "t");
    REQUIRE_THROWS_WITH(read_dataset(path), Catch::Matchers::ContainsSubstring("magic"));
    std::remove(path.c_str());
}
