#pragma once
// Synthetic procedural-activity videos: a Markov grammar over action classes
// emits per-frame labels, and each frame's feature vector is its class
// embedding plus Gaussian noise. Windows cut from the videos become
// anticipation examples: M observed frames, a gap of k frames, N future
// frames, with the future action read at the first future frame.
//
// Dataset file layout (all integers and reals little-endian):
//   magic   7 bytes  "AACTDS1"
//   version u32      1
//   d, A, M, N, k    u32 each
//   count   u64
//   then `count` fixed-size records:
//     x_o     M*d f64
//     x_f     N*d f64
//     a_o     u32
//     a_f     u32
//     future  N u32   per-frame labels of the future window

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "aact/losses.hpp"
#include "aact/models.hpp"
#include "aact/rng.hpp"
#include "aact/tensor.hpp"

namespace aact {

namespace io {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

/// Byte-cursor over a loaded file; bounds failures throw with `context`.
struct Reader {
    const std::string* buffer;
    std::size_t pos = 0;
    std::string context;

    void need(std::size_t n) const {
        if (pos + n > buffer->size())
            throw std::runtime_error(context + ": truncated file at byte " + std::to_string(pos));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>((*buffer)[pos + i]))
                 << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>((*buffer)[pos + i]))
                 << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string out = buffer->substr(pos, n);
        pos += n;
        return out;
    }
};

inline std::string load_file(const std::string& path, const std::string& context) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(context + ": cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void store_file(const std::string& path, const std::string& data,
                       const std::string& context) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(context + ": cannot open " + path + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error(context + ": short write to " + path);
}

}  // namespace io

// ---------------------------------------------------------------------------
// grammar
// ---------------------------------------------------------------------------

struct ActivityGrammar {
    std::size_t num_activities = 0;
    std::size_t num_actions = 0;
    std::size_t d = 0;
    // per activity: row-stochastic A x A matrix of segment-to-segment moves
    std::vector<std::vector<double>> transition;
    // per activity: distribution over the first segment's action
    std::vector<std::vector<double>> start_dist;
    std::size_t segment_min = 3;
    std::size_t segment_max = 7;
    std::vector<double> class_embeddings;  // A x d, unit-norm rows
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Seeded grammar construction. Transitions are banded: every action hands
/// over to one of its three index neighbors with one clearly preferred
/// successor, so futures are predictable but not deterministic. Class
/// embeddings are unit-norm with pairwise distance above 0.1.
inline ActivityGrammar build_grammar(std::size_t num_activities, std::size_t num_actions,
                                     std::size_t d, std::uint64_t seed, double noise_sigma,
                                     std::size_t segment_min = 3, std::size_t segment_max = 7) {
    if (num_activities < 1 || num_actions < 2 || d < 2)
        throw std::invalid_argument("build_grammar: need >= 1 activity, >= 2 actions, d >= 2");
    if (segment_min < 1 || segment_max < segment_min)
        throw std::invalid_argument("build_grammar: bad segment length range");
    if (noise_sigma < 0.0) throw std::invalid_argument("build_grammar: negative noise sigma");

    ActivityGrammar g;
    g.num_activities = num_activities;
    g.num_actions = num_actions;
    g.d = d;
    g.segment_min = segment_min;
    g.segment_max = segment_max;
    g.noise_sigma = noise_sigma;
    g.seed = seed;

    Rng rng(seed);
    const std::size_t a = num_actions;

    g.transition.assign(num_activities, std::vector<double>(a * a, 0.0));
    g.start_dist.assign(num_activities, std::vector<double>(a, 0.0));
    for (std::size_t v = 0; v < num_activities; ++v) {
        for (std::size_t act = 0; act < a; ++act) {
            // three candidate successors at offsets 1..3 (fewer when A is tiny)
            const std::size_t fanout = std::min<std::size_t>(3, a - 1);
            double weights[3] = {rng.uniform(1.0, 1.6), rng.uniform(0.35, 0.65),
                                 rng.uniform(0.10, 0.25)};
            // rotate which neighbor dominates so activities differ
            const std::size_t rot = rng.uniform_index(fanout);
            double sum = 0.0;
            for (std::size_t j = 0; j < fanout; ++j) sum += weights[j];
            for (std::size_t j = 0; j < fanout; ++j) {
                const std::size_t succ = (act + 1 + (j + rot) % fanout) % a;
                g.transition[v][act * a + succ] = weights[j] / sum;
            }
        }
        // starts concentrated on one activity-specific action
        const std::size_t home = v % a;
        for (std::size_t act = 0; act < a; ++act)
            g.start_dist[v][act] = act == home ? 0.5 : 0.5 / static_cast<double>(a - 1);
    }

    // unit-norm embeddings, redrawn until pairwise distances clear 0.1
    g.class_embeddings.assign(a * d, 0.0);
    for (std::size_t c = 0; c < a; ++c) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 1000)
                throw std::runtime_error("build_grammar: cannot place distinct embeddings");
            double norm2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                g.class_embeddings[c * d + i] = rng.normal();
                norm2 += g.class_embeddings[c * d + i] * g.class_embeddings[c * d + i];
            }
            if (norm2 == 0.0) continue;
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t i = 0; i < d; ++i) g.class_embeddings[c * d + i] *= inv;
            bool distinct = true;
            for (std::size_t prev = 0; prev < c && distinct; ++prev) {
                double dist2 = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double diff =
                        g.class_embeddings[c * d + i] - g.class_embeddings[prev * d + i];
                    dist2 += diff * diff;
                }
                if (dist2 <= 0.01) distinct = false;
            }
            if (distinct) break;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// videos and examples
// ---------------------------------------------------------------------------

struct Video {
    std::vector<std::uint32_t> labels;   // per-frame action class
    std::vector<double> features;        // frames x d, row-major
    std::size_t d = 0;

    std::size_t frames() const { return labels.size(); }
};

namespace detail {

inline std::size_t sample_categorical(const std::vector<double>& dist, std::size_t offset,
                                      std::size_t n, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cum += dist[offset + i];
        if (u < cum) return i;
    }
    return n - 1;
}

}  // namespace detail

/// Markov walk over action segments; every frame's feature is its class
/// embedding plus coordinatewise Gaussian noise, all from the given seed.
inline Video sample_video(const ActivityGrammar& g, std::size_t total_frames,
                          std::size_t activity, std::uint64_t seed) {
    if (activity >= g.num_activities)
        throw std::invalid_argument("sample_video: activity " + std::to_string(activity) +
                                    " out of range (" + std::to_string(g.num_activities) + ")");
    if (total_frames < g.segment_min)
        throw std::invalid_argument("sample_video: " + std::to_string(total_frames) +
                                    " frames shorter than the minimum segment");
    Rng rng(seed);
    Video video;
    video.d = g.d;
    video.labels.reserve(total_frames);

    const std::size_t a = g.num_actions;
    std::size_t current = detail::sample_categorical(g.start_dist[activity], 0, a, rng);
    while (video.labels.size() < total_frames) {
        const std::size_t seg = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(g.segment_min),
                            static_cast<std::int64_t>(g.segment_max)));
        for (std::size_t i = 0; i < seg && video.labels.size() < total_frames; ++i)
            video.labels.push_back(static_cast<std::uint32_t>(current));
        current = detail::sample_categorical(g.transition[activity], current * a, a, rng);
    }

    video.features.resize(total_frames * g.d);
    for (std::size_t f = 0; f < total_frames; ++f) {
        const std::size_t cls = video.labels[f];
        for (std::size_t i = 0; i < g.d; ++i)
            video.features[f * g.d + i] =
                g.class_embeddings[cls * g.d + i] +
                (g.noise_sigma > 0.0 ? rng.normal(0.0, g.noise_sigma) : 0.0);
    }
    return video;
}

struct AnticipationExample {
    Tensor x_o;  // M x d
    Tensor x_f;  // N x d
    std::uint32_t a_o = 0;
    std::uint32_t a_f = 0;
    std::vector<std::uint32_t> future_labels;  // N per-frame labels
};

/// Cuts one example at frame t: observed window [t, t+M), future window
/// [t+M+k, t+M+k+N). The observed label is the window's majority frame label
/// (ties go to the label appearing earliest); the future label is the frame
/// right at the horizon.
inline AnticipationExample make_example(const Video& video, std::size_t t, const Geometry& geo) {
    const std::size_t m = geo.observed, n = geo.future, k = geo.horizon, d = geo.d;
    if (video.d != d)
        throw std::invalid_argument("make_example: video width " + std::to_string(video.d) +
                                    " != d " + std::to_string(d));
    if (t + m + k + n > video.frames())
        throw std::invalid_argument("make_example: window [" + std::to_string(t) + ", " +
                                    std::to_string(t + m + k + n) + ") exceeds video of " +
                                    std::to_string(video.frames()) + " frames");
    AnticipationExample ex;
    ex.x_o = Tensor::from({m, d}, std::vector<double>(video.features.begin() + t * d,
                                                      video.features.begin() + (t + m) * d));
    const std::size_t fut = t + m + k;
    ex.x_f = Tensor::from({n, d}, std::vector<double>(video.features.begin() + fut * d,
                                                      video.features.begin() + (fut + n) * d));
    ex.a_f = video.labels[fut];
    ex.future_labels.assign(video.labels.begin() + fut, video.labels.begin() + fut + n);

    // majority vote with earliest-first tie break
    std::vector<std::size_t> count;
    std::vector<std::size_t> first_seen;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t cls = video.labels[t + i];
        if (cls >= count.size()) {
            count.resize(cls + 1, 0);
            first_seen.resize(cls + 1, m);
        }
        if (count[cls] == 0) first_seen[cls] = i;
        ++count[cls];
    }
    std::size_t best = video.labels[t];
    for (std::size_t cls = 0; cls < count.size(); ++cls) {
        if (count[cls] == 0) continue;
        if (count[cls] > count[best] ||
            (count[cls] == count[best] && first_seen[cls] < first_seen[best]))
            best = cls;
    }
    ex.a_o = static_cast<std::uint32_t>(best);
    return ex;
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

struct Dataset {
    Geometry geometry;  // d, num_actions, observed M, future N, horizon k
    std::vector<AnticipationExample> examples;

    std::size_t size() const { return examples.size(); }
};

inline LossTargets targets_of(const AnticipationExample& ex) {
    return LossTargets{ex.x_o, ex.x_f, ex.a_o, ex.a_f};
}

struct DataConfig {
    std::size_t num_activities = 6;
    std::size_t segment_min = 3;
    std::size_t segment_max = 7;
    double noise_sigma = 0.3;
    std::size_t video_len = 64;
    std::size_t stride = 2;
    std::size_t n_examples = 2000;
    std::uint64_t grammar_seed = 1;  // the world: transitions, embeddings
    std::uint64_t seed = 1;          // which videos get sampled from it
};

/// Deterministic dataset: videos are seeded seed ^ video_index (so any
/// partition of the video range generates identically), activities cycle,
/// and examples are cut at `stride`-spaced offsets until the count is met.
/// Train and evaluation splits share a grammar_seed and differ in seed.
inline Dataset generate_dataset(const Geometry& geo, const DataConfig& cfg) {
    const std::size_t window = geo.observed + geo.horizon + geo.future;
    if (cfg.video_len < window)
        throw std::invalid_argument("generate_dataset: video_len " +
                                    std::to_string(cfg.video_len) + " shorter than window " +
                                    std::to_string(window));
    ActivityGrammar grammar =
        build_grammar(cfg.num_activities, geo.num_actions, geo.d, cfg.grammar_seed,
                      cfg.noise_sigma, cfg.segment_min, cfg.segment_max);
    Dataset data;
    data.geometry = geo;
    data.examples.reserve(cfg.n_examples);
    for (std::uint64_t v = 0; data.examples.size() < cfg.n_examples; ++v) {
        Video video = sample_video(grammar, cfg.video_len, static_cast<std::size_t>(v) %
                                                               cfg.num_activities,
                                   cfg.seed ^ v);
        for (std::size_t t = 0;
             t + window <= video.frames() && data.examples.size() < cfg.n_examples;
             t += cfg.stride)
            data.examples.push_back(make_example(video, t, geo));
    }
    return data;
}

inline constexpr char kDatasetMagic[8] = "AACTDS1";  // 7 chars + NUL (NUL not written)

inline void write_dataset(const Dataset& data, const std::string& path) {
    const Geometry& geo = data.geometry;
    std::string out;
    out.append(kDatasetMagic, 7);
    io::put_u32(out, 1);
    io::put_u32(out, static_cast<std::uint32_t>(geo.d));
    io::put_u32(out, static_cast<std::uint32_t>(geo.num_actions));
    io::put_u32(out, static_cast<std::uint32_t>(geo.observed));
    io::put_u32(out, static_cast<std::uint32_t>(geo.future));
    io::put_u32(out, static_cast<std::uint32_t>(geo.horizon));
    io::put_u64(out, data.examples.size());
    for (std::size_t idx = 0; idx < data.examples.size(); ++idx) {
        const AnticipationExample& ex = data.examples[idx];
        if (ex.x_o.shape() != Shape{geo.observed, geo.d} ||
            ex.x_f.shape() != Shape{geo.future, geo.d} || ex.future_labels.size() != geo.future)
            throw std::invalid_argument("write_dataset: example " + std::to_string(idx) +
                                        " does not match the dataset geometry");
        for (double v : ex.x_o.data()) io::put_f64(out, v);
        for (double v : ex.x_f.data()) io::put_f64(out, v);
        io::put_u32(out, ex.a_o);
        io::put_u32(out, ex.a_f);
        for (std::uint32_t l : ex.future_labels) io::put_u32(out, l);
    }
    io::store_file(path, out, "write_dataset");
}

inline Dataset read_dataset(const std::string& path) {
    const std::string buffer = io::load_file(path, "read_dataset");
    io::Reader r{&buffer, 0, "read_dataset"};
    if (r.bytes(7) != std::string(kDatasetMagic, 7))
        throw std::runtime_error("read_dataset: " + path + " is not a dataset file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw std::runtime_error("read_dataset: unsupported version " + std::to_string(version));
    Dataset data;
    data.geometry.d = r.u32();
    data.geometry.num_actions = r.u32();
    data.geometry.observed = r.u32();
    data.geometry.future = r.u32();
    data.geometry.horizon = r.u32();
    const std::uint64_t count = r.u64();
    const Geometry& geo = data.geometry;
    data.examples.reserve(count);
    for (std::uint64_t idx = 0; idx < count; ++idx) {
        r.context = "read_dataset: record " + std::to_string(idx);
        AnticipationExample ex;
        std::vector<double> xo(geo.observed * geo.d);
        for (double& v : xo) v = r.f64();
        std::vector<double> xf(geo.future * geo.d);
        for (double& v : xf) v = r.f64();
        ex.x_o = Tensor::from({geo.observed, geo.d}, std::move(xo));
        ex.x_f = Tensor::from({geo.future, geo.d}, std::move(xf));
        ex.a_o = r.u32();
        ex.a_f = r.u32();
        ex.future_labels.resize(geo.future);
        for (std::uint32_t& l : ex.future_labels) l = r.u32();
        data.examples.push_back(std::move(ex));
    }
    if (r.pos != buffer.size())
        throw std::runtime_error("read_dataset: " + std::to_string(buffer.size() - r.pos) +
                                 " trailing bytes after record " + std::to_string(count));
    return data;
}

}  // namespace aact
