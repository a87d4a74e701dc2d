#pragma once
// Command-line front end. Subcommands:
//
//   gen-data       write a synthetic dataset file
//   train          train one model, write checkpoint + history CSV
//   eval           score a checkpoint on a dataset, write report CSV
//   gradcheck      compare reverse-mode against central differences
//   ablate         run the cycle / loss / model / data-fraction suites
//   sweep-horizon  train and score across anticipation horizons
//
// Options load from a `key = value` file (# comments) via --config; explicit
// flags override the file and unknown keys are rejected. Every run echoes its
// effective configuration next to its artifacts; re-running from that echo
// reproduces the outputs byte for byte. Exit codes: 0 success, 1 runtime
// failure, 2 usage errors.

#include <CLI11.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "aact/evaluation.hpp"
#include "aact/synthetic.hpp"
#include "aact/training.hpp"

namespace aact {

namespace cli {

struct Options {
    TrainConfig train;
    DataConfig data;
    std::string model = "se";
    std::string cycle_target = "soft";
    std::string protocol = "at_horizon";
    std::string suite = "cycle";
    std::size_t n_test = 500;
    std::vector<std::uint64_t> suite_seeds = {1, 2, 3, 4, 5};
    std::vector<std::size_t> horizons = {0, 2, 4, 6, 8};
    std::vector<double> fractions = {0.10, 0.20, 0.30, 0.50};
    std::string data_path, val_path, checkpoint_path, out_path;

    void finalize() {
        train.model_kind = model_kind_from_string(model);
        train.cycle_label_target = cycle_label_target_from_string(cycle_target);
    }
};

/// Registers the shared option set on a subcommand. Every option name doubles
/// as a config-file key. All options take the last value given, so values
/// injected from --config files are overridden by explicit flags.
inline void add_common_options(CLI::App& cmd, Options& opt) {
    cmd.add_option("--config", "key = value configuration file, flags take precedence");
    cmd.add_option("--model", opt.model, "model kind: se, pv or act")->capture_default_str();
    cmd.add_option("--epochs", opt.train.epochs, "training epochs")->capture_default_str();
    cmd.add_option("--batch-size", opt.train.batch_size, "examples per step")
        ->capture_default_str();
    cmd.add_option("--lr", opt.train.learning_rate, "Adam learning rate")->capture_default_str();
    cmd.add_option("--beta1", opt.train.beta1, "Adam first-moment decay")->capture_default_str();
    cmd.add_option("--beta2", opt.train.beta2, "Adam second-moment decay")->capture_default_str();
    cmd.add_option("--adam-eps", opt.train.adam_eps, "Adam epsilon")->capture_default_str();
    cmd.add_option("--lambda-s", opt.train.lambdas.semantic, "experience loss weight")
        ->capture_default_str();
    cmd.add_option("--lambda-p", opt.train.lambdas.pattern, "pattern loss weight")
        ->capture_default_str();
    cmd.add_option("--lambda-c", opt.train.lambdas.cycle, "cycle loss weight")
        ->capture_default_str();
    cmd.add_option("--seed", opt.train.seed, "run seed; all randomness funnels through it")
        ->capture_default_str();
    cmd.add_option("--cycle-label-target", opt.cycle_target, "label-cycle target: soft or hard")
        ->capture_default_str();
    cmd.add_option("--d", opt.train.geometry.d, "frame feature width")->capture_default_str();
    cmd.add_option("--num-actions", opt.train.geometry.num_actions, "action classes")
        ->capture_default_str();
    cmd.add_option("--observed", opt.train.geometry.observed, "observed frames M")
        ->capture_default_str();
    cmd.add_option("--future", opt.train.geometry.future, "future frames N")
        ->capture_default_str();
    cmd.add_option("--horizon", opt.train.geometry.horizon, "gap k between the windows")
        ->capture_default_str();
    cmd.add_option("--heads", opt.train.heads, "attention heads")->capture_default_str();
    cmd.add_option("--layers", opt.train.layers, "encoder layers")->capture_default_str();
    cmd.add_option("--grad-check", opt.train.grad_check,
                   "verify one batch against finite differences before training (true/false)");
    cmd.add_option("--num-activities", opt.data.num_activities, "activity grammars")
        ->capture_default_str();
    cmd.add_option("--segment-min", opt.data.segment_min, "shortest action segment")
        ->capture_default_str();
    cmd.add_option("--segment-max", opt.data.segment_max, "longest action segment")
        ->capture_default_str();
    cmd.add_option("--noise-sigma", opt.data.noise_sigma, "per-coordinate feature noise")
        ->capture_default_str();
    cmd.add_option("--video-len", opt.data.video_len, "frames per synthetic video")
        ->capture_default_str();
    cmd.add_option("--stride", opt.data.stride, "frames between example windows")
        ->capture_default_str();
    cmd.add_option("--n-examples", opt.data.n_examples, "examples to generate")
        ->capture_default_str();
    cmd.add_option("--grammar-seed", opt.data.grammar_seed, "world seed for the grammar")
        ->capture_default_str();
    cmd.add_option("--n-test", opt.n_test, "test examples per suite cell")
        ->capture_default_str();
    cmd.add_option("--suite-seeds", opt.suite_seeds, "seed list for suite cells")
        ->delimiter(',')
        ->capture_default_str();
    cmd.add_option("--horizons", opt.horizons, "horizon list for sweep-horizon")
        ->delimiter(',')
        ->capture_default_str();
    cmd.add_option("--fractions", opt.fractions, "training-data fractions")
        ->delimiter(',')
        ->capture_default_str();
}

inline std::string format_u64_list(const std::vector<std::uint64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

/// Canonical effective-config text. Feeding it back through --config with the
/// same subcommand reproduces the run.
inline std::string echo_config(const Options& opt) {
    std::string out = to_config_text(opt.train);
    auto line = [&](const char* key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    };
    line("num-activities", std::to_string(opt.data.num_activities));
    line("segment-min", std::to_string(opt.data.segment_min));
    line("segment-max", std::to_string(opt.data.segment_max));
    line("noise-sigma", detail::format_real(opt.data.noise_sigma));
    line("video-len", std::to_string(opt.data.video_len));
    line("stride", std::to_string(opt.data.stride));
    line("n-examples", std::to_string(opt.data.n_examples));
    line("grammar-seed", std::to_string(opt.data.grammar_seed));
    line("n-test", std::to_string(opt.n_test));
    line("suite-seeds", format_u64_list(opt.suite_seeds));
    {
        std::string hs;
        for (std::size_t i = 0; i < opt.horizons.size(); ++i) {
            if (i) hs += ',';
            hs += std::to_string(opt.horizons[i]);
        }
        line("horizons", hs);
    }
    {
        std::string fs;
        for (std::size_t i = 0; i < opt.fractions.size(); ++i) {
            if (i) fs += ',';
            fs += detail::format_real(opt.fractions[i]);
        }
        line("fractions", fs);
    }
    return out;
}

/// to_config_text writes the trainer's view; the subcommands add their own
/// keys (paths, protocol, suite) on top of echo_config's output.
inline void write_text(const std::string& path, const std::string& text) {
    io::store_file(path, text, "write artifact");
}

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + path);
}

inline std::string history_csv(const TrainHistory& history) {
    std::string out = "epoch,l_s,l_p,l_cyc_p,l_cyc_s,l_c,total,train_top1,val_top1\n";
    char buf[64];
    for (std::size_t e = 0; e < history.size(); ++e) {
        const EpochStats& s = history[e];
        out += std::to_string(e);
        for (double v : {s.loss.l_s, s.loss.l_p, s.loss.l_cyc_p, s.loss.l_cyc_s, s.loss.l_c,
                         s.loss.total, s.train_top1, s.val_top1}) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

inline void run_gen_data(Options& opt) {
    Dataset data = generate_dataset(opt.train.geometry, opt.data);
    write_dataset(data, opt.out_path);
    write_text(opt.out_path + ".cfg", echo_config(opt) + "out = " + opt.out_path + "\n");
}

inline void run_train(Options& opt) {
    Dataset train_set = read_dataset(opt.data_path);
    opt.train.geometry = train_set.geometry;
    Dataset val_set;
    if (!opt.val_path.empty()) val_set = read_dataset(opt.val_path);
    TrainResult result = train(opt.train, train_set, val_set);

    ensure_dir(opt.out_path);
    checkpoint_save(result.model, opt.train, opt.out_path + "/checkpoint.bin");
    write_text(opt.out_path + "/history.csv", history_csv(result.history));
    std::string echo = echo_config(opt) + "data = " + opt.data_path + "\n";
    if (!opt.val_path.empty()) echo += "val = " + opt.val_path + "\n";
    write_text(opt.out_path + "/config.cfg", echo + "out = " + opt.out_path + "\n");
}

inline void run_eval(Options& opt) {
    Checkpoint cp = checkpoint_load(opt.checkpoint_path);
    Dataset data = read_dataset(opt.data_path);
    EvalReport report =
        evaluate(cp.model, data, protocol_from_string(opt.protocol), cp.config.seed);
    ensure_dir(opt.out_path);
    write_text(opt.out_path + "/report.csv", report.to_csv());
    write_text(opt.out_path + "/config.cfg", echo_config(opt) + "checkpoint = " +
                                                 opt.checkpoint_path + "\ndata = " +
                                                 opt.data_path + "\nprotocol = " + opt.protocol +
                                                 "\nout = " + opt.out_path + "\n");
}

inline int run_gradcheck(Options& opt) {
    const double err = gradient_check(opt.train.model_kind, opt.train.geometry, opt.train.heads,
                                      opt.train.layers, opt.train.seed);
    std::printf("max relative gradient error: %.3e (%s, d=%zu, heads=%zu, layers=%zu, seed=%llu)\n",
                err, to_string(opt.train.model_kind), opt.train.geometry.d, opt.train.heads,
                opt.train.layers, static_cast<unsigned long long>(opt.train.seed));
    return err <= 1e-4 ? 0 : 1;
}

inline SuiteConfig suite_config(const Options& opt) {
    SuiteConfig cfg;
    cfg.train = opt.train;
    cfg.data = opt.data;
    cfg.n_test = opt.n_test;
    cfg.seeds = opt.suite_seeds;
    cfg.horizons = opt.horizons;
    cfg.fractions = opt.fractions;
    return cfg;
}

inline void run_ablate(Options& opt) {
    SuiteConfig cfg = suite_config(opt);
    cfg.suite = suite_from_string(opt.suite);
    EvalReport report = run_suite(cfg);
    ensure_dir(opt.out_path);
    write_text(opt.out_path + "/report.csv", report.to_csv());
    write_text(opt.out_path + "/plot.csv", plot_data(report));
    write_text(opt.out_path + "/config.cfg", echo_config(opt) + "suite = " + opt.suite +
                                                 "\nout = " + opt.out_path + "\n");
}

inline void run_sweep_horizon(Options& opt) {
    SuiteConfig cfg = suite_config(opt);
    cfg.suite = Suite::horizon_sweep;
    EvalReport report = run_suite(cfg);
    ensure_dir(opt.out_path);
    write_text(opt.out_path + "/report.csv", report.to_csv());
    write_text(opt.out_path + "/plot.csv", plot_data(report));
    write_text(opt.out_path + "/config.cfg",
               echo_config(opt) + "out = " + opt.out_path + "\n");
}

/// Splits a `key = value` config file (# comments) into ordered pairs.
inline std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
    const std::string text = io::load_file(path, "config");
    std::vector<std::pair<std::string, std::string>> pairs;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto trim = [](std::string s) {
            const std::size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const std::size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("config", "line '" + trim(line) + "' is not key = value");
        pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return pairs;
}

/// Expands `<sub> ... --config file ...` by injecting the file's pairs as
/// options right after the subcommand name, so explicit flags win. Unknown
/// keys are rejected by name.
inline std::vector<std::string> apply_config_files(const CLI::App& app,
                                                   std::vector<std::string> args) {
    if (args.empty()) return args;
    const CLI::App* sub = nullptr;
    for (const CLI::App* candidate : app.get_subcommands(nullptr))
        if (candidate->get_name() == args.front()) sub = candidate;
    if (!sub) return args;

    std::vector<std::string> injected;
    for (std::size_t i = 1; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
        else continue;
        for (auto& [key, value] : parse_config_file(path)) {
            if (key == "config")
                throw CLI::ValidationError("config", "files cannot nest other config files");
            if (sub->get_option_no_throw("--" + key) == nullptr)
                throw CLI::ValidationError("config", "unknown key '" + key + "'");
            injected.push_back("--" + key);
            injected.push_back(value);
        }
    }
    if (injected.empty()) return args;
    std::vector<std::string> out;
    out.reserve(args.size() + injected.size());
    out.push_back(args.front());
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

}  // namespace cli

/// Parses argv and dispatches; returns the process exit status.
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"anticipation models over synthetic procedural activities"};
    app.require_subcommand(1);

    cli::Options opt;

    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset file");
    cli::add_common_options(*gen, opt);
    gen->add_option("--out", opt.out_path, "dataset file to write")->required();

    CLI::App* tr = app.add_subcommand("train", "train a model");
    cli::add_common_options(*tr, opt);
    tr->add_option("--data", opt.data_path, "training dataset file")->required();
    tr->add_option("--val", opt.val_path, "validation dataset file");
    tr->add_option("--out", opt.out_path, "output directory")->required();

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    cli::add_common_options(*ev, opt);
    ev->add_option("--checkpoint", opt.checkpoint_path, "checkpoint file")->required();
    ev->add_option("--data", opt.data_path, "dataset file")->required();
    ev->add_option("--protocol", opt.protocol, "at_horizon or dense_future")
        ->capture_default_str();
    ev->add_option("--out", opt.out_path, "output directory")->required();

    CLI::App* gc = app.add_subcommand("gradcheck",
                                      "compare reverse-mode against finite differences");
    cli::add_common_options(*gc, opt);

    CLI::App* ab = app.add_subcommand("ablate", "run an ablation suite");
    cli::add_common_options(*ab, opt);
    ab->add_option("--suite", opt.suite, "model, cycle, loss or data")->capture_default_str();
    ab->add_option("--out", opt.out_path, "output directory")->required();

    CLI::App* sw = app.add_subcommand("sweep-horizon", "train and score across horizons");
    cli::add_common_options(*sw, opt);
    sw->add_option("--out", opt.out_path, "output directory")->required();

    // flags must override config-file values
    for (const CLI::App* sub : app.get_subcommands(nullptr))
        for (const CLI::Option* option : sub->get_options())
            const_cast<CLI::Option*>(option)->multi_option_policy(
                CLI::MultiOptionPolicy::TakeLast);

    try {
        args = cli::apply_config_files(app, std::move(args));
        // CLI11 parses back to front
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
        opt.finalize();
        if (gen->parsed()) cli::run_gen_data(opt);
        if (tr->parsed()) cli::run_train(opt);
        if (ev->parsed()) cli::run_eval(opt);
        if (gc->parsed()) return cli::run_gradcheck(opt);
        if (ab->parsed()) cli::run_ablate(opt);
        if (sw->parsed()) cli::run_sweep_horizon(opt);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        std::printf("%s", app.help().c_str());
        return 0;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace aact
