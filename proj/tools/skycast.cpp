// skycast command-line front end.
//
// Exit status: 0 success, 1 usage error, 2 runtime error.

#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "skycast/dataset.hpp"
#include "skycast/error.hpp"
#include "skycast/pipeline.hpp"
#include "skycast/rng.hpp"
#include "skycast/service.hpp"
#include "skycast/synth.hpp"

namespace {

using namespace skycast;
namespace fs = std::filesystem;

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// Shortest text that parses back to the same double.
std::string exact(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

aqi::Grade grade_arg(const std::string& text) {
    const auto g = aqi::parse_grade(text);
    if (!g) throw CLI::ValidationError("grade", "unknown grade '" + text + "'");
    return *g;
}

synth::RenderParams render_params(const std::string& path) {
    return path.empty() ? synth::RenderParams::defaults() : synth::RenderParams::load(path);
}

std::vector<dataset::ManifestEntry> entries_for(const std::string& manifest, const std::string& split) {
    auto entries = dataset::load_manifest(manifest);
    if (split.empty()) return entries;
    const auto s = dataset::parse_split(split);
    if (!s) throw CLI::ValidationError("--split", "must be train, val or test");
    return dataset::select_split(entries, *s);
}

// --- dataset -------------------------------------------------------------------

struct GenArgs {
    std::string out;
    int per_grade = 100;
    int size = imaging::kWorkingSize;
    std::uint64_t seed = 0;
    std::string params;
};

int run_gen(const GenArgs& a) {
    dataset::SyntheticSkyConfig cfg;
    cfg.params = render_params(a.params);
    cfg.images_per_grade = a.per_grade;
    cfg.image_size = a.size;
    cfg.seed = a.seed;
    const auto entries = dataset::generate_synthetic_dataset(cfg, a.out);
    std::printf("wrote %zu images and %s\n", entries.size(), (fs::path(a.out) / "manifest.jsonl").c_str());
    return 0;
}

struct SplitArgs {
    std::string manifest;
    std::string out;
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
    std::uint64_t seed = 0;
};

int run_split(const SplitArgs& a) {
    const auto entries = dataset::load_manifest(a.manifest);
    dataset::SplitRatios ratios{a.train, a.val, a.test};
    ratios.validate();
    const auto assignment = dataset::stratified_split(entries, ratios, a.seed);
    const auto tagged = assignment.apply(entries);
    const fs::path dir = a.out.empty() ? fs::path(a.manifest).parent_path() : fs::path(a.out);
    dataset::save_manifest(tagged, dir / "split.jsonl");
    for (auto s : {dataset::Split::Train, dataset::Split::Val, dataset::Split::Test}) {
        const auto name = std::string(dataset::split_name(s));
        dataset::save_manifest(dataset::select_split(tagged, s), dir / (name + ".jsonl"));
        std::printf("%s %zu\n", name.c_str(), assignment.count(s));
    }
    return 0;
}

struct BalanceArgs {
    std::string manifest;
    std::string out;
    std::size_t target = 0;
    std::uint64_t seed = 0;
};

int run_balance(const BalanceArgs& a) {
    const auto entries = dataset::load_manifest(a.manifest);
    const auto balanced = dataset::balance_by_augmentation(entries, a.target, a.seed);
    dataset::save_manifest(balanced, a.out);
    std::array<std::size_t, aqi::kGradeCount> counts{};
    for (const auto& e : balanced) ++counts[aqi::index_of(e.label())];
    for (aqi::Grade g : aqi::kAllGrades) {
        std::printf("%s %zu\n", std::string(aqi::grade_id(g)).c_str(), counts[aqi::index_of(g)]);
    }
    return 0;
}

// --- train / eval / predict ----------------------------------------------------

struct TrainArgs {
    std::string manifest;
    std::string split;
    std::string kind = "rf";
    std::string out;
    std::uint64_t seed = 0;
    int trees = 100;
    int max_depth = 0;
    int min_leaf = 1;
    int k = 3;
    double keep = 0.5;
    std::string arch = "C(6)(5)-S(2)-C(6)(5)-S(2)-C(10)(5)";
    int input_size = 64;
    int epochs = 20;
    double lr = 0.01;
    double momentum = 0.9;
    int batch = 16;
};

int run_train(const TrainArgs& a) {
    app::TrainOptions opts;
    opts.kind = a.kind == "rf" ? app::ModelKind::RandomForest : a.kind == "knn" ? app::ModelKind::Knn : app::ModelKind::Cnn;
    opts.forest.n_trees = a.trees;
    opts.forest.max_depth = a.max_depth;
    opts.forest.min_samples_leaf = a.min_leaf;
    opts.forest.seed = a.seed;
    opts.forest.validate();
    opts.knn_k = a.k;
    opts.knn_keep_fraction = a.keep;
    opts.cnn_arch = a.arch;
    opts.cnn_input_size = a.input_size;
    opts.cnn = {a.lr, a.momentum, a.epochs, a.batch, a.seed};
    opts.cnn.validate();

    const auto entries = entries_for(a.manifest, a.split);
    const auto start = std::chrono::steady_clock::now();
    const auto trained = app::train_model(entries, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    app::save_model(trained.model, a.out);
    for (std::size_t e = 0; e < trained.loss_history.size(); ++e) {
        std::printf("epoch %zu loss %.6f\n", e + 1, trained.loss_history[e]);
    }
    std::printf("trained %s on %zu samples in %.1fs -> %s\n", trained.model.model_id().c_str(), entries.size(), secs,
                a.out.c_str());
    return 0;
}

int run_eval(const std::string& manifest, const std::string& split, const std::string& model_path, bool as_json) {
    const auto model = app::load_model(model_path);
    const auto report = app::evaluate_model(model, entries_for(manifest, split));
    if (as_json) {
        std::printf("%s\n", report.to_json().c_str());
        return 0;
    }
    std::printf("samples %zu\naccuracy %s\nmacro_f1 %s\n", report.total, exact(report.accuracy).c_str(),
                exact(report.macro_f1).c_str());
    return 0;
}

int run_predict(const std::string& model_path, const std::string& image, const std::string& mask, bool as_json) {
    const auto model = app::load_model(model_path);
    const auto img = imaging::load_image(image);
    std::optional<imaging::SkyMask> m;
    if (!mask.empty()) m = imaging::load_mask(mask);
    const auto p = app::predict_image(model, img, m);
    const auto& info = aqi::grade_info(p.grade);
    if (as_json) {
        std::printf("{\"grade\":\"%s\",\"probabilities\":[", std::string(info.name).c_str());
        for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
            std::printf("%s%s", i ? "," : "", exact(p.probabilities[i]).c_str());
        }
        std::printf("],\"aqi_color\":\"%s\",\"model_id\":\"%s\"}\n", std::string(info.color_hex).c_str(),
                    model.model_id().c_str());
        return 0;
    }
    std::printf("grade %s\ncolor %s\nadvice %s\n", std::string(info.name).c_str(), std::string(info.color_hex).c_str(),
                std::string(info.advice).c_str());
    return 0;
}

// --- synthesize ----------------------------------------------------------------

struct SynthArgs {
    std::string image;
    std::string out;
    std::vector<std::string> grades;
    std::string source;
    std::string model;
    std::string params;
    std::uint64_t seed = 0;
};

int run_synthesize(const SynthArgs& a) {
    const auto img = imaging::load_image(a.image);
    if (img.channels != 3) throw Error(ErrorCode::GrayscaleInput, "synthesis needs a color image");
    const auto prepared = app::prepare_image(img);
    aqi::Grade source = aqi::Grade::Good;
    if (!a.source.empty()) {
        source = grade_arg(a.source);
    } else if (!a.model.empty()) {
        source = app::load_model(a.model).predict(prepared).grade;
    }
    std::vector<aqi::Grade> targets;
    for (const auto& g : a.grades) targets.push_back(grade_arg(g));
    if (targets.empty()) targets.assign(aqi::kAllGrades.begin(), aqi::kAllGrades.end());
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

    const auto params = render_params(a.params);
    fs::create_directories(a.out);
    std::printf("source %s\n", std::string(aqi::grade_name(source)).c_str());
    for (aqi::Grade g : targets) {
        const auto v = synth::render_variant(prepared.image, g, params, derive_seed(a.seed, aqi::index_of(g)), source);
        const auto path = fs::path(a.out) / (std::string(aqi::grade_id(g)) + ".png");
        imaging::save_png(v, path);
        std::printf("%-18s ssim %.4f  %s\n", std::string(aqi::grade_id(g)).c_str(), synth::ssim(prepared.image, v),
                    path.c_str());
    }
    return 0;
}

// --- serve ---------------------------------------------------------------------

struct ServeArgs {
    std::string config;
    std::vector<std::string> models;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string log;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_serve(const ServeArgs& a) {
    app::ServiceConfig cfg;
    std::string config = a.config;
    if (config.empty()) {
        if (const char* env = std::getenv("SKYCAST_CONFIG")) config = env;
    }
    if (!config.empty()) cfg = app::ServiceConfig::load(config);
    for (const auto& m : a.models) cfg.model_paths.push_back(m);
    if (config.empty() || a.host != "127.0.0.1") cfg.host = a.host;
    if (config.empty() || a.port != 8080) cfg.port = a.port;
    if (!a.log.empty()) cfg.request_log_path = a.log;
    if (a.seed_set) cfg.seed = a.seed;
    cfg.validate();

    // Signals are consumed by a watcher thread so stop() never runs inside a handler.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    app::Service service(cfg);
    app::HttpServer server(service);
    const int port = server.bind(cfg.host, cfg.port);
    std::printf("listening on http://%s:%d (model %s)\n", cfg.host.c_str(), port, service.primary_model().model_id().c_str());
    std::fflush(stdout);

    std::thread watcher([&server, set] {
        int sig = 0;
        sigwait(&set, &sig);
        server.stop();
    });
    server.listen();
    // listen() also returns on an internal failure; wake the watcher.
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    return 0;
}

// --- bench ---------------------------------------------------------------------

int run_bench(const std::string& model_path, const std::string& image, int repeat) {
    const auto model = app::load_model(model_path);
    const auto img = imaging::load_image(image);
    using clock = std::chrono::steady_clock;
    double prep = 0.0;
    double feat = 0.0;
    double total = 0.0;
    for (int i = 0; i < repeat; ++i) {
        const auto t0 = clock::now();
        const auto prepared = app::prepare_image(img);
        const auto t1 = clock::now();
        if (model.kind() != app::ModelKind::Cnn) (void)app::image_features(prepared, model.bank());
        const auto t2 = clock::now();
        (void)model.predict(prepared);
        const auto t3 = clock::now();
        prep += std::chrono::duration<double, std::milli>(t1 - t0).count();
        feat += std::chrono::duration<double, std::milli>(t2 - t1).count();
        total += std::chrono::duration<double, std::milli>(t3 - t2).count() + std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::printf("model %s, %d runs\n", model.model_id().c_str(), repeat);
    std::printf("prepare   %8.2f ms\n", prep / repeat);
    if (model.kind() != app::ModelKind::Cnn) std::printf("features  %8.2f ms\n", feat / repeat);
    std::printf("predict   %8.2f ms (prepare + classify)\n", total / repeat);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Sky-image air quality grading and counterfactual rendering", "skycast"};
    cli.require_subcommand(1);
    cli.set_version_flag("--version", "skycast 0.1.0");
    std::function<int()> action;

    auto* ds = cli.add_subcommand("dataset", "Generate, split or balance a manifest");
    ds->require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = ds->add_subcommand("gen", "Write a synthetic sky corpus and its manifest");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--per-grade", gen.per_grade, "Images per grade")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--size", gen.size, "Square image size")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.seed, "Random seed");
    gen_cmd->add_option("--render-params", gen.params, "Render parameter JSON")->check(CLI::ExistingFile);
    gen_cmd->callback([&] { action = [&] { return run_gen(gen); }; });

    SplitArgs split;
    auto* split_cmd = ds->add_subcommand("split", "Stratified train/val/test split");
    split_cmd->add_option("--manifest", split.manifest)->required()->check(CLI::ExistingFile);
    split_cmd->add_option("--out", split.out, "Directory for split.jsonl and per-split manifests");
    split_cmd->add_option("--train", split.train);
    split_cmd->add_option("--val", split.val);
    split_cmd->add_option("--test", split.test);
    split_cmd->add_option("--seed", split.seed, "Random seed");
    split_cmd->callback([&] { action = [&] { return run_split(split); }; });

    BalanceArgs balance;
    auto* bal_cmd = ds->add_subcommand("balance", "Add augmented copies until every grade reaches the target");
    bal_cmd->add_option("--manifest", balance.manifest)->required()->check(CLI::ExistingFile);
    bal_cmd->add_option("--out", balance.out)->required();
    bal_cmd->add_option("--target", balance.target, "Per-grade count (0 = largest class)");
    bal_cmd->add_option("--seed", balance.seed, "Random seed");
    bal_cmd->callback([&] { action = [&] { return run_balance(balance); }; });

    TrainArgs train;
    auto* train_cmd = cli.add_subcommand("train", "Train a classifier on a manifest");
    train_cmd->add_option("--manifest", train.manifest)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--split", train.split, "Use only entries tagged with this split");
    train_cmd->add_option("--model", train.kind, "rf, knn or cnn")->check(CLI::IsMember({"rf", "knn", "cnn"}));
    train_cmd->add_option("--out", train.out, "Model file")->required();
    train_cmd->add_option("--seed", train.seed, "Random seed");
    train_cmd->add_option("--trees", train.trees)->check(CLI::PositiveNumber);
    train_cmd->add_option("--max-depth", train.max_depth, "0 = unlimited");
    train_cmd->add_option("--min-leaf", train.min_leaf)->check(CLI::PositiveNumber);
    train_cmd->add_option("--k", train.k, "Neighbours (odd)");
    train_cmd->add_option("--keep", train.keep, "Fraction of highest-variance features kept by knn")->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--arch", train.arch, "CNN architecture, e.g. C(6)(5)-S(2)");
    train_cmd->add_option("--input-size", train.input_size, "CNN input side")->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", train.epochs);
    train_cmd->add_option("--lr", train.lr);
    train_cmd->add_option("--momentum", train.momentum);
    train_cmd->add_option("--batch", train.batch);
    train_cmd->callback([&] { action = [&] { return run_train(train); }; });

    std::string eval_manifest, eval_split, eval_model;
    bool eval_json = false;
    auto* eval_cmd = cli.add_subcommand("eval", "Accuracy and macro F1 of a model on a manifest");
    eval_cmd->add_option("--manifest", eval_manifest)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", eval_split);
    eval_cmd->add_option("--model", eval_model)->required()->check(CLI::ExistingFile);
    eval_cmd->add_flag("--json", eval_json, "Print the full report");
    eval_cmd->callback([&] { action = [&] { return run_eval(eval_manifest, eval_split, eval_model, eval_json); }; });

    std::string pred_model, pred_image, pred_mask;
    bool pred_json = false;
    auto* pred_cmd = cli.add_subcommand("predict", "Grade one sky image");
    pred_cmd->add_option("--model", pred_model)->required()->check(CLI::ExistingFile);
    pred_cmd->add_option("--image", pred_image)->required()->check(CLI::ExistingFile);
    pred_cmd->add_option("--mask", pred_mask, "Sky mask image")->check(CLI::ExistingFile);
    pred_cmd->add_flag("--json", pred_json);
    pred_cmd->callback([&] { action = [&] { return run_predict(pred_model, pred_image, pred_mask, pred_json); }; });

    SynthArgs syn;
    auto* syn_cmd = cli.add_subcommand("synthesize", "Render the image under other grades");
    syn_cmd->add_option("--image", syn.image)->required()->check(CLI::ExistingFile);
    syn_cmd->add_option("--out", syn.out, "Output directory")->required();
    syn_cmd->add_option("--grades", syn.grades, "Target grades (default all)")->delimiter(',');
    syn_cmd->add_option("--source", syn.source, "Grade the input shows (default: predicted with --model, else Good)");
    syn_cmd->add_option("--model", syn.model)->check(CLI::ExistingFile);
    syn_cmd->add_option("--render-params", syn.params)->check(CLI::ExistingFile);
    syn_cmd->add_option("--seed", syn.seed, "Random seed");
    syn_cmd->callback([&] { action = [&] { return run_synthesize(syn); }; });

    ServeArgs serve;
    auto* serve_cmd = cli.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--config", serve.config, "Service JSON (default $SKYCAST_CONFIG)")->check(CLI::ExistingFile);
    serve_cmd->add_option("--model", serve.models, "Model file; repeatable, first is primary");
    serve_cmd->add_option("--host", serve.host);
    serve_cmd->add_option("--port", serve.port, "0 picks a free port")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--request-log", serve.log, "JSONL request log");
    auto* seed_opt = serve_cmd->add_option("--seed", serve.seed, "Seed for rendered variants");
    serve_cmd->callback([&] {
        serve.seed_set = seed_opt->count() > 0;
        action = [&] { return run_serve(serve); };
    });

    std::string bench_model, bench_image;
    int bench_repeat = 10;
    auto* bench_cmd = cli.add_subcommand("bench", "Time the predict path on one image");
    bench_cmd->add_option("--model", bench_model)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--image", bench_image)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--repeat", bench_repeat)->check(CLI::PositiveNumber);
    bench_cmd->callback([&] { action = [&] { return run_bench(bench_model, bench_image, bench_repeat); }; });

    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return cli.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return cli.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << cli.help();
        return kUsage;
    }

    try {
        return action();
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
