#include <doctest.h>

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <sys/wait.h>

#include <httplib.h>
#include <json.hpp>

#include "skycast/base64.hpp"
#include "skycast/error.hpp"
#include "skycast/pipeline.hpp"
#include "skycast/rng.hpp"
#include "skycast/service.hpp"
#include "skycast/synth.hpp"
#include "support.hpp"

using namespace skycast;
using namespace skycast::app;
using nlohmann::json;
using skytest::code_of;

namespace {

namespace fs = std::filesystem;

struct Fixture {
    fs::path dir;
    std::vector<dataset::ManifestEntry> entries;
    std::optional<AnyModel> rf;
};

// One small synthetic corpus and forest shared by every case in this file.
Fixture& fixture() {
    static Fixture f = [] {
        Fixture fx;
        fx.dir = skytest::scratch_dir("app");
        dataset::SyntheticSkyConfig cfg;
        cfg.images_per_grade = 8;
        cfg.image_size = 96;
        cfg.seed = 31;
        fx.entries = dataset::generate_synthetic_dataset(cfg, fx.dir / "corpus");
        TrainOptions opts;
        opts.forest.n_trees = 30;
        opts.forest.seed = 4;
        fx.rf = train_model(fx.entries, opts).model;
        save_model(*fx.rf, fx.dir / "rf.model");
        return fx;
    }();
    return f;
}

std::string png_bytes(const RasterImage& img) {
    const auto v = imaging::encode_png(img);
    return {v.begin(), v.end()};
}

RasterImage held_out_sky(Grade g, std::uint64_t seed) {
    auto img = synth::render_variant(synth::render_base_sky(120, seed), g, synth::RenderParams::defaults(), seed);
    for (double& v : img.pixels) v = imaging::quantize(v) / 255.0;
    return img;
}

ServiceConfig config_for_tests() {
    ServiceConfig cfg;
    cfg.model_paths = {(fixture().dir / "rf.model").string()};
    cfg.seed = 12;
    return cfg;
}

const Service& service() {
    static Service s(config_for_tests());
    return s;
}

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(SKYCAST_CLI_PATH) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

double parse_double(const std::string& s) {
    double v = -1;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

} // namespace

TEST_CASE("prepare_image: working size, grayscale replication and errors") {
    const auto sky = synth::render_base_sky(64, 2);
    const auto p = prepare_image(sky);
    CHECK(p.image.width == imaging::kWorkingSize);
    CHECK(p.image.height == imaging::kWorkingSize);
    CHECK(p.mask.width == imaging::kWorkingSize);
    CHECK(p.mask.count() > 0);
    RasterImage gray(50, 40, 1, 0.8);
    const auto pg = prepare_image(gray);
    CHECK(pg.image.channels == 3);
    CHECK(pg.image.at(10, 10, 0) == pg.image.at(10, 10, 2));
    CHECK(code_of([] { prepare_image(skytest::solid(30, 30, 0.05, 0.05, 0.05)); }) == ErrorCode::NoSkyDetected);
    CHECK(code_of([&] { prepare_image(sky, imaging::SkyMask(64, 64, false)); }) == ErrorCode::NoSkyDetected);
    // A supplied mask wins over the colour rule, even on a dark frame.
    const auto forced = prepare_image(skytest::solid(30, 30, 0.05, 0.05, 0.05), imaging::SkyMask(30, 30, true));
    CHECK(forced.mask.count() == static_cast<std::size_t>(imaging::kWorkingSize * imaging::kWorkingSize));
}

TEST_CASE("model wrapping, ids and persistence") {
    const auto& rf = *fixture().rf;
    CHECK(rf.kind() == ModelKind::RandomForest);
    CHECK(rf.model_id().rfind("rf-", 0) == 0);
    CHECK(rf.model_id() == make_model_id(ModelKind::RandomForest, rf.serialize()));
    const auto back = load_model(fixture().dir / "rf.model");
    CHECK(back.model_id() == rf.model_id());
    CHECK(back.serialize() == rf.serialize());
    CHECK(code_of([] { parse_model("garbage\n"); }) == ErrorCode::ParseError);
    const auto img = held_out_sky(Grade::Moderate, 77);
    const auto direct = rf.predict_features(image_features(prepare_image(img), rf.bank()));
    CHECK(predict_image(rf, img).probabilities == direct.probabilities);
}

TEST_CASE("train and evaluate helpers") {
    const auto& fx = fixture();
    const auto report = evaluate_model(*fx.rf, fx.entries);
    CHECK(report.total == fx.entries.size());
    CHECK(report.accuracy > 0.9);
    TrainOptions knn;
    knn.kind = ModelKind::Knn;
    const auto k = train_model(fx.entries, knn).model;
    CHECK(k.kind() == ModelKind::Knn);
    const auto& km = std::get<classify::KnnModel>(k.get());
    CHECK(km.columns.size() == 24);
    TrainOptions cnn;
    cnn.kind = ModelKind::Cnn;
    cnn.cnn_arch = "C(2)(5)-S(4)";
    cnn.cnn_input_size = 32;
    cnn.cnn.epochs = 2;
    const auto c = train_model(fx.entries, cnn);
    CHECK(c.model.kind() == ModelKind::Cnn);
    CHECK(c.loss_history.size() == 2);
    CHECK(code_of([&] { c.model.predict_features(features::FeatureVector{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("service config: parsing, resolution and validation") {
    const auto cfg = ServiceConfig::from_json(
        R"({"host":"0.0.0.0","port":9000,"models":["m/rf.model","/abs/cnn.model"],"render_params":"p.json",
            "backend":{"kind":"external","endpoint":"http://gen:7000/render","timeout_ms":1500,"max_concurrency":2},
            "max_upload_bytes":2097152,"request_log":"logs/req.jsonl","request_timeout_ms":5000,"seed":8})",
        "/etc/skycast");
    CHECK(cfg.host == "0.0.0.0");
    CHECK(cfg.port == 9000);
    CHECK(cfg.model_paths == std::vector<std::string>{"/etc/skycast/m/rf.model", "/abs/cnn.model"});
    CHECK(cfg.render_params_path == std::optional<std::string>("/etc/skycast/p.json"));
    CHECK(cfg.backend.kind == synth::BackendSlot::Kind::External);
    CHECK(cfg.backend.timeout == std::chrono::milliseconds(1500));
    CHECK(cfg.request_log_path == std::optional<std::string>("/etc/skycast/logs/req.jsonl"));
    CHECK(cfg.seed == 8);
    CHECK(code_of([] { ServiceConfig::from_json(R"({"models":["a"],"colour":1})"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { ServiceConfig::from_json(R"({"port":80})"); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { ServiceConfig::from_json(R"({"models":["a"],"max_upload_bytes":1000})"); }) ==
          ErrorCode::InvalidArgument);
    CHECK(code_of([] { ServiceConfig::from_json(R"({"models":["a"],"port":70000})"); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { ServiceConfig::from_json(R"({"models":["a"],"backend":{"kind":"magic"}})"); }) ==
          ErrorCode::ParseError);
    CHECK(code_of([] { ServiceConfig::from_json("{"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { ServiceConfig::load("/nonexistent/skycast.json"); }) == ErrorCode::IoError);
    auto small = config_for_tests();
    small.max_upload_bytes = 1024;
    CHECK(code_of([&] { Service s(small, {*fixture().rf}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { Service s(config_for_tests(), {}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("service predict: response contract and replay") {
    const auto& svc = service();
    const auto img = held_out_sky(Grade::Good, 501);
    const auto bytes = png_bytes(img);
    const auto reply = svc.predict(bytes);
    REQUIRE(reply.status == 200);
    const auto body = json::parse(reply.body);
    CHECK(body.at("grade") == "Good");
    CHECK(body.at("grade_id") == "Good");
    CHECK(body.at("aqi_color") == "#00E400");
    CHECK(body.at("advice") == std::string(aqi::grade_info(Grade::Good).advice));
    CHECK(body.at("prompt") == "clear blue sky");
    CHECK(body.at("model_id") == fixture().rf->model_id());
    double sum = 0;
    classify::ClassVector probs{};
    for (std::size_t i = 0; i < 5; ++i) sum += probs[i] = body.at("probabilities").at(i).get<double>();
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(classify::severity_argmax(probs) == 0);
    REQUIRE(body.at("feature_summary").size() == 12);
    CHECK(body.at("feature_summary").at(4).at("orientation_deg") == 45.0);
    CHECK(body.at("feature_summary").at(4).at("frequency") == doctest::Approx(0.10));
    // Replay: same bytes, same answer, equal to the library path.
    CHECK(svc.predict(bytes).body == reply.body);
    const auto lib = predict_image(*fixture().rf, imaging::decode_image(std::span(
                                                      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size())));
    CHECK(probs == lib.probabilities);
    for (auto g : {Grade::UnhealthySensitive, Grade::VeryUnhealthy}) {
        const auto b = png_bytes(held_out_sky(g, 600 + aqi::index_of(g)));
        const auto r = json::parse(svc.predict(b).body);
        const auto grade = aqi::parse_grade(r.at("grade").get<std::string>());
        REQUIRE(grade.has_value());
        CHECK(r.at("aqi_color") == std::string(aqi::grade_info(*grade).color_hex));
        CHECK(r.at("grade") == std::string(aqi::grade_name(predict_image(*fixture().rf, imaging::decode_image(std::span(
            reinterpret_cast<const std::uint8_t*>(b.data()), b.size()))).grade)));
    }
}

TEST_CASE("service predict: error statuses") {
    const auto& svc = service();
    auto status_and_code = [&](const std::string& bytes, std::string_view model = {}) {
        const auto r = svc.predict(bytes, model);
        return std::make_pair(r.status, json::parse(r.body).value("error", std::string()));
    };
    CHECK(status_and_code("") == std::make_pair(400, std::string("MalformedImage")));
    CHECK(status_and_code("definitely not an image").first == 400);
    CHECK(status_and_code("GIF89a\x01\x00\x01\x00").first == 400);
    CHECK(status_and_code(png_bytes(skytest::solid(40, 40, 0.03, 0.03, 0.05))) ==
          std::make_pair(422, std::string("NoSkyDetected")));
    CHECK(status_and_code(png_bytes(held_out_sky(Grade::Good, 1)), "cnn").first == 400);
    CHECK(status_and_code(png_bytes(held_out_sky(Grade::Good, 1)), "rf").first == 200);
    // Grayscale is graded after replication.
    CHECK(svc.predict(png_bytes(RasterImage(40, 40, 1, 0.85))).status == 200);
}

TEST_CASE("service synthesize: variants, SSIM and bad requests") {
    const auto& svc = service();
    const auto img = held_out_sky(Grade::Good, 702);
    const auto bytes = png_bytes(img);
    const auto all = svc.synthesize(bytes, {});
    REQUIRE(all.status == 200);
    const auto body = json::parse(all.body);
    REQUIRE(body.at("variants").size() == 5);
    // Variants are rendered at working size from the predicted source grade.
    const auto prepared = prepare_image(img).image;
    const auto source = aqi::parse_grade(body.at("source_grade").get<std::string>());
    REQUIRE(source.has_value());
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& v = body.at("variants").at(i);
        const auto g = aqi::grade_from_index(i);
        CHECK(v.at("grade") == std::string(aqi::grade_name(g)));
        CHECK(v.at("prompt") == std::string(synth::prompt_for_grade(g)));
        CHECK(v.at("color") == std::string(aqi::grade_info(g).color_hex));
        CHECK(v.at("renderer") == "procedural");
        const auto out = imaging::decode_image(base64_decode(v.at("image_png_base64").get<std::string>()));
        const auto want = synth::render_variant(prepared, g, synth::RenderParams::defaults(), derive_seed(12, i), *source);
        REQUIRE(out.width == imaging::kWorkingSize);
        for (std::size_t k = 0; k < out.pixels.size(); ++k)
            CHECK(out.pixels[k] == imaging::quantize(want.pixels[k]) / 255.0);
        CHECK(v.at("ssim").get<double>() == synth::ssim(prepared, want));
    }
    CHECK(body.at("width") == imaging::kWorkingSize);

    const auto good = json::parse(svc.synthesize(bytes, {"Good"}, "Good").body);
    CHECK(good.at("source") == "request");
    CHECK(good.at("variants").at(0).at("ssim").get<double>() >= 0.95);
    const auto two = json::parse(svc.synthesize(bytes, {"VeryUnhealthy", "Moderate"}).body);
    REQUIRE(two.at("variants").size() == 2);
    CHECK(two.at("variants").at(0).at("grade") == "Moderate");
    CHECK(two.at("source") == "predicted");

    CHECK(svc.synthesize(bytes, {"Hazardous"}).status == 400);
    CHECK(svc.synthesize(bytes, {"Good"}, "Purple").status == 400);
    CHECK(svc.synthesize("", {"Good"}).status == 400);
    const auto gray = svc.synthesize(png_bytes(RasterImage(30, 30, 1, 0.7)), {"Good"}, "Good");
    CHECK(gray.status == 400);
    CHECK(json::parse(gray.body).at("error") == "GrayscaleInput");
    CHECK(svc.synthesize(bytes, {"Unhealthy"}, "Good").body == svc.synthesize(bytes, {"Unhealthy"}, "Good").body);
}

TEST_CASE("service meta: catalog matches the banding") {
    const auto body = json::parse(service().meta().body);
    CHECK(body.at("model_id") == fixture().rf->model_id());
    CHECK(body.at("version").get<std::string>().rfind("skycast ", 0) == 0);
    REQUIRE(body.at("grades").size() == 5);
    int expect_lo = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& g = body.at("grades").at(i);
        const auto grade = aqi::grade_from_index(i);
        CHECK(g.at("index") == i);
        CHECK(g.at("color") == std::string(aqi::grade_info(grade).color_hex));
        CHECK(g.at("aqi_lo") == expect_lo);
        CHECK(aqi::grade_of_aqi(expect_lo) == grade);
        if (i < 4) {
            const int hi = g.at("aqi_hi").get<int>();
            CHECK(aqi::grade_of_aqi(hi) == grade);
            CHECK(aqi::grade_of_aqi(hi + 1) != grade);
            expect_lo = hi + 1;
        } else {
            CHECK(g.at("aqi_hi").is_null());
        }
    }
}

TEST_CASE("http server: routes, limits and request log") {
    auto cfg = config_for_tests();
    cfg.request_log_path = (fixture().dir / "requests.jsonl").string();
    fs::remove(*cfg.request_log_path);
    Service svc(cfg, {*fixture().rf});
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    std::thread th([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(30, 0);
    for (int i = 0; i < 100; ++i) {
        if (cli.Get("/healthz")) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    auto health = cli.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->body == "ok");
    auto meta = cli.Get("/api/meta");
    REQUIRE(meta);
    CHECK(json::parse(meta->body).at("grades").size() == 5);

    const auto bytes = png_bytes(held_out_sky(Grade::Good, 501));
    httplib::MultipartFormDataItems form = {{"image", bytes, "sky.png", "image/png"}};
    auto pred = cli.Post("/api/predict", form);
    REQUIRE(pred);
    CHECK(pred->status == 200);
    CHECK(pred->body == svc.predict(bytes).body);
    auto raw = cli.Post("/api/predict", bytes, "image/png");
    REQUIRE(raw);
    CHECK(raw->body == pred->body);
    auto empty = cli.Post("/api/predict", "", "application/octet-stream");
    REQUIRE(empty);
    CHECK(empty->status == 400);

    httplib::MultipartFormDataItems synth_form = {{"image", bytes, "sky.png", "image/png"},
                                                  {"grades", "Good,VeryUnhealthy", "", ""},
                                                  {"source", "Good", "", ""}};
    auto syn = cli.Post("/api/synthesize", synth_form);
    REQUIRE(syn);
    CHECK(syn->status == 200);
    CHECK(json::parse(syn->body).at("variants").size() == 2);
    const json jreq = {{"image", base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()))},
                       {"grades", {"Hazardous"}}};
    auto bad = cli.Post("/api/synthesize", jreq.dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto missing = cli.Get("/nope");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body).at("error") == "NotFound");
    const std::string huge(cfg.max_upload_bytes + 1024, 'x');
    auto big = cli.Post("/api/predict", huge, "image/png");
    REQUIRE(big);
    CHECK(big->status == 413);

    server.stop();
    th.join();
    std::ifstream log(*cfg.request_log_path);
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto rec = json::parse(line);
        CHECK(rec.contains("ts"));
        CHECK(rec.contains("latency_ms"));
        CHECK(rec.at("outcome").is_string());
        ++lines;
    }
    CHECK(lines >= 9);
}

TEST_CASE("cli: exit codes, predict output and eval equality") {
    CHECK(run_cli("").code == 1);
    CHECK(run_cli("frobnicate").code == 1);
    CHECK(run_cli("eval --model /nonexistent").code == 1);
    CHECK(run_cli("--help").code == 0);

    const auto& fx = fixture();
    const auto manifest = (fx.dir / "corpus" / "manifest.jsonl").string();
    const auto model = (fx.dir / "rf.model").string();
    const auto r = run_cli("eval --manifest " + manifest + " --model " + model);
    REQUIRE(r.code == 0);
    std::istringstream ss(r.out);
    std::string key, samples, acc, f1;
    ss >> key >> samples >> key >> acc >> key >> f1;
    const auto lib = evaluate_model(load_model(model), dataset::load_manifest(manifest));
    CHECK(std::stoul(samples) == lib.total);
    CHECK(parse_double(acc) == lib.accuracy);
    CHECK(parse_double(f1) == lib.macro_f1);

    imaging::save_png(held_out_sky(Grade::Good, 501), fx.dir / "sky.png");
    const auto p = run_cli("predict --model " + model + " --image " + (fx.dir / "sky.png").string());
    CHECK(p.code == 0);
    CHECK(p.out.find("Good") != std::string::npos);
    CHECK(p.out.find("#00E400") != std::string::npos);
    imaging::save_png(skytest::solid(30, 30, 0.02, 0.02, 0.02), fx.dir / "night.png");
    CHECK(run_cli("predict --model " + model + " --image " + (fx.dir / "night.png").string()).code == 2);
    std::ofstream(fx.dir / "broken.model") << "SKYCAST-RF v1\n{";
    CHECK(run_cli("predict --model " + (fx.dir / "broken.model").string() + " --image " + (fx.dir / "sky.png").string())
              .code == 2);
}
