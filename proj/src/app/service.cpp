#include <atomic>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "skycast/base64.hpp"
#include "skycast/error.hpp"
#include "skycast/log.hpp"
#include "skycast/rng.hpp"
#include "skycast/service.hpp"

namespace skycast::app {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::string_view kVersion = "skycast 0.1.0";

HttpReply json_reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

HttpReply error_reply(int status, std::string_view code, std::string_view message) {
    return json_reply(status, {{"error", code}, {"message", message}});
}

// Opaque handle correlating a 500 response with the server-side log line.
std::string incident_id() {
    static std::atomic<std::uint64_t> counter{0};
    const auto now = static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
    const std::uint64_t v = mix_seed(now ^ mix_seed(counter.fetch_add(1)));
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string id(16, '0');
    for (int i = 0; i < 16; ++i) id[static_cast<std::size_t>(i)] = kDigits[(v >> (60 - 4 * i)) & 0xF];
    return id;
}

HttpReply internal_error(std::string_view route, std::string_view what) {
    const auto id = incident_id();
    log_warning("internal error " + id + " on " + std::string(route) + ": " + std::string(what));
    return json_reply(500, {{"error", "Internal"}, {"message", "internal error"}, {"id", id}});
}

// Status for failures caused by the uploaded image.
int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedImage:
        case ErrorCode::UnsupportedFormat:
        case ErrorCode::ZeroDimension:
        case ErrorCode::GrayscaleInput:
        case ErrorCode::InvalidArgument: return 400;
        case ErrorCode::TooLarge: return 413;
        case ErrorCode::NoSkyDetected: return 422;
        default: return 500;
    }
}

imaging::RasterImage decode_upload(std::string_view bytes, std::size_t limit) {
    if (bytes.empty()) throw Error(ErrorCode::MalformedImage, "empty upload");
    if (bytes.size() > limit) throw Error(ErrorCode::TooLarge, "upload exceeds " + std::to_string(limit) + " bytes");
    const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
    return imaging::decode_image(std::span(data, bytes.size()));
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json grade_json(Grade g) {
    const auto& info = aqi::grade_info(g);
    return {{"index", aqi::index_of(g)},
            {"name", info.name},
            {"id", aqi::grade_id(g)},
            {"color", info.color_hex},
            {"advice", info.advice},
            {"prompt", synth::prompt_for_grade(g)},
            {"aqi_lo", info.aqi_lo},
            {"aqi_hi", info.aqi_hi < 0 ? json(nullptr) : json(info.aqi_hi)}};
}

json feature_summary(const features::FeatureVector& fv, const features::GaborBank& bank) {
    json out = json::array();
    const auto moments = features::moments_by_filter(fv);
    for (std::size_t i = 0; i < moments.size(); ++i) {
        out.push_back({{"orientation_deg", bank.orientation_deg_of(i)},
                       {"frequency", bank.frequency_of(i)},
                       {"mean", moments[i].mean},
                       {"variance", moments[i].variance},
                       {"skewness", moments[i].skewness},
                       {"kurtosis", moments[i].kurtosis}});
    }
    return out;
}

std::string resolve_path(const std::string& p, const fs::path& base) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? p : (base / path).lexically_normal().string();
}

} // namespace

// --- config ------------------------------------------------------------------

void ServiceConfig::validate() const {
    if (model_paths.empty()) throw Error(ErrorCode::InvalidArgument, "service needs at least one model path");
    if (max_upload_bytes < kMinUploadBytes) throw Error(ErrorCode::InvalidArgument, "max upload must be >= 1 MiB");
    if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidArgument, "port out of range");
    if (request_timeout.count() <= 0) throw Error(ErrorCode::InvalidArgument, "request timeout must be positive");
    backend.validate();
}

ServiceConfig ServiceConfig::from_json(std::string_view text, const fs::path& base_dir) {
    static const std::vector<std::string> kKeys = {"host",    "port",        "models",     "render_params",
                                                   "backend", "max_upload_bytes", "request_log", "request_timeout_ms",
                                                   "seed"};
    ServiceConfig cfg;
    try {
        const json doc = json::parse(text);
        for (const auto& [key, value] : doc.items()) {
            if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
                throw Error(ErrorCode::ParseError, "unknown config key '" + key + "'");
            }
        }
        if (doc.contains("host")) cfg.host = doc.at("host").get<std::string>();
        if (doc.contains("port")) cfg.port = doc.at("port").get<int>();
        if (doc.contains("models")) {
            for (const auto& m : doc.at("models")) cfg.model_paths.push_back(resolve_path(m.get<std::string>(), base_dir));
        }
        if (doc.contains("render_params")) cfg.render_params_path = resolve_path(doc.at("render_params").get<std::string>(), base_dir);
        if (doc.contains("backend")) {
            const auto& b = doc.at("backend");
            const auto kind = b.at("kind").get<std::string>();
            if (kind == "external") {
                cfg.backend = synth::BackendSlot::external(
                    b.at("endpoint").get<std::string>(),
                    std::chrono::milliseconds(b.value("timeout_ms", std::int64_t{30000})), b.value("max_concurrency", 4));
            } else if (kind != "procedural") {
                throw Error(ErrorCode::ParseError, "backend kind must be 'procedural' or 'external'");
            }
        }
        if (doc.contains("max_upload_bytes")) cfg.max_upload_bytes = doc.at("max_upload_bytes").get<std::size_t>();
        if (doc.contains("request_log")) cfg.request_log_path = resolve_path(doc.at("request_log").get<std::string>(), base_dir);
        if (doc.contains("request_timeout_ms")) {
            cfg.request_timeout = std::chrono::milliseconds(doc.at("request_timeout_ms").get<std::int64_t>());
        }
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("service config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str(), path.parent_path());
}

// --- service -------------------------------------------------------------------

namespace {

std::vector<AnyModel> load_models(const ServiceConfig& cfg) {
    cfg.validate();
    std::vector<AnyModel> models;
    for (const auto& p : cfg.model_paths) models.push_back(load_model(p));
    return models;
}

} // namespace

Service::Service(ServiceConfig cfg) : Service(cfg, load_models(cfg)) {}

Service::Service(ServiceConfig cfg, std::vector<AnyModel> models) : cfg_(std::move(cfg)), models_(std::move(models)) {
    if (models_.empty()) throw Error(ErrorCode::InvalidArgument, "service needs at least one model");
    if (cfg_.max_upload_bytes < ServiceConfig::kMinUploadBytes) {
        throw Error(ErrorCode::InvalidArgument, "max upload must be >= 1 MiB");
    }
    auto params = cfg_.render_params_path ? synth::RenderParams::load(*cfg_.render_params_path)
                                          : synth::RenderParams::defaults();
    renderer_ = std::make_unique<synth::VariantRenderer>(std::move(params), cfg_.backend);
}

Service::~Service() = default;

const AnyModel* Service::select_model(std::string_view kind) const {
    if (kind.empty()) return &models_.front();
    for (const auto& m : models_) {
        if (model_kind_name(m.kind()) == kind || m.model_id() == kind) return &m;
    }
    return nullptr;
}

HttpReply Service::predict(std::string_view image_bytes, std::string_view model_kind) const {
    const AnyModel* model = select_model(model_kind);
    if (!model) return error_reply(400, "InvalidArgument", "no loaded model matches '" + std::string(model_kind) + "'");
    try {
        const auto img = decode_upload(image_bytes, cfg_.max_upload_bytes);
        const auto prepared = prepare_image(img);
        const auto fv = image_features(prepared, model->bank());
        const Prediction p = model->kind() == ModelKind::Cnn ? model->predict(prepared) : model->predict_features(fv);
        const auto& info = aqi::grade_info(p.grade);
        return json_reply(200, {{"grade", info.name},
                                {"grade_id", aqi::grade_id(p.grade)},
                                {"probabilities", p.probabilities},
                                {"aqi_color", info.color_hex},
                                {"advice", info.advice},
                                {"prompt", synth::prompt_for_grade(p.grade)},
                                {"feature_summary", feature_summary(fv, model->bank())},
                                {"model_id", model->model_id()}});
    } catch (const Error& e) {
        const int status = status_for(e.code());
        if (status == 500) return internal_error("/api/predict", e.what());
        return error_reply(status, to_string(e.code()), e.detail());
    } catch (const std::exception& e) {
        return internal_error("/api/predict", e.what());
    }
}

HttpReply Service::synthesize(std::string_view image_bytes, const std::vector<std::string>& grades,
                              std::string_view source) const {
    std::array<bool, aqi::kGradeCount> wanted{};
    for (const auto& name : grades) {
        const auto g = aqi::parse_grade(name);
        if (!g) return error_reply(400, "InvalidArgument", "unknown grade '" + name + "'");
        wanted[aqi::index_of(*g)] = true;
    }
    if (grades.empty()) wanted.fill(true);
    std::optional<Grade> source_grade;
    if (!source.empty()) {
        source_grade = aqi::parse_grade(source);
        if (!source_grade) return error_reply(400, "InvalidArgument", "unknown source grade '" + std::string(source) + "'");
    }
    try {
        const auto img = decode_upload(image_bytes, cfg_.max_upload_bytes);
        if (img.channels != 3) throw Error(ErrorCode::GrayscaleInput, "synthesis needs a color image");
        const auto prepared = prepare_image(img);
        const bool predicted = !source_grade;
        if (predicted) source_grade = models_.front().predict(prepared).grade;

        json variants = json::array();
        for (Grade g : aqi::kAllGrades) {
            if (!wanted[aqi::index_of(g)]) continue;
            const auto outcome = renderer_->render(prepared.image, g, *source_grade, derive_seed(cfg_.seed, aqi::index_of(g)));
            variants.push_back({{"grade", aqi::grade_name(g)},
                                {"grade_id", aqi::grade_id(g)},
                                {"prompt", synth::prompt_for_grade(g)},
                                {"color", aqi::grade_info(g).color_hex},
                                {"ssim", synth::ssim(prepared.image, outcome.image)},
                                {"renderer", outcome.external ? "external" : "procedural"},
                                {"image_png_base64", base64_encode(imaging::encode_png(outcome.image))}});
        }
        return json_reply(200, {{"source_grade", aqi::grade_name(*source_grade)},
                                {"source", predicted ? "predicted" : "request"},
                                {"width", prepared.image.width},
                                {"height", prepared.image.height},
                                {"variants", std::move(variants)}});
    } catch (const Error& e) {
        const int status = status_for(e.code());
        if (status == 500) return internal_error("/api/synthesize", e.what());
        return error_reply(status, to_string(e.code()), e.detail());
    } catch (const std::exception& e) {
        return internal_error("/api/synthesize", e.what());
    }
}

HttpReply Service::meta() const {
    json grades = json::array();
    for (Grade g : aqi::kAllGrades) grades.push_back(grade_json(g));
    json models = json::array();
    for (const auto& m : models_) models.push_back({{"id", m.model_id()}, {"kind", model_kind_name(m.kind())}});
    return json_reply(200, {{"version", kVersion},
                            {"model_id", models_.front().model_id()},
                            {"models", std::move(models)},
                            {"grades", std::move(grades)}});
}

void Service::log_request(std::string_view route, int status, std::chrono::steady_clock::time_point start) const {
    if (!cfg_.request_log_path) return;
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const std::string outcome = status < 400 ? "ok" : status < 500 ? "client_error" : "server_error";
    const json line = {{"ts", utc_timestamp()}, {"route", route}, {"status", status}, {"outcome", outcome}, {"latency_ms", ms}};
    std::lock_guard lock(log_mutex_);
    std::ofstream out(*cfg_.request_log_path, std::ios::app);
    if (out) out << line.dump() << '\n';
}

// --- http ----------------------------------------------------------------------

struct HttpServer::Impl {
    const Service& service;
    httplib::Server server;

    explicit Impl(const Service& s) : service(s) {}
};

namespace {

void send(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
}

// Grades arrive as a JSON array or a comma-separated list.
std::vector<std::string> split_grades(const std::string& text) {
    std::vector<std::string> out;
    if (text.empty()) return out;
    if (text.front() == '[') {
        for (const auto& g : json::parse(text)) out.push_back(g.get<std::string>());
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

} // namespace

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>(service)) {
    auto& svr = impl_->server;
    const auto& cfg = service.config();
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.request_timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.request_timeout - secs);
    svr.set_read_timeout(secs.count(), usecs.count());
    svr.set_write_timeout(secs.count(), usecs.count());
    svr.set_payload_max_length(cfg.max_upload_bytes);

    const Service* s = &service;
    svr.Post("/api/predict", [s](const httplib::Request& req, httplib::Response& res) {
        const auto start = std::chrono::steady_clock::now();
        HttpReply reply;
        if (req.is_multipart_form_data()) {
            reply = req.has_file("image") ? s->predict(req.get_file_value("image").content, req.get_param_value("model"))
                                          : error_reply(400, "MalformedImage", "multipart field 'image' is missing");
        } else {
            reply = s->predict(req.body, req.get_param_value("model"));
        }
        send(res, reply);
        s->log_request("/api/predict", reply.status, start);
    });

    svr.Post("/api/synthesize", [s](const httplib::Request& req, httplib::Response& res) {
        const auto start = std::chrono::steady_clock::now();
        HttpReply reply;
        try {
            if (req.is_multipart_form_data()) {
                if (!req.has_file("image")) {
                    reply = error_reply(400, "MalformedImage", "multipart field 'image' is missing");
                } else {
                    const auto grades = req.has_file("grades") ? split_grades(req.get_file_value("grades").content)
                                                               : split_grades(req.get_param_value("grades"));
                    const auto source = req.has_file("source") ? req.get_file_value("source").content
                                                               : req.get_param_value("source");
                    reply = s->synthesize(req.get_file_value("image").content, grades, source);
                }
            } else {
                const json body = json::parse(req.body);
                std::vector<std::string> grades;
                if (body.contains("grades")) grades = body.at("grades").get<std::vector<std::string>>();
                const auto bytes = base64_decode(body.at("image").get<std::string>());
                reply = s->synthesize(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), grades,
                                      body.value("source", std::string()));
            }
        } catch (const json::exception& e) {
            reply = error_reply(400, "ParseError", e.what());
        } catch (const Error& e) {
            reply = error_reply(400, to_string(e.code()), e.detail());
        }
        send(res, reply);
        s->log_request("/api/synthesize", reply.status, start);
    });

    svr.Get("/api/meta", [s](const httplib::Request&, httplib::Response& res) {
        const auto start = std::chrono::steady_clock::now();
        const auto reply = s->meta();
        send(res, reply);
        s->log_request("/api/meta", reply.status, start);
    });

    svr.Get("/healthz", [s](const httplib::Request&, httplib::Response& res) {
        const auto start = std::chrono::steady_clock::now();
        res.set_content("ok", "text/plain");
        s->log_request("/healthz", 200, start);
    });

    // Fills bodies for statuses httplib produces itself (404, 413, ...).
    svr.set_error_handler([s](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto code = res.status == 413 ? "TooLarge" : res.status == 404 ? "NotFound" : "HttpError";
        send(res, error_reply(res.status, code, httplib::status_message(res.status)));
        s->log_request(req.path, res.status, std::chrono::steady_clock::now());
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() {
    if (!impl_->server.listen_after_bind()) throw Error(ErrorCode::IoError, "server stopped with an error");
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

} // namespace skycast::app
