#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "skycast/pipeline.hpp"
#include "skycast/synth.hpp"

namespace skycast::app {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    /// The first model serves /api/predict; the others can be picked with
    /// ?model=<kind>.
    std::vector<std::string> model_paths;
    std::optional<std::string> render_params_path;
    synth::BackendSlot backend = synth::BackendSlot::procedural();
    std::size_t max_upload_bytes = 10u << 20;
    std::optional<std::string> request_log_path;
    std::chrono::milliseconds request_timeout{30000};
    std::uint64_t seed = 0;  ///< base seed for rendered variants

    static constexpr std::size_t kMinUploadBytes = 1u << 20;

    void validate() const;
    static ServiceConfig from_json(std::string_view text, const std::filesystem::path& base_dir = {});
    static ServiceConfig load(const std::filesystem::path& path);
};

/// Status code plus JSON body.
struct HttpReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Request handling independent of the socket layer. Every handler is const
/// and touches only immutable state, except the request log which is
/// serialized internally.
class Service {
  public:
    explicit Service(ServiceConfig cfg);
    Service(ServiceConfig cfg, std::vector<AnyModel> models);
    ~Service();

    HttpReply predict(std::string_view image_bytes, std::string_view model_kind = {}) const;
    /// `grades` holds grade names or identifiers; empty means all five. The
    /// input's own grade is the primary model's prediction unless `source`
    /// names one.
    HttpReply synthesize(std::string_view image_bytes, const std::vector<std::string>& grades,
                         std::string_view source = {}) const;
    HttpReply meta() const;

    const ServiceConfig& config() const { return cfg_; }
    const AnyModel& primary_model() const { return models_.front(); }

    void log_request(std::string_view route, int status, std::chrono::steady_clock::time_point start) const;

  private:
    const AnyModel* select_model(std::string_view kind) const;

    ServiceConfig cfg_;
    std::vector<AnyModel> models_;
    std::unique_ptr<synth::VariantRenderer> renderer_;
    mutable std::mutex log_mutex_;
};

/// HTTP front end over a Service.
class HttpServer {
  public:
    explicit HttpServer(const Service& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace skycast::app
