#include <cctype>
#include <charconv>
#include <span>

#include <httplib.h>
#include <json.hpp>

#include "skycast/base64.hpp"
#include "skycast/error.hpp"
#include "skycast/log.hpp"
#include "skycast/synth.hpp"

namespace skycast::synth {

ParsedUrl parse_http_url(std::string_view url) {
    constexpr std::string_view kScheme = "http://";
    if (url.substr(0, kScheme.size()) != kScheme) {
        throw Error(ErrorCode::InvalidArgument, "backend endpoint must start with http://");
    }
    std::string_view rest = url.substr(kScheme.size());
    const auto slash = rest.find('/');
    std::string_view authority = rest.substr(0, slash);
    ParsedUrl out;
    out.scheme = "http";
    out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    const auto colon = authority.rfind(':');
    if (colon != std::string_view::npos) {
        const auto port_text = authority.substr(colon + 1);
        int port = 0;
        const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
        if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port < 1 || port > 65535) {
            throw Error(ErrorCode::InvalidArgument, "invalid port in backend endpoint");
        }
        out.port = port;
        authority = authority.substr(0, colon);
    }
    if (authority.empty()) throw Error(ErrorCode::InvalidArgument, "backend endpoint has no host");
    for (char c : authority) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) {
            throw Error(ErrorCode::InvalidArgument, "invalid host in backend endpoint");
        }
    }
    out.host = std::string(authority);
    return out;
}

BackendSlot BackendSlot::external(std::string endpoint, std::chrono::milliseconds timeout, int max_concurrency) {
    BackendSlot slot;
    slot.kind = Kind::External;
    slot.endpoint = std::move(endpoint);
    slot.timeout = timeout;
    slot.max_concurrency = max_concurrency;
    slot.validate();
    return slot;
}

void BackendSlot::validate() const {
    if (kind == Kind::Procedural) return;
    parse_http_url(endpoint);
    if (timeout.count() <= 0) throw Error(ErrorCode::InvalidArgument, "backend timeout must be positive");
    if (max_concurrency < 1 || max_concurrency > 1024) {
        throw Error(ErrorCode::InvalidArgument, "backend concurrency must be in [1, 1024]");
    }
}

ExternalBackend::ExternalBackend(const BackendSlot& slot)
    : url_(parse_http_url(slot.endpoint)), timeout_(slot.timeout), slots_(slot.max_concurrency) {}

ExternalBackend::~ExternalBackend() = default;

RasterImage ExternalBackend::render(const RasterImage& img, Grade target, std::string_view prompt) {
    nlohmann::json body = {{"prompt", prompt},
                           {"grade", aqi::grade_name(target)},
                           {"image", base64_encode(imaging::encode_png(img))}};

    httplib::Result res;
    {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<1024>& sem;
            ~Release() { sem.release(); }
        } release{slots_};
        httplib::Client client(url_.host, url_.port);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        res = client.Post(url_.path, body.dump(), "application/json");
    }

    if (!res) throw Error(ErrorCode::BackendError, "request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::BackendError, "backend returned HTTP " + std::to_string(res->status));
    RasterImage out;
    try {
        const auto* data = reinterpret_cast<const std::uint8_t*>(res->body.data());
        out = imaging::decode_image(std::span(data, res->body.size()));
    } catch (const Error& e) {
        throw Error(ErrorCode::BackendError, std::string("undecodable backend image: ") + e.what());
    }
    if (out.width != img.width || out.height != img.height) {
        throw Error(ErrorCode::BackendError, "backend image dimensions differ from the input");
    }
    if (out.channels != 3) throw Error(ErrorCode::BackendError, "backend returned a grayscale image");
    return out;
}

VariantRenderer::VariantRenderer(RenderParams params, BackendSlot slot)
    : params_(std::move(params)), slot_(std::move(slot)) {
    params_.validate();
    slot_.validate();
    if (slot_.kind == BackendSlot::Kind::External) backend_ = std::make_unique<ExternalBackend>(slot_);
}

VariantRenderer::~VariantRenderer() = default;

RenderOutcome VariantRenderer::render(const RasterImage& img, Grade target, Grade source, std::uint64_t seed) const {
    RenderOutcome outcome;
    if (backend_) {
        try {
            outcome.image = backend_->render(img, target, prompt_for_grade(target));
            outcome.external = true;
            return outcome;
        } catch (const Error& e) {
            outcome.fallback_reason = e.what();
            log_warning(std::string("external renderer failed, using procedural path: ") + e.what());
        }
    }
    outcome.image = render_variant(img, target, params_, seed, source);
    return outcome;
}

} // namespace skycast::synth
