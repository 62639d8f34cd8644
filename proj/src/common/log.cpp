#include "skycast/log.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <mutex>

namespace skycast {

namespace {

std::mutex g_log_mutex;

void emit(std::string_view level, std::string_view message) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::lock_guard lock(g_log_mutex);
    std::cerr << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << level << ' ' << message << '\n';
}

} // namespace

void log_warning(std::string_view message) { emit("WARN", message); }
void log_info(std::string_view message) { emit("INFO", message); }

} // namespace skycast
