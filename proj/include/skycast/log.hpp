#pragma once

#include <string_view>

namespace skycast {

/// Timestamped single-line message on stderr; safe to call from any thread.
void log_warning(std::string_view message);
void log_info(std::string_view message);

} // namespace skycast
