#pragma once

#include <cstdarg>

namespace adp2 {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Level comes from ADP2_LOG_LEVEL (error|info|debug), read once. Default info.
LogLevel log_level();

void log_error(const char* fmt, ...);
void log_info(const char* fmt, ...);
void log_debug(const char* fmt, ...);

}  // namespace adp2
