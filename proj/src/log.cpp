#include "adp2/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace adp2 {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ADP2_LOG_LEVEL");
    if (env == nullptr) return LogLevel::info;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

namespace {
void vlog(const char* tag, const char* fmt, va_list args) {
  std::fprintf(stderr, "[%s] ", tag);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
}
}  // namespace

void log_error(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  vlog("error", fmt, args);
  va_end(args);
}

void log_info(const char* fmt, ...) {
  if (log_level() < LogLevel::info) return;
  va_list args;
  va_start(args, fmt);
  vlog("info", fmt, args);
  va_end(args);
}

void log_debug(const char* fmt, ...) {
  if (log_level() < LogLevel::debug) return;
  va_list args;
  va_start(args, fmt);
  vlog("debug", fmt, args);
  va_end(args);
}

}  // namespace adp2
