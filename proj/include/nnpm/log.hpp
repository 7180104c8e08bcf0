#ifndef NNPM_LOG_HPP
#define NNPM_LOG_HPP

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace nnpm {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from NNPM_LOG_LEVEL (error|info|debug); default info.
inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("NNPM_LOG_LEVEL");
        if (env == nullptr) return LogLevel::kInfo;
        if (std::strcmp(env, "error") == 0) return LogLevel::kError;
        if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
        return LogLevel::kInfo;
    }();
    return level;
}

// Diagnostics go to stderr; stdout is reserved for command summaries.
inline void log_at(LogLevel lvl, const std::string& msg) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    const char* tag = lvl == LogLevel::kError ? "error" : (lvl == LogLevel::kInfo ? "info" : "debug");
    std::fprintf(stderr, "[nnpm %s] %s\n", tag, msg.c_str());
}

inline void log_error(const std::string& msg) { log_at(LogLevel::kError, msg); }
inline void log_info(const std::string& msg) { log_at(LogLevel::kInfo, msg); }
inline void log_debug(const std::string& msg) { log_at(LogLevel::kDebug, msg); }

}  // namespace nnpm

#endif
