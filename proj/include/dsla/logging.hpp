// stderr logging gated by the DSLA_LOG environment variable
// (error | warn | info | debug; default warn).
#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace dsla {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("DSLA_LOG");
        if (!env) return LogLevel::Warn;
        const std::string s(env);
        if (s == "error") return LogLevel::Error;
        if (s == "info") return LogLevel::Info;
        if (s == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

inline void log_line(LogLevel lvl, const std::string& msg) {
    if (lvl > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[dsla:" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

inline void log_error(const std::string& m) { log_line(LogLevel::Error, m); }
inline void log_warn(const std::string& m) { log_line(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log_line(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_line(LogLevel::Debug, m); }

}  // namespace dsla
