#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace gradsdf::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// GRADSDF_LOG_LEVEL = error | warn | info | debug (default info).
inline Level threshold() {
    static const Level level = [] {
        const char* env = std::getenv("GRADSDF_LOG_LEVEL");
        if (!env) return Level::Info;
        if (std::strcmp(env, "error") == 0) return Level::Error;
        if (std::strcmp(env, "warn") == 0) return Level::Warn;
        if (std::strcmp(env, "debug") == 0) return Level::Debug;
        return Level::Info;
    }();
    return level;
}

inline void write(Level level, const std::string& msg) {
    if (level > threshold()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[%s] %s\n", names[int(level)], msg.c_str());
}

inline void error(const std::string& msg) { write(Level::Error, msg); }
inline void warn(const std::string& msg) { write(Level::Warn, msg); }
inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void debug(const std::string& msg) { write(Level::Debug, msg); }

}  // namespace gradsdf::log
