#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace kmstn::log {

enum class Level { debug = 0, info, warn, error };

using Sink = std::function<void(Level, std::string_view component, std::string_view message)>;

/// Replaces the process-wide sink; returns the previous one. The default
/// sink writes warnings and errors to stderr.
Sink set_sink(Sink sink);
void set_min_level(Level level);

void write(Level level, std::string_view component, std::string_view message);

inline void debug(std::string_view c, std::string_view m) { write(Level::debug, c, m); }
inline void info(std::string_view c, std::string_view m) { write(Level::info, c, m); }
inline void warn(std::string_view c, std::string_view m) { write(Level::warn, c, m); }
inline void error(std::string_view c, std::string_view m) { write(Level::error, c, m); }

}  // namespace kmstn::log
