#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>

namespace tensorjump::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

using Sink = std::function<void(Level, std::string_view)>;

void set_level(Level level);
Level level();
/// Replaces the sink (default: stderr). Passing an empty function restores it.
void set_sink(Sink sink);

void write(Level level, std::string_view message);
inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

/// Process-wide count of warnings emitted so far (tests use the delta).
std::size_t warning_count();
std::string last_warning();

}  // namespace tensorjump::log
