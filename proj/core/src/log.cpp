#include "tensorjump/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace tensorjump::log {

namespace {
std::mutex g_mutex;
Sink g_sink;
std::atomic<int> g_level{static_cast<int>(Level::info)};
std::atomic<std::size_t> g_warnings{0};
std::string g_last_warning;

const char* tag(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warning";
    case Level::error: return "error";
  }
  return "?";
}
}  // namespace

void set_level(Level level) { g_level = static_cast<int>(level); }
Level level() { return static_cast<Level>(g_level.load()); }

void set_sink(Sink sink) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_sink = std::move(sink);
}

void write(Level lvl, std::string_view message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (lvl == Level::warn) {
    ++g_warnings;
    g_last_warning = std::string(message);
  }
  if (static_cast<int>(lvl) < g_level.load()) return;
  if (g_sink) {
    g_sink(lvl, message);
  } else {
    std::cerr << "[tensorjump " << tag(lvl) << "] " << message << '\n';
  }
}

std::size_t warning_count() { return g_warnings.load(); }

std::string last_warning() {
  std::lock_guard<std::mutex> lock(g_mutex);
  return g_last_warning;
}

}  // namespace tensorjump::log
