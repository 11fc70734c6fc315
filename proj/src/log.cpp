#include "kmstn/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace kmstn::log {

namespace {

std::mutex g_mutex;
std::atomic<int> g_min_level{static_cast<int>(Level::info)};

void default_sink(Level level, std::string_view component, std::string_view message) {
    if (level < Level::warn) return;
    std::cerr << (level == Level::warn ? "[warn] " : "[error] ") << component << ": " << message
              << '\n';
}

Sink& sink_ref() {
    static Sink sink = default_sink;
    return sink;
}

}  // namespace

Sink set_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    Sink previous = std::move(sink_ref());
    sink_ref() = sink ? std::move(sink) : Sink(default_sink);
    return previous;
}

void set_min_level(Level level) { g_min_level = static_cast<int>(level); }

void write(Level level, std::string_view component, std::string_view message) {
    if (static_cast<int>(level) < g_min_level.load()) return;
    std::lock_guard lock(g_mutex);
    sink_ref()(level, component, message);
}

}  // namespace kmstn::log
