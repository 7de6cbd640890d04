#include "fdot/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace fdot::log {

namespace {

Level from_env() {
  const char* env = std::getenv("FDOT_LOG");
  if (!env) return Level::Warn;
  const std::string v(env);
  if (v == "error") return Level::Error;
  if (v == "info") return Level::Info;
  if (v == "debug") return Level::Debug;
  return Level::Warn;
}

std::atomic<int>& current() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

constexpr std::string_view kNames[] = {"error", "warn", "info", "debug"};

}  // namespace

Level threshold() { return static_cast<Level>(current().load()); }
void set_threshold(Level level) { current().store(static_cast<int>(level)); }
bool enabled(Level level) { return static_cast<int>(level) <= current().load(); }

void write(Level level, std::string_view message) {
  if (!enabled(level)) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[fdot " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace fdot::log
