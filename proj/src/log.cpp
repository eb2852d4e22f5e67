#include "mixem/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace mixem::log {
namespace {

Level level_from_env() {
  const char* env = std::getenv("MIXEM_LOG");
  if (env == nullptr) return Level::error;
  const std::string value(env);
  if (value == "debug") return Level::debug;
  if (value == "info") return Level::info;
  return Level::error;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(level_from_env())};
  return lvl;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

const char* tag(Level l) {
  switch (l) {
    case Level::error: return "error";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "?";
}

}  // namespace

Level level() { return static_cast<Level>(current().load()); }

void set_level(Level l) { current().store(static_cast<int>(l)); }

void write(Level l, const std::string& message) {
  if (static_cast<int>(l) > current().load()) return;
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[mixem " << tag(l) << "] " << message << '\n';
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[mixem warning] " << message << '\n';
}

}  // namespace mixem::log
