#include "meshgen/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string_view>

namespace meshgen::log {

namespace {

Level from_env() {
  const char* v = std::getenv("MESHGEN_LOG");
  if (!v) return Level::Warn;
  const std::string_view s(v);
  if (s == "error") return Level::Error;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  return Level::Warn;
}

Level& current() {
  static Level l = from_env();
  return l;
}

std::mutex g_mutex;

}  // namespace

Level level() { return current(); }
void set_level(Level l) { current() = l; }

void write(Level l, const std::string& message) {
  static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(g_mutex);
  std::fprintf(stderr, "[%s] %s\n", kNames[static_cast<int>(l)], message.c_str());
}

}  // namespace meshgen::log
