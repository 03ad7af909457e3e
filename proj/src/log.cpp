#include "bayesnf/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace bayesnf {

namespace {
std::atomic<bool> g_enabled{true};
std::mutex g_mutex;
}  // namespace

void warn(std::string_view message) {
  if (!g_enabled.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_enabled.store(enabled); }

}  // namespace bayesnf
