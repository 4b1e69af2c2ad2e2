#pragma once

#include <functional>
#include <iostream>
#include <string>

namespace hlog {

/// Diagnostics go to standard error; artifacts never do. Tests may swap the
/// sink to capture warnings.
inline std::function<void(const std::string&)>& log_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& line) {
    std::cerr << line << '\n';
  };
  return sink;
}

inline void log_info(const std::string& msg) { log_sink()("[info] " + msg); }
inline void log_warning(const std::string& msg) { log_sink()("[warn] " + msg); }

}  // namespace hlog
