#pragma once

#include <sstream>
#include <string>

namespace mixem::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Current level, read once from MIXEM_LOG (error|info|debug); defaults to error.
Level level();
void set_level(Level level);

void write(Level level, const std::string& message);
/// Shown at every level, tagged as a warning.
void warn(const std::string& message);

inline void error(const std::string& m) { write(Level::error, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void debug(const std::string& m) { write(Level::debug, m); }

}  // namespace mixem::log
