#pragma once

#include <string_view>

namespace csi::log {

enum class Level { debug, info, warn, error, off };

void set_level(Level level);
Level level();
// Throws std::invalid_argument on an unknown name.
Level parse_level(std::string_view name);

void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

}  // namespace csi::log
