#pragma once

#include <string_view>

namespace fdot::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold from the FDOT_LOG environment variable
// (error | warn | info | debug); defaults to warn.
Level threshold();
void set_threshold(Level level);
bool enabled(Level level);
void write(Level level, std::string_view message);

inline void error(std::string_view m) { write(Level::Error, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void debug(std::string_view m) { write(Level::Debug, m); }

}  // namespace fdot::log
