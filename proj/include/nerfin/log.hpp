// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

namespace nerfin {

enum class LogLevel { info, warning, error };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (stderr by default); returns the old one.
LogSink set_log_sink(LogSink sink);

void log(LogLevel level, const std::string& message);

inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warning(const std::string& m) { log(LogLevel::warning, m); }

}  // namespace nerfin
