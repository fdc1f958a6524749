#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace debate::util {

std::string sha256_hex(std::string_view data);

/// Writes to a sibling temp file, then renames over `path`, so readers never
/// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Throws IoError.
std::string read_file(const std::filesystem::path& path);

using LogSink = std::function<void(std::string_view level, std::string_view message)>;

/// Replaces the process-wide log sink (stderr by default); returns the old one.
LogSink set_log_sink(LogSink sink);
void log_warning(std::string_view message);
void log_info(std::string_view message);

} // namespace debate::util
