#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace skillloop {

using Timestamp = std::chrono::sys_seconds;
using Clock = std::function<Timestamp()>;

Timestamp system_now();

/// ISO-8601 UTC, second precision: "2026-01-31T08:00:00Z".
std::string format_iso8601(Timestamp t);
std::optional<Timestamp> parse_iso8601(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool is_slug(std::string_view s);

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

namespace io {

/// Number of file bodies read through read_text() since process start.
/// Tests use it to prove that lazily referenced files stay unread.
std::uint64_t read_count();

std::string read_text(const std::filesystem::path& path);

struct WriteHooks {
    /// Invoked after the temp file is fully written, before it replaces the
    /// target. Throwing from here simulates a crash mid-save.
    std::function<void(const std::filesystem::path& temp)> before_rename;
};

/// Writes to `<path>.tmp` then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content,
                  const WriteHooks* hooks = nullptr);

void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace io
}  // namespace skillloop
