#include "skillloop/util.hpp"

#include "skillloop/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace skillloop {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::StoreUnavailable: return "StoreUnavailable";
        case ErrorCode::SkillNotFound: return "SkillNotFound";
        case ErrorCode::MalformedSkill: return "MalformedSkill";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InvalidUserId: return "InvalidUserId";
        case ErrorCode::ConfirmationRequired: return "ConfirmationRequired";
        case ErrorCode::CompressionFailed: return "CompressionFailed";
        case ErrorCode::ProviderError: return "ProviderError";
        case ErrorCode::SubAgentConfigError: return "SubAgentConfigError";
        case ErrorCode::IllegalPhase: return "IllegalPhase";
        case ErrorCode::SuggestionNotFound: return "SuggestionNotFound";
        case ErrorCode::SessionNotFound: return "SessionNotFound";
        case ErrorCode::TurnNotFound: return "TurnNotFound";
        case ErrorCode::TurnWithoutSkill: return "TurnWithoutSkill";
        case ErrorCode::ReplayError: return "ReplayError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UserNotFound: return "UserNotFound";
    }
    return "Unknown";
}

Timestamp system_now() {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::string format_iso8601(Timestamp t) {
    std::time_t raw = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&raw, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::optional<Timestamp> parse_iso8601(std::string_view text) {
    // Strictly YYYY-MM-DDTHH:MM:SSZ.
    if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
        text[13] != ':' || text[16] != ':' || text[19] != 'Z') {
        return std::nullopt;
    }
    auto digits = [&](std::size_t pos, std::size_t len, int& out) {
        out = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
            out = out * 10 + (text[i] - '0');
        }
        return true;
    };
    int y, mo, d, h, mi, s;
    if (!digits(0, 4, y) || !digits(5, 2, mo) || !digits(8, 2, d) || !digits(11, 2, h) ||
        !digits(14, 2, mi) || !digits(17, 2, s)) {
        return std::nullopt;
    }
    using namespace std::chrono;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool is_slug(std::string_view s) {
    if (s.empty() || s.size() > 64) return false;
    for (char c : s) {
        if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-')) return false;
    }
    return true;
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
}

namespace io {
namespace {
std::atomic<std::uint64_t> g_reads{0};
}

std::uint64_t read_count() { return g_reads.load(); }

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::StoreUnavailable, "cannot read " + path.string());
    ++g_reads;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content,
                  const WriteHooks* hooks) {
    auto temp = path;
    temp += ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::StoreUnavailable, "cannot write " + temp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::StoreUnavailable, "short write to " + temp.string());
    }
    if (hooks && hooks->before_rename) hooks->before_rename(temp);
    std::error_code ec;
    std::filesystem::rename(temp, path, ec);
    if (ec) throw Error(ErrorCode::StoreUnavailable, "rename failed for " + path.string() + ": " + ec.message());
}

void append_line(const std::filesystem::path& path, std::string_view line) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::StoreUnavailable, "cannot append to " + path.string());
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
}

}  // namespace io
}  // namespace skillloop
