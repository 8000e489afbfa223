#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lfm {

// Flat "key = value" text files: one pair per line, '#' comments, blank
// lines ignored. Duplicate keys are allowed (field/filter declarations).
// All config, schema, stats and metrics files use this format.
class KvFile {
public:
    static KvFile parse_file(const std::filesystem::path& path);
    static KvFile parse_string(const std::string& text, const std::string& origin);

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    bool has(const std::string& key) const;
    // first occurrence; throws ConfigError when missing
    std::string get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    std::vector<std::string> all(const std::string& key) const;
    const std::string& origin() const { return origin_; }

    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

private:
    std::string origin_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);

// Strict numeric parsers; used wherever file content becomes a number.
std::int64_t parse_int(const std::string& s, const std::string& what);
double parse_double(const std::string& s, const std::string& what);

}  // namespace lfm
