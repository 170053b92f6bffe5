#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sgda {

/// Flat `key = value` text configuration. `#` starts a comment line, blank
/// lines are ignored, keys are unique.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& require(const std::string& key) const;
    std::optional<std::string> get(const std::string& key) const;

    double require_double(const std::string& key) const;
    long long require_int(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated list; empty when the key is absent.
    std::vector<std::string> get_list(const std::string& key) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& entries() const { return values_; }
    /// Canonical serialization: sorted keys, one `key = value` per line.
    std::string to_string() const;
    const std::string& origin() const { return origin_; }

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

double parse_double(const std::string& text, const std::string& what);
long long parse_int(const std::string& text, const std::string& what);
std::string trim(const std::string& text);
/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
std::vector<std::string> split(const std::string& text, char sep);

}  // namespace sgda
