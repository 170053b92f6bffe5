#include "sgda/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sgda {

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string current;
    std::istringstream in(text);
    while (std::getline(in, current, sep)) parts.push_back(trim(current));
    if (!text.empty() && text.back() == sep) parts.emplace_back();
    return parts;
}

std::string format_double(double value) {
    char buffer[32];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buffer, ptr);
}

double parse_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    double value = 0.0;
    const auto* begin = t.data();
    const auto* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || t.empty())
        throw std::invalid_argument(what + ": not a number: '" + text + "'");
    return value;
}

long long parse_int(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    long long value = 0;
    const auto* begin = t.data();
    const auto* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || t.empty())
        throw std::invalid_argument(what + ": not an integer: '" + text + "'");
    return value;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty key");
        if (cfg.values_.count(key))
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        cfg.values_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

const std::string& KeyValueConfig::require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error(origin_ + ": missing key '" + key + "'");
    return it->second;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

double KeyValueConfig::require_double(const std::string& key) const {
    return parse_double(require(key), origin_ + ": " + key);
}

long long KeyValueConfig::require_int(const std::string& key) const {
    return parse_int(require(key), origin_ + ": " + key);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return contains(key) ? require_double(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    return contains(key) ? require_int(key) : fallback;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return contains(key) ? require(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!contains(key)) return fallback;
    const std::string& v = require(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error(origin_ + ": " + key + ": not a boolean: '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
    if (!contains(key)) return {};
    const std::string& v = require(key);
    if (trim(v).empty()) return {};
    return split(v, ',');
}

std::string KeyValueConfig::to_string() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
}

}  // namespace sgda
