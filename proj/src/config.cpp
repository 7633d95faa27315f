#include "teamfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "teamfuse/core.hpp"

namespace teamfuse {

std::string_view trim_view(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r");
    return text.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view text, char separator) {
    std::vector<std::string> out;
    if (trim_view(text).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto end = text.find(separator, start);
        out.emplace_back(trim_view(text.substr(start, end == std::string_view::npos ? end : end - start)));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return out;
}

Settings Settings::parse(std::string_view text, std::string_view source) {
    Settings s;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto end = text.find('\n');
        std::string_view line = text.substr(0, end);
        text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
        std::string value;
        std::string_view rest = line;
        // Strip a trailing comment outside double quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < rest.size(); ++i) {
            if (rest[i] == '"') quoted = !quoted;
            if (rest[i] == '#' && !quoted) {
                rest = rest.substr(0, i);
                break;
            }
        }
        rest = trim_view(rest);
        if (rest.empty()) continue;
        const auto eq = rest.find('=');
        const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
        const std::string key(trim_view(rest.substr(0, eq)));
        std::string_view raw = trim_view(rest.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + "empty key");
        if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') raw = raw.substr(1, raw.size() - 2);
        if (s.has(key)) throw ConfigError(where + "duplicate key '" + key + "'");
        s.values_[key] = std::string(raw);
    }
    return s;
}

Settings Settings::load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
}

void Settings::merge(const Settings& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Settings::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::optional<std::string> Settings::find(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

int Settings::get_int(const std::string& key, int fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError("setting '" + key + "' expects an integer, got '" + *v + "'");
    }
    return out;
}

std::uint64_t Settings::get_u64(const std::string& key) const {
    const auto v = find(key);
    if (!v) throw ConfigError("setting '" + key + "' is required");
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + *v + "'");
    }
    return out;
}

double Settings::get_double(const std::string& key, double fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    try {
        return parse_double(*v);
    } catch (const Error&) {
        throw ConfigError("setting '" + key + "' expects a number, got '" + *v + "'");
    }
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError("setting '" + key + "' expects true or false, got '" + *v + "'");
}

std::vector<double> Settings::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
    const auto v = find(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& part : split(*v, ',')) {
        try {
            out.push_back(parse_double(part));
        } catch (const Error&) {
            throw ConfigError("setting '" + key + "' expects comma-separated numbers, got '" + *v + "'");
        }
    }
    return out;
}

std::map<std::string, std::string> Settings::with_prefix(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_) {
        if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) out[k.substr(prefix.size())] = v;
    }
    return out;
}

void Settings::check_known(const std::vector<std::string>& keys, const std::vector<std::string>& prefixes) const {
    for (const auto& [k, v] : values_) {
        if (std::find(keys.begin(), keys.end(), k) != keys.end()) continue;
        const bool prefixed = std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
            return k.size() > p.size() && k.compare(0, p.size(), p) == 0;
        });
        if (!prefixed) throw ConfigError("unknown setting '" + k + "'");
    }
}

std::string Settings::canonical(const std::vector<std::string>& excluded) const {
    std::string out;
    for (const auto& [k, v] : values_) {
        if (std::find(excluded.begin(), excluded.end(), k) != excluded.end()) continue;
        out += k + '=' + v + '\n';
    }
    return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

}  // namespace teamfuse
