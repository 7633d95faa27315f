#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace teamfuse {

// Flat key-value run settings. The file format is one `key = value` pair per
// line; blank lines and lines starting with '#' are ignored, and text after
// an unquoted '#' is a comment.
class Settings {
public:
    static Settings parse(std::string_view text, std::string_view source = "config");
    static Settings load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    // Values of `other` replace ours.
    void merge(const Settings& other);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get(const std::string& key, const std::string& fallback) const;
    std::optional<std::string> find(const std::string& key) const;
    // Typed getters raise ConfigError naming the key on malformed values.
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

    // Keys starting with `prefix`, with the prefix removed.
    std::map<std::string, std::string> with_prefix(const std::string& prefix) const;

    // Raises ConfigError on keys that are neither listed nor under a listed prefix.
    void check_known(const std::vector<std::string>& keys, const std::vector<std::string>& prefixes) const;

    // `key=value` lines in key order, skipping `excluded` keys.
    std::string canonical(const std::vector<std::string>& excluded = {}) const;

private:
    std::map<std::string, std::string> values_;
};

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

std::vector<std::string> split(std::string_view text, char separator);
std::string_view trim_view(std::string_view text);

}  // namespace teamfuse
