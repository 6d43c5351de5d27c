#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lidarsim {

/// Line-oriented `key value...` config file with a mandatory magic/version
/// first line and '#' comments. Consumers must consume every key; leftovers
/// are hard errors so a typo cannot silently fall back to a default.
class KeyValueFile {
public:
    static KeyValueFile parse(const std::filesystem::path& path, const std::string& magic,
                              int expected_version);

    bool has(const std::string& key) const;

    /// Single-valued lookups; throw ValidationError when missing.
    std::string get_string(const std::string& key);
    double get_double(const std::string& key);
    long long get_int(const std::string& key);
    bool get_bool(const std::string& key);
    std::vector<std::string> get_tokens(const std::string& key);

    /// Variants with defaults for optional keys.
    std::string get_string_or(const std::string& key, const std::string& fallback);
    double get_double_or(const std::string& key, double fallback);
    long long get_int_or(const std::string& key, long long fallback);

    /// All occurrences of a repeatable key, each as its token list.
    std::vector<std::vector<std::string>> take_all(const std::string& key);

    /// Throws ValidationError listing any keys never consumed.
    void finish() const;

    const std::filesystem::path& path() const { return path_; }

private:
    struct Entry {
        std::string key;
        std::vector<std::string> tokens;
        bool consumed = false;
    };
    std::vector<Entry> entries_;
    std::filesystem::path path_;

    Entry* find_unconsumed(const std::string& key);
};

/// FNV-1a 64-bit hash of a file's bytes; stable across runs, used to stamp
/// outputs with the exact configuration they came from.
std::uint64_t hash_file(const std::filesystem::path& path);
std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace lidarsim
