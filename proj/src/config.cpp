#include "lidarsim/config.hpp"

#include <fstream>
#include <sstream>

#include "lidarsim/errors.hpp"

namespace lidarsim {

KeyValueFile KeyValueFile::parse(const std::filesystem::path& path, const std::string& magic,
                                 int expected_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");

    KeyValueFile kv;
    kv.path_ = path;
    std::string line;
    bool saw_magic = false;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        if (!saw_magic) {
            if (key != magic)
                throw ParseError("expected '" + magic + "' header, found '" + key + "'",
                                 line_start);
            int version = -1;
            if (!(ss >> version))
                throw ParseError("missing version after '" + magic + "'", line_start);
            if (version != expected_version)
                throw ParseError("unsupported " + magic + " version " + std::to_string(version) +
                                     " (expected " + std::to_string(expected_version) + ")",
                                 line_start);
            saw_magic = true;
            continue;
        }
        Entry entry;
        entry.key = key;
        std::string tok;
        while (ss >> tok) entry.tokens.push_back(tok);
        kv.entries_.push_back(std::move(entry));
    }
    if (!saw_magic)
        throw ParseError("'" + path.string() + "' is missing the '" + magic + "' header", 0);
    return kv;
}

bool KeyValueFile::has(const std::string& key) const {
    for (const Entry& e : entries_)
        if (!e.consumed && e.key == key) return true;
    return false;
}

KeyValueFile::Entry* KeyValueFile::find_unconsumed(const std::string& key) {
    for (Entry& e : entries_)
        if (!e.consumed && e.key == key) return &e;
    return nullptr;
}

std::vector<std::string> KeyValueFile::get_tokens(const std::string& key) {
    Entry* e = find_unconsumed(key);
    if (!e)
        throw ValidationError("'" + path_.string() + "' is missing required key '" + key + "'");
    e->consumed = true;
    return e->tokens;
}

std::string KeyValueFile::get_string(const std::string& key) {
    auto tokens = get_tokens(key);
    if (tokens.size() != 1)
        throw ValidationError("key '" + key + "' in '" + path_.string() +
                              "' expects exactly one value");
    return tokens[0];
}

double KeyValueFile::get_double(const std::string& key) {
    const std::string raw = get_string(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("key '" + key + "' in '" + path_.string() +
                              "' expects a number, got '" + raw + "'");
    }
}

long long KeyValueFile::get_int(const std::string& key) {
    const std::string raw = get_string(key);
    try {
        std::size_t used = 0;
        const long long v = std::stoll(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("key '" + key + "' in '" + path_.string() +
                              "' expects an integer, got '" + raw + "'");
    }
}

bool KeyValueFile::get_bool(const std::string& key) {
    const std::string raw = get_string(key);
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    throw ValidationError("key '" + key + "' in '" + path_.string() +
                          "' expects true/false, got '" + raw + "'");
}

std::string KeyValueFile::get_string_or(const std::string& key, const std::string& fallback) {
    return has(key) ? get_string(key) : fallback;
}

double KeyValueFile::get_double_or(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
}

long long KeyValueFile::get_int_or(const std::string& key, long long fallback) {
    return has(key) ? get_int(key) : fallback;
}

std::vector<std::vector<std::string>> KeyValueFile::take_all(const std::string& key) {
    std::vector<std::vector<std::string>> out;
    for (Entry& e : entries_) {
        if (e.consumed || e.key != key) continue;
        e.consumed = true;
        out.push_back(e.tokens);
    }
    return out;
}

void KeyValueFile::finish() const {
    std::string leftovers;
    for (const Entry& e : entries_) {
        if (e.consumed) continue;
        if (!leftovers.empty()) leftovers += ", ";
        leftovers += "'" + e.key + "'";
    }
    if (!leftovers.empty())
        throw ValidationError("unknown keys in '" + path_.string() + "': " + leftovers);
}

std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for hashing");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got == 0) break;
        h = hash_bytes(buf, got, h);
    }
    return h;
}

}  // namespace lidarsim
