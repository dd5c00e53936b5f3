#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vxs {

// ======================================================
// Plain-text key-value files (configs and manifests)
// ======================================================
// Format: one `key = value` per line; '#' starts a comment; blank lines
// ignored. Keys are unique; insertion order is preserved on save so
// manifests diff cleanly.
class KvFile {
public:
    KvFile() = default;

    bool has(const std::string& key) const { return find(key) != nullptr; }

    void set(const std::string& key, const std::string& value) {
        for (auto& e : entries_)
            if (e.first == key) {
                e.second = value;
                return;
            }
        entries_.emplace_back(key, value);
    }
    void set(const std::string& key, double value) {
        std::ostringstream ss;
        ss.precision(17);
        ss << value;
        set(key, ss.str());
    }
    void set(const std::string& key, int64_t value) { set(key, std::to_string(value)); }
    void set(const std::string& key, int value) { set(key, static_cast<int64_t>(value)); }
    void set(const std::string& key, uint64_t value) { set(key, std::to_string(value)); }

    const std::string& get_string(const std::string& key) const {
        const std::string* v = find(key);
        if (!v) throw std::runtime_error("missing key: " + key);
        return *v;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        const std::string* v = find(key);
        return v ? *v : fallback;
    }

    double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        const std::string* v = find(key);
        return v ? parse_double(key, *v) : fallback;
    }

    int64_t get_int(const std::string& key) const { return parse_int(key, get_string(key)); }
    int64_t get_int(const std::string& key, int64_t fallback) const {
        const std::string* v = find(key);
        return v ? parse_int(key, *v) : fallback;
    }

    uint64_t get_uint(const std::string& key, uint64_t fallback) const {
        const std::string* v = find(key);
        if (!v) return fallback;
        try {
            return std::stoull(*v);
        } catch (const std::exception&) {
            throw std::runtime_error("key " + key + ": not an unsigned integer: " + *v);
        }
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    void save(std::ostream& out) const {
        for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
    }
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open for write: " + path);
        save(out);
    }

    static KvFile load(std::istream& in) {
        KvFile kv;
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("malformed line " + std::to_string(line_no) + ": " + line);
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("empty key at line " + std::to_string(line_no));
            kv.set(key, value);
        }
        return kv;
    }
    static KvFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open: " + path);
        return load(in);
    }

private:
    static std::string trim(const std::string& s) {
        size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    const std::string* find(const std::string& key) const {
        for (const auto& e : entries_)
            if (e.first == key) return &e.second;
        return nullptr;
    }

    static double parse_double(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw std::runtime_error("key " + key + ": not a number: " + v);
        }
    }
    static int64_t parse_int(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const int64_t i = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return i;
        } catch (const std::exception&) {
            throw std::runtime_error("key " + key + ": not an integer: " + v);
        }
    }

    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace vxs
