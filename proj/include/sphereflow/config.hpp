#pragma once

// Flat key=value experiment configuration: one pair per line, '#' comments,
// every key overridable from the command line.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sphereflow/errors.hpp"

namespace sphereflow {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

} // namespace detail

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument(path + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + body + "'");
        const std::string key = detail::trim(body.substr(0, eq));
        const std::string value = detail::trim(body.substr(eq + 1));
        if (key.empty())
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

// Typed access over the merged key=value map. Getters with a default never
// fail on absence; required getters throw InvalidArgument naming the key.
class Config {
public:
    Config() = default;
    explicit Config(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    const std::map<std::string, std::string>& entries() const { return kv_; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string get_string(const std::string& key) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) throw InvalidArgument("missing required key '" + key + "'");
        return it->second;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    int get_int(const std::string& key) const {
        const double v = get_double(key);
        const long long r = static_cast<long long>(v);
        if (static_cast<double>(r) != v)
            throw InvalidArgument("key '" + key + "' must be an integer");
        return static_cast<int>(r);
    }
    int get_int(const std::string& key, int fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_uint64(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw InvalidArgument("key '" + key + "' must be a nonnegative integer, got '" + s +
                                  "'");
        }
    }
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_uint64(key) : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string s = get_string(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw InvalidArgument("key '" + key + "' must be a boolean, got '" + s + "'");
    }

    std::vector<double> get_double_list(const std::string& key) const {
        const std::string s = get_string(key);
        std::vector<double> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const std::string body = detail::trim(item);
            if (body.empty())
                throw InvalidArgument("key '" + key + "' has an empty list element");
            out.push_back(to_double(key, body));
        }
        if (out.empty()) throw InvalidArgument("key '" + key + "' must be a nonempty list");
        return out;
    }
    std::vector<double> get_double_list(const std::string& key,
                                        const std::string& fallback) const {
        Config tmp;
        tmp.set(key, get_string(key, fallback));
        return tmp.get_double_list(key);
    }

    // seed precedence: explicit key, then SPHEREFLOW_SEED, then 0
    std::uint64_t resolve_seed() const {
        if (has("seed")) return get_uint64("seed");
        if (const char* env = std::getenv("SPHEREFLOW_SEED")) {
            Config tmp;
            tmp.set("seed", env);
            return tmp.get_uint64("seed");
        }
        return 0;
    }

private:
    static double to_double(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw InvalidArgument("key '" + key + "' must be numeric, got '" + s + "'");
        }
    }

    std::map<std::string, std::string> kv_;
};

} // namespace sphereflow
