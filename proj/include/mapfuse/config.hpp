#pragma once

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mapfuse/errors.hpp"

namespace mapfuse {

// Flat `key = value` config with `#` comments and dotted keys. Every getter
// records the effective value so a run can echo its full configuration, and
// keys never asked for are rejected as unknown.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot read config " + path);
        KeyValueConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            cfg.parse_line(line, lineno);
        }
        return cfg;
    }

    static KeyValueConfig from_string(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            cfg.parse_line(line, lineno);
        }
        return cfg;
    }

    // `--set key=value` overrides, applied after file parse.
    void apply_override(const std::string& kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), 0);
    }

    void set(const std::string& key, const std::string& value, int lineno) {
        if (key.empty()) throw ConfigError("empty key" + at_line(lineno));
        values_[key] = {value, lineno};
    }

    std::string get_string(const std::string& key, const std::string& def) {
        auto it = values_.find(key);
        const std::string v = it == values_.end() ? def : it->second.value;
        note(key, v);
        return v;
    }

    int get_int(const std::string& key, int def) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            note(key, std::to_string(def));
            return def;
        }
        try {
            size_t pos = 0;
            const int v = std::stoi(it->second.value, &pos);
            if (pos != it->second.value.size()) throw std::invalid_argument("");
            note(key, it->second.value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' expects an integer, got '" + it->second.value +
                              "'" + at_line(it->second.lineno));
        }
    }

    double get_double(const std::string& key, double def) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            std::ostringstream os;
            os << def;
            note(key, os.str());
            return def;
        }
        try {
            size_t pos = 0;
            const double v = std::stod(it->second.value, &pos);
            if (pos != it->second.value.size()) throw std::invalid_argument("");
            note(key, it->second.value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' expects a number, got '" + it->second.value + "'" +
                              at_line(it->second.lineno));
        }
    }

    bool get_bool(const std::string& key, bool def) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            note(key, def ? "true" : "false");
            return def;
        }
        const std::string& v = it->second.value;
        note(key, v);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'" +
                          at_line(it->second.lineno));
    }

    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            note(key, join(def));
            return def;
        }
        std::vector<int> out;
        std::istringstream is(it->second.value);
        std::string part;
        while (std::getline(is, part, ',')) {
            try {
                out.push_back(std::stoi(trim(part)));
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "' expects comma-separated integers" +
                                  at_line(it->second.lineno));
            }
        }
        note(key, it->second.value);
        return out;
    }

    // Throws on keys present in the file but never consumed by a getter.
    void reject_unknown() const {
        for (const auto& [key, entry] : values_)
            if (!consumed_.count(key))
                throw ConfigError("unknown key '" + key + "'" + at_line(entry.lineno));
    }

    // Effective configuration (defaults included), one key = value per line.
    void echo(std::ostream& os) const {
        for (const auto& [key, value] : effective_) os << key << " = " << value << "\n";
    }

private:
    struct Entry {
        std::string value;
        int lineno = 0;
    };

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t");
        return s.substr(b, e - b + 1);
    }

    static std::string at_line(int lineno) {
        return lineno > 0 ? " (line " + std::to_string(lineno) + ")" : "";
    }

    static std::string join(const std::vector<int>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(v[i]);
        }
        return s;
    }

    void parse_line(const std::string& raw, int lineno) {
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) return;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value'" + at_line(lineno));
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno);
    }

    void note(const std::string& key, const std::string& value) {
        consumed_.insert(key);
        effective_[key] = value;
    }

    std::map<std::string, Entry> values_;
    mutable std::set<std::string> consumed_;
    std::map<std::string, std::string> effective_;
};

}  // namespace mapfuse
