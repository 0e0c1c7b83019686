#include "knntest/plan_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>

#include "knntest/error.hpp"

namespace knntest {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

double parse_double(const std::string& text, const std::string& what) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ValidationError(what + ": '" + text + "' is not a number");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& text, const std::string& what) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ValidationError(what + ": '" + text + "' is not a non-negative integer");
    }
    return v;
}

ConfigFile ConfigFile::parse(std::istream& in) {
    ConfigFile cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
        if (cfg.values_.count(key)) throw ValidationError("config key '" + key + "' given twice");
        std::vector<std::string> items;
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']') {
                throw ValidationError("config line " + std::to_string(line_no) + ": unterminated list");
            }
            value = trim(value.substr(1, value.size() - 2));
            std::size_t start = 0;
            while (!value.empty()) {
                const auto comma = value.find(',', start);
                const std::string item = trim(value.substr(start, comma == std::string::npos ? comma : comma - start));
                if (item.empty()) throw ValidationError("config key '" + key + "': empty list item");
                items.push_back(item);
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        } else {
            if (value.empty()) throw ValidationError("config key '" + key + "' has no value");
            items.push_back(value);
        }
        cfg.values_[key] = std::move(items);
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    return parse(in);
}

std::vector<std::string> ConfigFile::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

const std::vector<std::string>& ConfigFile::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("config key '" + key + "' is missing");
    return it->second;
}

std::string ConfigFile::get_string(const std::string& key) const {
    const auto& v = raw(key);
    if (v.size() != 1) throw ValidationError("config key '" + key + "' must be a single value");
    return v.front();
}

double ConfigFile::get_double(const std::string& key) const { return parse_double(get_string(key), key); }

std::uint64_t ConfigFile::get_uint(const std::string& key) const { return parse_uint(get_string(key), key); }

std::vector<double> ConfigFile::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : raw(key)) out.push_back(parse_double(s, key));
    return out;
}

std::vector<std::uint64_t> ConfigFile::get_uints(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& s : raw(key)) out.push_back(parse_uint(s, key));
    return out;
}

std::vector<std::string> ConfigFile::get_strings(const std::string& key) const { return raw(key); }

void ConfigFile::require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw ValidationError("unknown config key '" + k + "'");
        }
    }
}

}  // namespace knntest
