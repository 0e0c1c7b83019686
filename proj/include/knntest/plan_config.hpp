#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace knntest {

// Flat key = value text. Values may be lists written as [a, b, c]; '#'
// starts a comment. Keys are case-sensitive and may appear once.
class ConfigFile {
public:
    static ConfigFile parse(std::istream& in);
    static ConfigFile load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::vector<std::string> keys() const;
    const std::vector<std::string>& raw(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<std::uint64_t> get_uints(const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& key) const;

    // Throws ValidationError naming the first key outside `allowed`.
    void require_known(const std::vector<std::string>& allowed) const;

private:
    std::map<std::string, std::vector<std::string>> values_;
};

double parse_double(const std::string& text, const std::string& what);
std::uint64_t parse_uint(const std::string& text, const std::string& what);

}  // namespace knntest
