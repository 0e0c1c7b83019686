#include "knntest/rng.hpp"

#include <array>

namespace knntest {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = mix64(master_seed);
    std::uint64_t position = 1;
    for (auto id : ids) {
        h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL * position));
        ++position;
    }
    std::array<std::uint32_t, 8> words{};
    std::uint64_t s = h;
    for (std::size_t i = 0; i < words.size(); i += 2) {
        s = mix64(s);
        words[i] = static_cast<std::uint32_t>(s);
        words[i + 1] = static_cast<std::uint32_t>(s >> 32);
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

}  // namespace knntest
