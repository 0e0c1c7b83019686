#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace knntest {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; good avalanche, used to derive stream seeds.
std::uint64_t mix64(std::uint64_t x);

// Seed-sequence streams: the engine for (master_seed, ids...) depends only on
// its arguments, so replicate r of cell c draws the same numbers no matter
// which thread runs it or in what order.
Rng make_stream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> ids = {});

}  // namespace knntest
