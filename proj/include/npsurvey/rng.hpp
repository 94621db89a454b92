#pragma once

#include <cstdint>
#include <random>

namespace npsurvey {

// splitmix64 finalizer; used to derive independent substreams from
// (master seed, replication index, stream role).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 substream(std::uint64_t master, std::uint64_t rep,
                                 std::uint64_t role) {
    std::uint64_t s = mix64(master);
    s = mix64(s ^ (rep * 0x9e3779b97f4a7c15ULL + 1));
    s = mix64(s ^ (role * 0xd1b54a32d192ed03ULL + 1));
    return std::mt19937_64(s);
}

}  // namespace npsurvey
