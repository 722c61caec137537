#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace nephrofp {

// 32-bit FNV-1a over a byte stream with a murmur3-style finalizer.
// This is the one hash behind fingerprint feature identifiers; it is pinned
// forever by the golden fixture files under tests/fixtures.
class Hash32 {
public:
    Hash32& bytes(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t k = 0; k < len; ++k) {
            state_ ^= p[k];
            state_ *= 16777619u;
        }
        return *this;
    }

    Hash32& u32(std::uint32_t v) {
        unsigned char b[4] = {
            static_cast<unsigned char>(v & 0xffu),
            static_cast<unsigned char>((v >> 8) & 0xffu),
            static_cast<unsigned char>((v >> 16) & 0xffu),
            static_cast<unsigned char>((v >> 24) & 0xffu),
        };
        return bytes(b, 4);
    }

    Hash32& i32(std::int32_t v) { return u32(static_cast<std::uint32_t>(v)); }

    std::uint32_t finish() const {
        std::uint32_t h = state_;
        h ^= h >> 16;
        h *= 0x85ebca6bu;
        h ^= h >> 13;
        h *= 0xc2b2ae35u;
        h ^= h >> 16;
        return h;
    }

private:
    std::uint32_t state_ = 2166136261u;
};

// FNV-1a 64, used for hashing intermediate pipeline artifacts in reports.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

}  // namespace nephrofp
