#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hspace {

// FNV-1a, 64-bit. Provenance hashing only, not cryptographic.
class Fnv64 {
public:
    Fnv64& update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ull;
        }
        return *this;
    }
    Fnv64& update(const std::string& s) { return update(s.data(), s.size()); }
    template <typename T>
    Fnv64& update_pod(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        return update(&v, sizeof(T));
    }
    std::uint64_t value() const { return state_; }
    std::string hex() const {
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
        return buf;
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::string hash_bytes_hex(const void* data, std::size_t n) {
    return Fnv64().update(data, n).hex();
}

inline std::string hash_string_hex(const std::string& s) {
    return hash_bytes_hex(s.data(), s.size());
}

inline std::string hash_doubles_hex(const double* data, std::size_t n) {
    return hash_bytes_hex(data, n * sizeof(double));
}

inline std::string hash_file_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
    Fnv64 h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

}  // namespace hspace
