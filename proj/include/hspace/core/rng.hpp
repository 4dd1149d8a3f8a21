#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "hspace/core/hash.hpp"
#include "hspace/core/matrix.hpp"

namespace hspace {

// Derive an independent child seed from a root seed and a purpose label.
// All randomness in the toolkit flows from one root seed through these labels,
// so two runs differing in one knob share every other random stream.
inline std::uint64_t seed_for(std::uint64_t root, const std::string& label) {
    Fnv64 h;
    h.update_pod(root);
    h.update(label);
    std::uint64_t v = h.value();
    // splitmix64 finalizer, decorrelates nearby roots
    v += 0x9e3779b97f4a7c15ull;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
    return v ^ (v >> 31);
}

// mt19937_64 is bit-reproducible across platforms; std::normal_distribution is
// not, so the gaussian path is hand-rolled Box-Muller over raw engine output.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t bits() { return eng_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) {  // uniform integer in [0, n)
        // modulo bias is irrelevant at our scales (n << 2^64), keep it simple
        return eng_() % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    Vector normal_vector(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    DenseMatrix normal_matrix(Index rows, Index cols) {
        DenseMatrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace hspace
