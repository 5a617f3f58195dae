#pragma once

#include <cstdint>
#include <limits>

namespace qht {

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

} // namespace detail

/// Counter-based random stream.
///
/// The i-th output is a pure function of (key, i), so a stream can be
/// re-created anywhere from its key and child streams are derived by
/// hashing an index into the key. Satisfies UniformRandomBitGenerator, so it
/// plugs into the <random> distributions.
class Stream {
public:
    using result_type = std::uint64_t;

    constexpr Stream() noexcept = default;
    constexpr explicit Stream(std::uint64_t key) noexcept : key_(key) {}

    /// Stream keyed by (seed, a, b, ...). Order of the keys matters.
    template <class... Ix>
    static constexpr Stream keyed(std::uint64_t seed, Ix... ix) noexcept {
        Stream s(detail::mix64(seed ^ 0x51ab5eedULL));
        ((s = s.child(static_cast<std::uint64_t>(ix))), ...);
        return s;
    }

    /// Independent child stream; does not advance this stream.
    constexpr Stream child(std::uint64_t index) const noexcept {
        return Stream(detail::mix64(key_ ^ detail::mix64(index + detail::kGolden)));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()() noexcept {
        return detail::mix64(key_ + (++counter_) * detail::kGolden);
    }

    /// Uniform on [0, 1) with 53 random bits.
    constexpr double uniform01() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// Uniform on [lo, hi).
    constexpr double uniform(double lo, double hi) noexcept {
        return lo + (hi - lo) * uniform01();
    }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace qht
