#pragma once

// Counter-based random streams. Draw k of stream s under seed z is a pure
// function of (z, s, k), so simulations are reproducible independently of
// scheduling and of how many other streams were consumed.

#include <cstdint>
#include <vector>

namespace ehmdp {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Well-known stream ids used by the simulator.
enum class StreamId : std::uint64_t {
    channel = 1,
    arrival = 2,
    harvest = 3,
    policy_coin = 4,
};

class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream)
        : key_(splitmix64(seed ^ splitmix64(stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL))) {}

    RandomStream(std::uint64_t seed, StreamId stream)
        : RandomStream(seed, static_cast<std::uint64_t>(stream)) {}

    std::uint64_t next_u64() {
        return splitmix64(key_ ^ splitmix64(counter_++));
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Index drawn from a probability row by inverse CDF.
    std::size_t categorical(const std::vector<double>& probs) {
        const double u = uniform();
        double acc = 0.0;
        std::size_t last = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0)
                continue;
            acc += probs[i];
            last = i;
            if (u < acc)
                return i;
        }
        return last;
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace ehmdp
