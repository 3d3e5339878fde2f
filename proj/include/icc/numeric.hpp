#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace icc {

/// Exactly rounded floating-point summation (Shewchuk partials, as in Python's
/// math.fsum). The result depends only on the multiset of addends, never on
/// their order, which is what makes every measure bitwise invariant under
/// sample, neuron and layer permutations.
class ExactSum {
public:
    void add(double x);
    double value() const;
    void clear() noexcept { partials_.clear(); }

private:
    std::vector<double> partials_;
};

double exact_sum(std::span<const double> values);

/// Exactly rounded dot product of the individually rounded products.
double exact_dot(std::span<const double> a, std::span<const double> b);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

MeanStd mean_std(std::span<const double> values);

/// Median of a copy of the values; even counts average the two middle order
/// statistics. Throws std::invalid_argument on empty input.
double median(std::vector<double> values);

std::uint64_t splitmix64(std::uint64_t x);

/// Combines a base seed with context tags into an independent stream seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// Thin wrapper over mt19937_64 that fixes the derived distributions. The
// standard library's distributions are implementation-defined, which would make
// golden runs depend on the toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform();                              // [0, 1)
    double uniform(double lo, double hi);
    std::size_t index(std::size_t bound);          // uniform in [0, bound)
    double normal();                               // Box-Muller
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace icc
