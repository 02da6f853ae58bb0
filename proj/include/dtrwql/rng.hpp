#pragma once

#include <cstdint>
#include <string_view>

namespace dtrwql {

/// Splittable counter-style random stream. Substreams are derived from a
/// (label, index) path so that replicate/bootstrap workers never share
/// mutable state: same seed and path always reproduce the same draws,
/// independent of thread scheduling.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0x9e3779b97f4a7c15ull);

    /// Derive an independent child stream. The child's key mixes the parent
    /// key with a hash of the label and the index; drawing from the parent
    /// afterwards does not affect the child.
    RngStream child(std::string_view label, std::uint64_t index = 0) const;

    std::uint64_t next_u64();

    /// Uniform on [0, 1).
    double uniform();

    /// Uniform on {0, ..., n-1}; n must be positive.
    std::uint64_t uniform_below(std::uint64_t n);

    /// Standard normal via Box-Muller (pairs are generated and cached).
    double normal();

    /// Bernoulli(p) mapped to {-1, +1}.
    int pm_one(double p_plus);

    bool bernoulli(double p);

private:
    std::uint64_t key_;    // stream identity derived from (seed, path)
    std::uint64_t state_;  // draw position
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dtrwql
