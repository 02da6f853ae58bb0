#include "dtrwql/rng.hpp"

#include <cmath>

namespace dtrwql {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t hash_label(std::string_view label) {
    // FNV-1a, then one mixing round
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return mix64(h);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : key_(mix64(seed + kGolden)), state_(key_) {}

RngStream RngStream::child(std::string_view label, std::uint64_t index) const {
    // derived from the fixed identity key, never from the draw position
    RngStream sub(0);
    sub.key_ = mix64(key_ ^ hash_label(label) ^ mix64(index * kGolden + 0x632be59bd9b4e019ull));
    sub.state_ = sub.key_;
    return sub;
}

std::uint64_t RngStream::next_u64() {
    state_ += kGolden;
    return mix64(state_ ^ key_);
}

double RngStream::uniform() {
    // 53-bit mantissa
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

int RngStream::pm_one(double p_plus) { return uniform() < p_plus ? 1 : -1; }

bool RngStream::bernoulli(double p) { return uniform() < p; }

}  // namespace dtrwql
