#ifndef VBSMC_RNG_HPP
#define VBSMC_RNG_HPP

#include <cstdint>
#include <random>

namespace vbsmc {

using Rng = std::mt19937_64;

/// Purpose tags so that independent consumers of one seed never share a stream.
enum class StreamTag : std::uint32_t {
  innovations = 1,
  observation_noise = 2,
  particle = 3,
  resampling = 4,
  fitness = 5,
  masking = 6,
};

/// Deterministic substream derived from (seed, tag, index). Two distinct
/// triples give statistically independent engines.
inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// Standard normal draw. A fresh distribution object is used on every call so
/// no cached second variate survives between calls; this keeps draw sequences
/// a pure function of the engine state.
inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  return std::generate_canonical<double, 53>(rng);
}

}  // namespace vbsmc

#endif
