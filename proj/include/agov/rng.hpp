#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace agov {

// 64-bit FNV-1a over raw bytes; used wherever a platform-stable string hash is needed.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for a named stream: the label hash and master seed are combined through two
// rounds of splitmix so that labels differing in one character land far apart.
std::uint64_t stream_seed(std::uint64_t master_seed, std::string_view label) noexcept;

/// Named reproducible random stream.
///
/// Only the raw mt19937_64 output is used; all distributions are computed here rather
/// than through <random> distribution objects, whose algorithms are implementation
/// defined.
class RngStream {
public:
  RngStream(std::uint64_t master_seed, std::string label)
      : label_(std::move(label)), engine_(stream_seed(master_seed, label_)) {}

  const std::string& label() const noexcept { return label_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of precision.
  double uniform01();
  // Uniform integer on [lo, hi] (inclusive), rejection-sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean, double stddev);
  double exponential(double rate);
  bool bernoulli(double p) { return uniform01() < p; }

  std::uint64_t draws() const noexcept { return draws_; }

private:
  std::string label_;
  std::mt19937_64 engine_;
  std::uint64_t draws_{0};
};

}  // namespace agov
