#pragma once
// Seeded randomness: named substreams off one master seed, plus the samplers
// used across the library (unit vectors, balls, Haar rotations).

#include <cstdint>
#include <random>
#include <string_view>

#include "conecount/cone_core.hpp"

namespace conecount {

inline constexpr uint64_t kDefaultSeed = 1729;

uint64_t splitmix64(uint64_t x);

// Deterministic generator for (seed, name): component streams derived from
// the same master seed do not overlap or correlate.
std::mt19937_64 substream(uint64_t seed, std::string_view name);

Vec random_unit_vector(int dim, std::mt19937_64& rng);
Vec random_in_ball(int dim, double radius, std::mt19937_64& rng);
// Haar rotation: QR of a Gaussian matrix, R-diagonal sign fix, det +1.
Mat random_rotation(int dim, std::mt19937_64& rng);

}  // namespace conecount
