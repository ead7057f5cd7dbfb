#pragma once

// Counter-based normal variates (Philox4x32-10 + Box-Muller) and the
// Brownian driver built on them. Every increment is a pure function of
// (seed, stream, step, component), so paths can be regenerated in any order
// and on any worker.

#include "flowlab/types.hpp"

#include <array>
#include <cstdint>

namespace flowlab {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

class NormalSource {
 public:
  NormalSource(std::uint64_t seed, std::uint32_t stream) : seed_(seed), stream_(stream) {}

  /// Standard normal number `index` of draw `step`. `auxiliary` selects a
  /// disjoint counter space.
  double normal(std::uint64_t step, std::uint32_t index, bool auxiliary = false) const;
  /// Fills out[0..count) with normals index 0..count-1 of draw `step`.
  void normals(std::uint64_t step, double* out, int count, bool auxiliary = false) const;

  std::uint64_t seed() const { return seed_; }
  std::uint32_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
};

/// m-dimensional Brownian increments on a fine uniform grid. A coarse step made
/// of `aggregation` fine steps receives the sum of the fine increments, so
/// schedules with different step sizes see the same Brownian path.
class BrownianDriver {
 public:
  BrownianDriver(std::uint64_t seed, std::uint32_t stream, int dim, double fine_dt);
  static BrownianDriver zero(int dim, double fine_dt);

  int dim() const { return dim_; }
  double fine_dt() const { return fine_dt_; }
  std::uint64_t seed() const { return source_.seed(); }
  std::uint32_t stream() const { return source_.stream(); }
  bool is_zero() const { return zero_; }

  /// Increment of coarse step `step` (fine steps step*aggregation ...).
  void increment(std::uint64_t step, int aggregation, Vector& out) const;
  /// Increment of fine step `fine_step` with aggregation 1.
  void fine_increment(std::uint64_t fine_step, Vector& out) const;
  /// Standard normals independent of the increments, for exact oracle recursions.
  void auxiliary_normals(std::uint64_t step, Vector& out) const;

 private:
  NormalSource source_;
  int dim_;
  double fine_dt_;
  bool zero_ = false;
};

}  // namespace flowlab
