#include "flowlab/random.hpp"

#include <cmath>
#include <numbers>

namespace flowlab {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform strictly inside (0, 1).
inline double to_unit(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t x = (static_cast<std::uint64_t>(a) << 32) | b;
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter c, PhiloxKey k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

void NormalSource::normals(std::uint64_t step, double* out, int count, bool auxiliary) const {
  const PhiloxKey key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  for (int block = 0; 2 * block < count; ++block) {
    const PhiloxCounter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                            static_cast<std::uint32_t>(block) | (auxiliary ? 0x80000000u : 0u),
                            stream_};
    const PhiloxCounter r = philox4x32(ctr, key);
    const double u1 = to_unit(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    out[2 * block] = rad * std::cos(ang);
    if (2 * block + 1 < count) out[2 * block + 1] = rad * std::sin(ang);
  }
}

double NormalSource::normal(std::uint64_t step, std::uint32_t index, bool auxiliary) const {
  double pair[2];
  const PhiloxKey key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  const std::uint32_t block = index / 2;
  const PhiloxCounter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                          block | (auxiliary ? 0x80000000u : 0u), stream_};
  const PhiloxCounter r = philox4x32(ctr, key);
  const double rad = std::sqrt(-2.0 * std::log(to_unit(r[0], r[1])));
  const double ang = 2.0 * std::numbers::pi * to_unit(r[2], r[3]);
  pair[0] = rad * std::cos(ang);
  pair[1] = rad * std::sin(ang);
  return pair[index % 2];
}

BrownianDriver::BrownianDriver(std::uint64_t seed, std::uint32_t stream, int dim, double fine_dt)
    : source_(seed, stream), dim_(dim), fine_dt_(fine_dt) {
  if (dim < 1) throw ContractError("Brownian dimension must be positive");
  if (!(fine_dt > 0.0)) throw ContractError("time step must be positive");
}

BrownianDriver BrownianDriver::zero(int dim, double fine_dt) {
  BrownianDriver d(0, 0, dim, fine_dt);
  d.zero_ = true;
  return d;
}

void BrownianDriver::fine_increment(std::uint64_t fine_step, Vector& out) const {
  out.resize(dim_);
  if (zero_) {
    out.setZero();
    return;
  }
  source_.normals(fine_step, out.data(), dim_);
  out *= std::sqrt(fine_dt_);
}

void BrownianDriver::increment(std::uint64_t step, int aggregation, Vector& out) const {
  if (aggregation <= 1) {
    fine_increment(step, out);
    return;
  }
  out.setZero(dim_);
  if (zero_) return;
  double buf[16];
  Vector tmp;
  double* z = buf;
  if (dim_ > 16) {
    tmp.resize(dim_);
    z = tmp.data();
  }
  const double s = std::sqrt(fine_dt_);
  const std::uint64_t first = step * static_cast<std::uint64_t>(aggregation);
  for (int k = 0; k < aggregation; ++k) {
    source_.normals(first + static_cast<std::uint64_t>(k), z, dim_);
    for (int i = 0; i < dim_; ++i) out[i] += s * z[i];
  }
}

void BrownianDriver::auxiliary_normals(std::uint64_t step, Vector& out) const {
  out.resize(dim_);
  if (zero_) {
    out.setZero();
    return;
  }
  source_.normals(step, out.data(), dim_, true);
}

}  // namespace flowlab
