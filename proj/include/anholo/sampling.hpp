#pragma once
// Seeded sampling over boxes. The engine is std::mt19937_64 and doubles are
// built from its top 53 bits, so a seed gives the same points everywhere.

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "anholo/frames.hpp"

namespace anholo {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t bits() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

/// Axis-aligned box in the C-chart: q in [q_lo, q_hi], v^alpha in [v_lo, v_hi].
struct SampleBox {
  Vector q_lo, q_hi;
  Vector v_lo, v_hi;

  static SampleBox uniform(std::size_t n, std::size_t m, double q, double v) {
    return {Vector(n, -q), Vector(n, q), Vector(m, -v), Vector(m, v)};
  }
  void validate(std::size_t n, std::size_t m) const {
    if (q_lo.size() != n || q_hi.size() != n || v_lo.size() != m || v_hi.size() != m)
      throw std::invalid_argument("sample box dimensions do not match the system");
  }
};

inline Vector sample_vector(Rng& rng, const Vector& lo, const Vector& hi) {
  Vector x(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) x[i] = rng.uniform(lo[i], hi[i]);
  return x;
}

/// count points of C (v^a = 0) drawn from the box.
inline std::vector<QuasiState> sample_constraint(const SampleBox& box, const ConstraintSplit& split,
                                                 std::size_t count, std::uint64_t seed = 0) {
  box.validate(split.n, split.m);
  Rng rng(seed);
  std::vector<QuasiState> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vector q = sample_vector(rng, box.q_lo, box.q_hi);
    Vector va = sample_vector(rng, box.v_lo, box.v_hi);
    out.push_back(on_constraint(q, va, split));
  }
  return out;
}

/// count general points of TQ in (q, v) form: v^alpha from the box and
/// v^a uniform in [-off, off].
inline std::vector<QuasiState> sample_tangent(const SampleBox& box, const ConstraintSplit& split,
                                              std::size_t count, double off,
                                              std::uint64_t seed = 0) {
  box.validate(split.n, split.m);
  Rng rng(seed);
  std::vector<QuasiState> out;
  for (std::size_t k = 0; k < count; ++k) {
    QuasiState s{sample_vector(rng, box.q_lo, box.q_hi), Vector(split.n, 0.0)};
    for (std::size_t i = 0; i < split.n; ++i)
      s.v[i] = i < split.m ? rng.uniform(box.v_lo[i], box.v_hi[i]) : rng.uniform(-off, off);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace anholo
