#ifndef OCTOOL_RNG_HPP_
#define OCTOOL_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

#include "octool/types.hpp"

namespace octool {

/// Deterministic RNG. mt19937_64 is fully specified by the standard and the
/// derived uniform/normal transforms are spelled out here, so identical seeds
/// give identical streams on every platform (std::normal_distribution does
/// not guarantee that).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    // Box-Muller, one draw per call, cached partner.
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  Vec normal_vector(int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal();
    return v;
  }

  Vec unit_vector(int dim) {
    if (dim < 1) throw std::invalid_argument("Rng::unit_vector: dim must be >= 1");
    Vec v = normal_vector(dim);
    double nv = v.norm();
    while (nv < 1e-12) {
      v = normal_vector(dim);
      nv = v.norm();
    }
    return v / nv;
  }

private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace octool

#endif  // OCTOOL_RNG_HPP_
