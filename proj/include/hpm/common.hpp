#ifndef HPM_COMMON_HPP
#define HPM_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpm {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Real = double;
using RMat = Mat<Real>;
using RVec = Vec<Real>;
using BoolVec = std::vector<bool>;

// Domain error hierarchy. Every module throws one of these.
struct HpmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : HpmError { using HpmError::HpmError; };
struct EmptyInput : HpmError { using HpmError::HpmError; };
struct InvalidConfig : HpmError { using HpmError::HpmError; };
struct InvalidFeature : HpmError { using HpmError::HpmError; };
struct MissingFeature : HpmError { using HpmError::HpmError; };
struct ValidationError : HpmError { using HpmError::HpmError; };
struct UnknownSpeaker : HpmError { using HpmError::HpmError; };
struct InvalidLabel : HpmError { using HpmError::HpmError; };
struct InvalidAudio : HpmError { using HpmError::HpmError; };
struct MissingModel : HpmError { using HpmError::HpmError; };
struct IoError : HpmError { using HpmError::HpmError; };

// Single seeded generator; no global RNG state anywhere in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  double uniform(double lo = 0.0, double hi = 1.0) {
    // Fixed-layout mapping so streams are reproducible across stdlibs.
    const double u = double(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mean + stddev * mag * std::cos(2.0 * M_PI * u2);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    const std::uint64_t span = std::uint64_t(hi - lo + 1);
    return lo + int(engine_() % span);
  }

  Rng child(std::uint64_t stream) {
    return Rng(engine_() ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
  }

  template <class M>
  void fill_normal(M& m, double stddev) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(0.0, stddev);
  }

  template <class M>
  void fill_uniform(M& m, double lo, double hi) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(lo, hi);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ShapeError(what);
}

}  // namespace hpm

#endif  // HPM_COMMON_HPP
