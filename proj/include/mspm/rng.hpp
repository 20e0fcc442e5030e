#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mspm {

// Deterministic, splittable random source. Streams are derived from a root
// seed with splitmix64 mixing; the draws themselves come from mt19937_64 with
// explicit Box-Muller normals, so sequences are identical across platforms.
inline constexpr const char* kRngName = "splitmix64-mt19937_64-boxmuller-v1";

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    gen_.seed(detail::splitmix64(s));
  }

  // Derives an independent stream from (seed, path...), e.g. per repetition
  // or per component.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = seed;
    std::uint64_t z = detail::splitmix64(s);
    for (std::uint64_t p : path) {
      s = z ^ (p + 0x9e3779b97f4a7c15ull);
      z = detail::splitmix64(s);
    }
    return Rng(z);
  }

  std::uint64_t bits() { return gen_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd gaussian_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  Eigen::MatrixXd gaussian_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  // Uniform on the unit sphere.
  Eigen::VectorXd unit_vector(int n) {
    while (true) {
      Eigen::VectorXd v = gaussian_vector(n);
      const double nv = v.norm();
      if (nv > 1e-8) return v / nv;
    }
  }

  // Haar-distributed orthonormal columns (QR of a Gaussian matrix with the
  // R diagonal sign fix).
  Eigen::MatrixXd stiefel(int rows, int cols) {
    Eigen::MatrixXd g = gaussian_matrix(rows, cols);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (int j = 0; j < cols; ++j)
      if (r(j, j) < 0) q.col(j) = -q.col(j);
    return q;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mspm
