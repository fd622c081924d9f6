#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace ioql {

// Uniform draws are produced from raw 64-bit words so sequences are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double canonical() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  Eigen::VectorXd uniform_vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v(k) = uniform(lo, hi);
    return v;
  }

  Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = uniform(lo, hi);
    return m;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ioql
