#include "ioql/linalg.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace ioql {

VectorXd singular_values(const MatrixXd& m) {
  if (m.size() == 0) return VectorXd();
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues();
}

std::size_t numerical_rank(const MatrixXd& m, double abs_tol) {
  const VectorXd s = singular_values(m);
  std::size_t r = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) > abs_tol) ++r;
  }
  return r;
}

std::size_t relative_rank(const MatrixXd& m, double rel_tol) {
  const VectorXd s = singular_values(m);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) > rel_tol * s(0)) ++r;
  }
  return r;
}

MatrixXd pseudo_inverse(const MatrixXd& m, double tol) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  VectorXd inv = svd.singularValues();
  for (Eigen::Index k = 0; k < inv.size(); ++k) {
    inv(k) = inv(k) > tol ? 1.0 / inv(k) : 0.0;
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double condition_number(const MatrixXd& m) {
  const VectorXd s = singular_values(m);
  if (s.size() == 0) return std::numeric_limits<double>::infinity();
  const double smallest = s(s.size() - 1);
  if (smallest == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

double spectral_radius(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd controllability_matrix(const MatrixXd& a, const MatrixXd& b) {
  const Eigen::Index n = a.rows();
  MatrixXd out(n, b.cols() * n);
  MatrixXd block = b;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.middleCols(k * b.cols(), b.cols()) = block;
    block = a * block;
  }
  return out;
}

MatrixXd observability_matrix(const MatrixXd& a, const MatrixXd& c) {
  const Eigen::Index n = a.rows();
  MatrixXd out(c.rows() * n, n);
  MatrixXd block = c;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.middleRows(k * c.rows(), c.rows()) = block;
    block = block * a;
  }
  return out;
}

bool is_symmetric_positive_definite(const MatrixXd& m, double sym_tol) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > sym_tol * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::LLT<MatrixXd> llt(symmetrize(m));
  return llt.info() == Eigen::Success;
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

bool identical(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

bool identical(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (!identical(a[k], b[k])) return false;
  return true;
}

VectorXd concat(const std::vector<VectorXd>& parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  VectorXd out(total);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.segment(off, p.size()) = p;
    off += p.size();
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ioql
