#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ioql {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Singular values of `m` in descending order.
VectorXd singular_values(const MatrixXd& m);

/// Number of singular values strictly above `abs_tol`.
std::size_t numerical_rank(const MatrixXd& m, double abs_tol);

/// Rank with tolerance relative to the largest singular value.
std::size_t relative_rank(const MatrixXd& m, double rel_tol);

/// Left pseudo-inverse via SVD; singular values at or below `tol` are dropped.
MatrixXd pseudo_inverse(const MatrixXd& m, double tol);

/// Ratio of the largest to the smallest singular value (infinity when singular).
double condition_number(const MatrixXd& m);

/// Largest eigenvalue modulus.
double spectral_radius(const MatrixXd& m);

/// Column-stack [B, AB, ..., A^{n-1}B].
MatrixXd controllability_matrix(const MatrixXd& a, const MatrixXd& b);

/// Row-stack [C; CA; ...; CA^{n-1}].
MatrixXd observability_matrix(const MatrixXd& a, const MatrixXd& c);

bool is_symmetric_positive_definite(const MatrixXd& m, double sym_tol = 1e-12);

MatrixXd symmetrize(const MatrixXd& m);

/// Exact (bitwise value) equality, false on shape mismatch.
bool identical(const MatrixXd& a, const MatrixXd& b);
bool identical(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b);

/// Vertically concatenate equally wide matrices / vectors.
VectorXd concat(const std::vector<VectorXd>& parts);

/// Deterministic stream derivation (splitmix64) for seeding independent RNG streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ioql
