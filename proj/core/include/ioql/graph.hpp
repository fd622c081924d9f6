#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace ioql {

/// Leader-follower communication topology.
///
/// `adjacency(i, j) > 0` means follower i receives information from follower j;
/// `pinning(i) > 0` means follower i observes the leader directly. Nodes are
/// zero-based throughout the library; neighbor sets are always reported in
/// ascending index order, which fixes the block layout of every stacked data
/// vector built from them.
class Digraph {
 public:
  /// Throws InvalidArgument on non-square adjacency, size mismatch, self loops
  /// or negative weights.
  Digraph(Eigen::MatrixXd adjacency, Eigen::VectorXd pinning);

  std::size_t node_count() const { return static_cast<std::size_t>(adjacency_.rows()); }
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  const Eigen::VectorXd& pinning() const { return pinning_; }
  double weight(std::size_t i, std::size_t j) const;
  double pinning(std::size_t i) const;

  friend bool operator==(const Digraph& a, const Digraph& b);

 private:
  Eigen::MatrixXd adjacency_;
  Eigen::VectorXd pinning_;
};

double in_degree(const Digraph& g, std::size_t i);

Eigen::MatrixXd laplacian(const Digraph& g);

bool is_strongly_connected(const Digraph& g);

std::vector<std::size_t> neighbors(const Digraph& g, std::size_t i);

/// Tracking requires a strongly connected follower graph with at least one
/// pinned node. Throws ValidationError otherwise.
void require_tracking_topology(const Digraph& g);

}  // namespace ioql
