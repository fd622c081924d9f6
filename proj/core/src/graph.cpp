#include "ioql/graph.hpp"

#include <string>

#include "ioql/error.hpp"
#include "ioql/linalg.hpp"

namespace ioql {

namespace {

void check_index(const Digraph& g, std::size_t i) {
  require(i < g.node_count(), ErrorKind::InvalidArgument,
          "node index " + std::to_string(i) + " out of range for " +
              std::to_string(g.node_count()) + " nodes");
}

}  // namespace

Digraph::Digraph(Eigen::MatrixXd adjacency, Eigen::VectorXd pinning)
    : adjacency_(std::move(adjacency)), pinning_(std::move(pinning)) {
  require(adjacency_.rows() == adjacency_.cols(), ErrorKind::InvalidArgument,
          "adjacency matrix must be square");
  require(adjacency_.rows() > 0, ErrorKind::InvalidArgument, "graph needs at least one node");
  require(pinning_.size() == adjacency_.rows(), ErrorKind::InvalidArgument,
          "pinning vector length must equal node count");
  for (Eigen::Index i = 0; i < adjacency_.rows(); ++i) {
    require(adjacency_(i, i) == 0.0, ErrorKind::InvalidArgument,
            "self loop at node " + std::to_string(i));
    require(pinning_(i) >= 0.0, ErrorKind::InvalidArgument,
            "negative pinning gain at node " + std::to_string(i));
    for (Eigen::Index j = 0; j < adjacency_.cols(); ++j) {
      require(adjacency_(i, j) >= 0.0, ErrorKind::InvalidArgument,
              "negative edge weight a(" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
}

bool operator==(const Digraph& a, const Digraph& b) {
  return identical(a.adjacency_, b.adjacency_) && identical(a.pinning_, b.pinning_);
}

double Digraph::weight(std::size_t i, std::size_t j) const {
  check_index(*this, i);
  check_index(*this, j);
  return adjacency_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

double Digraph::pinning(std::size_t i) const {
  check_index(*this, i);
  return pinning_(static_cast<Eigen::Index>(i));
}

double in_degree(const Digraph& g, std::size_t i) {
  check_index(g, i);
  return g.adjacency().row(static_cast<Eigen::Index>(i)).sum();
}

Eigen::MatrixXd laplacian(const Digraph& g) {
  Eigen::MatrixXd l = -g.adjacency();
  for (Eigen::Index i = 0; i < l.rows(); ++i) l(i, i) = g.adjacency().row(i).sum();
  return l;
}

bool is_strongly_connected(const Digraph& g) {
  const std::size_t n = g.node_count();
  // Every node must reach node 0 and be reachable from it.
  auto reaches_all = [&](bool forward) {
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (std::size_t w = 0; w < n; ++w) {
        // Edge j -> i exists when a_ij > 0.
        const double a = forward ? g.adjacency()(w, v) : g.adjacency()(v, w);
        if (a > 0.0 && !seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
    for (bool s : seen)
      if (!s) return false;
    return true;
  };
  return reaches_all(true) && reaches_all(false);
}

std::vector<std::size_t> neighbors(const Digraph& g, std::size_t i) {
  check_index(g, i);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < g.node_count(); ++j) {
    if (g.adjacency()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) {
      out.push_back(j);
    }
  }
  return out;
}

void require_tracking_topology(const Digraph& g) {
  require(g.pinning().maxCoeff() > 0.0, ErrorKind::ValidationError,
          "graph.pinning: no leader pinning (at least one b_i must be positive)");
  require(is_strongly_connected(g), ErrorKind::ValidationError,
          "graph.adjacency: follower graph is not strongly connected");
}

}  // namespace ioql
