#include "ioql/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ioql/error.hpp"
#include "ioql/graph.hpp"
#include "ioql/linalg.hpp"

namespace ioql {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kScenarioFormat = "ioql-scenario";
constexpr std::string_view kGainsFormat = "ioql-gains";
constexpr std::string_view kReportFormat = "ioql-learning-report";
constexpr int kVersion = 1;

// Like dump(2), but arrays of scalars stay on one line so matrices read as
// one row per line.
void pretty(const ordered_json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) + 2, ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ",\n";
      first = false;
      out += pad + ordered_json(it.key()).dump() + ": ";
      pretty(it.value(), out, indent + 2);
    }
    out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "}";
  } else if (j.is_array()) {
    const bool flat = std::none_of(j.begin(), j.end(), [](const ordered_json& e) { return e.is_structured(); });
    if (flat) {
      out += "[";
      for (std::size_t k = 0; k < j.size(); ++k) out += (k ? ", " : "") + j[k].dump();
      out += "]";
      return;
    }
    out += "[\n";
    for (std::size_t k = 0; k < j.size(); ++k) {
      if (k) out += ",\n";
      out += pad;
      pretty(j[k], out, indent + 2);
    }
    out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "]";
  } else {
    out += j.dump();
  }
}

std::string pretty(const ordered_json& j) {
  std::string out;
  pretty(j, out, 0);
  return out + "\n";
}

[[noreturn]] void parse_fail(const std::string& field, const std::string& what) {
  fail(ErrorKind::ParseError, field + ": " + what);
}

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
  fail(ErrorKind::ValidationError, field + ": " + what);
}

const json& member(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) parse_fail(path + "." + key, "missing field");
  return obj.at(key);
}

double to_double(const json& v, const std::string& path) {
  if (!v.is_number()) parse_fail(path, "expected a number");
  return v.get<double>();
}

std::size_t to_size(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    parse_fail(path, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t to_u64(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    parse_fail(path, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string to_string_field(const json& v, const std::string& path) {
  if (!v.is_string()) parse_fail(path, "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd to_vector(const json& v, const std::string& path) {
  if (!v.is_array()) parse_fail(path, "expected a list of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) out(static_cast<Eigen::Index>(k)) = to_double(v[k], path + "[" + std::to_string(k) + "]");
  return out;
}

Eigen::MatrixXd to_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) parse_fail(path, "expected a matrix (non-empty list of rows)");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  if (cols == 0) parse_fail(path, "expected a matrix (non-empty list of rows)");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!v[r].is_array() || v[r].size() != cols) parse_fail(rp, "rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = to_double(v[r][c], rp + "[" + std::to_string(c) + "]");
    }
  }
  return out;
}

std::vector<Eigen::MatrixXd> to_matrix_list(const json& v, const std::string& path) {
  if (!v.is_array()) parse_fail(path, "expected a list of matrices");
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(to_matrix(v[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

ordered_json from_vector(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

ordered_json from_matrix(const Eigen::MatrixXd& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

ordered_json from_matrix_list(const std::vector<Eigen::MatrixXd>& ms) {
  ordered_json out = ordered_json::array();
  for (const auto& m : ms) out.push_back(from_matrix(m));
  return out;
}

void check_header(const json& j, std::string_view format, const std::string& what) {
  if (!j.is_object()) parse_fail(what, "expected a JSON object");
  if (to_string_field(member(j, "format", what), what + ".format") != format) {
    parse_fail(what + ".format", "expected \"" + std::string(format) + "\"");
  }
  if (!member(j, "version", what).is_number_integer() || j.at("version").get<int>() != kVersion) {
    parse_fail(what + ".version", "unsupported version");
  }
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    parse_fail(what, e.what());
  }
}

std::string_view data_mode_name(DataMode m) { return m == DataMode::ReuseBatch ? "reuse" : "fresh"; }
std::string_view probe_mode_name(ProbeMode m) { return m == ProbeMode::Fresh ? "fresh" : "fixed"; }

ordered_json layout_json(const KernelLayout& lay) {
  ordered_json nb = ordered_json::array();
  for (auto d : lay.neighbor_dims) nb.push_back(d);
  return ordered_json{{"own_dim", lay.own_dim}, {"neighbor_dims", nb}, {"output_dim", lay.output_dim},
                      {"horizon", lay.horizon}, {"total_dim", lay.total_dim()}};
}

KernelLayout parse_layout(const json& j, const std::string& path) {
  KernelLayout lay;
  lay.own_dim = to_size(member(j, "own_dim", path), path + ".own_dim");
  const json& nb = member(j, "neighbor_dims", path);
  if (!nb.is_array()) parse_fail(path + ".neighbor_dims", "expected a list");
  for (std::size_t k = 0; k < nb.size(); ++k) lay.neighbor_dims.push_back(to_size(nb[k], path + ".neighbor_dims"));
  lay.output_dim = to_size(member(j, "output_dim", path), path + ".output_dim");
  lay.horizon = to_size(member(j, "horizon", path), path + ".horizon");
  if (lay.own_dim == 0 || lay.output_dim == 0 || lay.horizon == 0) invalid(path, "dimensions must be positive");
  return lay;
}

ordered_json upper_json(const QKernel& k) {
  ordered_json out = ordered_json::array();
  for (double v : k.upper_triangle()) out.push_back(v);
  return out;
}

QKernel parse_kernel(const KernelLayout& lay, const json& v, const std::string& path) {
  const Eigen::VectorXd upper = to_vector(v, path);
  if (static_cast<std::size_t>(upper.size()) != lay.unknowns()) {
    invalid(path, "expected " + std::to_string(lay.unknowns()) + " upper-triangle entries");
  }
  return QKernel::from_upper(lay, std::span<const double>(upper.data(), static_cast<std::size_t>(upper.size())));
}

LearnerConfig parse_learner(const json& j, const MasModel& model) {
  LearnerConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) parse_fail("learner", "expected an object");
  const std::string p = "learner";
  if (j.contains("horizon")) c.horizon = to_size(j["horizon"], p + ".horizon");
  if (j.contains("exploration_amplitude")) c.exploration_amplitude = to_double(j["exploration_amplitude"], p + ".exploration_amplitude");
  if (j.contains("samples_per_iteration")) c.samples_per_iteration = to_size(j["samples_per_iteration"], p + ".samples_per_iteration");
  if (j.contains("epsilon")) c.convergence_epsilon = to_double(j["epsilon"], p + ".epsilon");
  if (j.contains("max_iterations")) c.max_iterations = to_size(j["max_iterations"], p + ".max_iterations");
  if (j.contains("ridge_lambda")) c.ridge_lambda = to_double(j["ridge_lambda"], p + ".ridge_lambda");
  if (j.contains("rank_rcond")) c.rank_rcond = to_double(j["rank_rcond"], p + ".rank_rcond");
  if (j.contains("seed")) c.rng_seed = to_u64(j["seed"], p + ".seed");
  if (j.contains("coupling")) {
    try {
      c.coupling_mode = parse_coupling(to_string_field(j["coupling"], p + ".coupling"));
    } catch (const Error& e) {
      invalid(p + ".coupling", e.what());
    }
  }
  if (j.contains("data_mode")) {
    const auto s = to_string_field(j["data_mode"], p + ".data_mode");
    if (s == "fresh") c.data_mode = DataMode::FreshPerIteration;
    else if (s == "reuse") c.data_mode = DataMode::ReuseBatch;
    else invalid(p + ".data_mode", "expected \"fresh\" or \"reuse\"");
  }
  if (j.contains("probe")) {
    const auto s = to_string_field(j["probe"], p + ".probe");
    if (s == "fixed") c.probe_mode = ProbeMode::Fixed;
    else if (s == "fresh") c.probe_mode = ProbeMode::Fresh;
    else invalid(p + ".probe", "expected \"fixed\" or \"fresh\"");
  }
  if (j.contains("heldout_samples")) c.heldout_samples = to_size(j["heldout_samples"], p + ".heldout_samples");
  if (j.contains("parallel")) {
    if (!j["parallel"].is_boolean()) parse_fail(p + ".parallel", "expected true or false");
    c.parallel = j["parallel"].get<bool>();
  }
  try {
    validate_config(c);
  } catch (const Error& e) {
    fail(ErrorKind::ValidationError, e.what());
  }
  if (j.contains("initial_kernels")) {
    const json& ks = j["initial_kernels"];
    if (!ks.is_array() || ks.size() != model.agent_count()) {
      invalid(p + ".initial_kernels", "expected one upper triangle per agent");
    }
    const std::size_t n_steps = resolve_horizon(model, c);
    std::vector<QKernel> kernels;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      kernels.push_back(parse_kernel(layout_for(model, i, n_steps), ks[i], p + ".initial_kernels[" + std::to_string(i) + "]"));
    }
    c.initial_kernels = std::move(kernels);
  }
  return c;
}

ordered_json learner_json(const LearnerConfig& c) {
  ordered_json j{{"horizon", c.horizon},
                 {"exploration_amplitude", c.exploration_amplitude},
                 {"samples_per_iteration", c.samples_per_iteration},
                 {"epsilon", c.convergence_epsilon},
                 {"max_iterations", c.max_iterations},
                 {"ridge_lambda", c.ridge_lambda},
                 {"rank_rcond", c.rank_rcond},
                 {"seed", c.rng_seed},
                 {"coupling", to_string(c.coupling_mode)},
                 {"data_mode", data_mode_name(c.data_mode)},
                 {"probe", probe_mode_name(c.probe_mode)},
                 {"heldout_samples", c.heldout_samples},
                 {"parallel", c.parallel}};
  if (c.initial_kernels) {
    ordered_json ks = ordered_json::array();
    for (const auto& k : *c.initial_kernels) ks.push_back(upper_json(k));
    j["initial_kernels"] = std::move(ks);
  }
  return j;
}

}  // namespace

bool operator==(const SimulationSettings& a, const SimulationSettings& b) {
  if (a.horizon != b.horizon || a.seed != b.seed) return false;
  if (a.initial_followers.has_value() != b.initial_followers.has_value()) return false;
  if (a.initial_followers) {
    if (a.initial_followers->size() != b.initial_followers->size()) return false;
    for (std::size_t i = 0; i < a.initial_followers->size(); ++i) {
      if (!identical((*a.initial_followers)[i], (*b.initial_followers)[i])) return false;
    }
  }
  if (a.initial_leader.has_value() != b.initial_leader.has_value()) return false;
  return !a.initial_leader || identical(*a.initial_leader, *b.initial_leader);
}

std::string_view to_string(CouplingMode mode) { return mode == CouplingMode::Delay ? "delay" : "exact"; }

CouplingMode parse_coupling(std::string_view text) {
  if (text == "exact") return CouplingMode::Exact;
  if (text == "delay") return CouplingMode::Delay;
  fail(ErrorKind::InvalidArgument, "coupling mode must be \"exact\" or \"delay\"");
}

Scenario parse_scenario(std::string_view text) {
  const json j = parse_json(text, "scenario");
  check_header(j, kScenarioFormat, "scenario");

  const json& gj = member(j, "graph", "scenario");
  const Eigen::MatrixXd adjacency = to_matrix(member(gj, "adjacency", "graph"), "graph.adjacency");
  const Eigen::VectorXd pinning = to_vector(member(gj, "pinning", "graph"), "graph.pinning");
  std::optional<Digraph> graph;
  try {
    graph.emplace(adjacency, pinning);
  } catch (const Error& e) {
    invalid("graph", e.what());
  }
  require_tracking_topology(*graph);
  const std::size_t agents = graph->node_count();

  const json& mj = member(j, "model", "scenario");
  const Eigen::MatrixXd a = to_matrix(member(mj, "A", "model"), "model.A");
  auto bs = to_matrix_list(member(mj, "B", "model"), "model.B");
  auto cs = to_matrix_list(member(mj, "C", "model"), "model.C");
  if (bs.size() != agents) invalid("model.B", "expected " + std::to_string(agents) + " matrices, one per follower");
  if (cs.size() != agents) invalid("model.C", "expected " + std::to_string(agents) + " matrices, one per follower");
  std::optional<MasModel> model;
  try {
    model.emplace(a, std::move(bs), std::move(cs), *graph);
  } catch (const Error& e) {
    invalid("model", e.what());
  }

  const json& wj = member(j, "weights", "scenario");
  const auto qs = to_matrix_list(member(wj, "Q", "weights"), "weights.Q");
  const auto rs = to_matrix_list(member(wj, "R_self", "weights"), "weights.R_self");
  if (qs.size() != agents) invalid("weights.Q", "expected one matrix per follower");
  if (rs.size() != agents) invalid("weights.R_self", "expected one matrix per follower");
  CostWeights weights;
  for (std::size_t i = 0; i < agents; ++i) {
    weights.push_back({qs[i], rs[i], std::vector<Eigen::MatrixXd>(neighbors(*graph, i).size())});
  }
  const json& rn = wj.contains("R_neighbor") ? wj["R_neighbor"] : json::array();
  if (!rn.is_array()) parse_fail("weights.R_neighbor", "expected a list of {agent, neighbor, R}");
  std::vector<std::vector<bool>> seen(agents);
  for (std::size_t i = 0; i < agents; ++i) seen[i].assign(weights[i].r_neighbor.size(), false);
  for (std::size_t k = 0; k < rn.size(); ++k) {
    const std::string p = "weights.R_neighbor[" + std::to_string(k) + "]";
    const std::size_t ai = to_size(member(rn[k], "agent", p), p + ".agent");
    const std::size_t nj = to_size(member(rn[k], "neighbor", p), p + ".neighbor");
    if (ai < 1 || ai > agents || nj < 1 || nj > agents) invalid(p, "agent ids are 1-based follower indices");
    const auto nb = neighbors(*graph, ai - 1);
    const auto it = std::find(nb.begin(), nb.end(), nj - 1);
    if (it == nb.end()) invalid(p, "follower " + std::to_string(nj) + " is not a neighbor of " + std::to_string(ai));
    const auto slot = static_cast<std::size_t>(it - nb.begin());
    if (seen[ai - 1][slot]) invalid(p, "duplicate entry");
    seen[ai - 1][slot] = true;
    weights[ai - 1].r_neighbor[slot] = to_matrix(member(rn[k], "R", p), p + ".R");
  }
  for (std::size_t i = 0; i < agents; ++i) {
    const auto nb = neighbors(*graph, i);
    for (std::size_t s = 0; s < nb.size(); ++s) {
      if (!seen[i][s]) {
        invalid("weights.R_neighbor", "missing R_ij for agent " + std::to_string(i + 1) + ", neighbor " +
                                          std::to_string(nb[s] + 1));
      }
    }
  }
  validate_weights(*model, weights);

  LearnerConfig learner = parse_learner(j.contains("learner") ? j["learner"] : json(), *model);

  SimulationSettings sim;
  if (j.contains("simulation")) {
    const json& sj = j["simulation"];
    if (!sj.is_object()) parse_fail("simulation", "expected an object");
    if (sj.contains("horizon")) sim.horizon = to_size(sj["horizon"], "simulation.horizon");
    if (sim.horizon == 0) invalid("simulation.horizon", "must be positive");
    if (sj.contains("seed")) sim.seed = to_u64(sj["seed"], "simulation.seed");
    const auto n = static_cast<Eigen::Index>(model->state_dim());
    if (sj.contains("initial_followers")) {
      const json& fj = sj["initial_followers"];
      if (!fj.is_array() || fj.size() != agents) invalid("simulation.initial_followers", "expected one state per follower");
      std::vector<Eigen::VectorXd> xs;
      for (std::size_t i = 0; i < agents; ++i) {
        const std::string p = "simulation.initial_followers[" + std::to_string(i) + "]";
        xs.push_back(to_vector(fj[i], p));
        if (xs.back().size() != n) invalid(p, "expected " + std::to_string(n) + " entries");
      }
      sim.initial_followers = std::move(xs);
    }
    if (sj.contains("initial_leader")) {
      sim.initial_leader = to_vector(sj["initial_leader"], "simulation.initial_leader");
      if (sim.initial_leader->size() != n) invalid("simulation.initial_leader", "expected " + std::to_string(n) + " entries");
    }
    if (sim.initial_followers.has_value() != sim.initial_leader.has_value()) {
      invalid("simulation", "initial_followers and initial_leader must be given together");
    }
  }

  std::string out_dir;
  if (j.contains("output_dir")) out_dir = to_string_field(j["output_dir"], "output_dir");
  return Scenario{std::move(*model), std::move(weights), std::move(learner), std::move(sim), std::move(out_dir)};
}

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_text(path)); }

std::string serialize_scenario(const Scenario& s) {
  const auto& model = s.model;
  const auto& g = model.graph();
  ordered_json j;
  j["format"] = kScenarioFormat;
  j["version"] = kVersion;
  j["graph"] = ordered_json{{"adjacency", from_matrix(g.adjacency())}, {"pinning", from_vector(g.pinning())}};
  j["model"] = ordered_json{{"A", from_matrix(model.a())},
                            {"B", from_matrix_list(model.b_matrices())},
                            {"C", from_matrix_list(model.c_matrices())}};
  ordered_json qs = ordered_json::array(), rs = ordered_json::array(), rn = ordered_json::array();
  for (std::size_t i = 0; i < s.weights.size(); ++i) {
    qs.push_back(from_matrix(s.weights[i].q));
    rs.push_back(from_matrix(s.weights[i].r_self));
    const auto nb = neighbors(g, i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      rn.push_back(ordered_json{{"agent", i + 1}, {"neighbor", nb[k] + 1}, {"R", from_matrix(s.weights[i].r_neighbor[k])}});
    }
  }
  j["weights"] = ordered_json{{"Q", qs}, {"R_self", rs}, {"R_neighbor", rn}};
  j["learner"] = learner_json(s.learner);
  ordered_json sim{{"horizon", s.simulation.horizon}, {"seed", s.simulation.seed}};
  if (s.simulation.initial_followers) {
    ordered_json xs = ordered_json::array();
    for (const auto& x : *s.simulation.initial_followers) xs.push_back(from_vector(x));
    sim["initial_followers"] = std::move(xs);
  }
  if (s.simulation.initial_leader) sim["initial_leader"] = from_vector(*s.simulation.initial_leader);
  j["simulation"] = std::move(sim);
  j["output_dir"] = s.output_dir;
  return pretty(j);
}

Scenario demo_scenario() {
  Eigen::MatrixXd adjacency = Eigen::MatrixXd::Zero(3, 3);
  adjacency(0, 2) = 1.0;
  adjacency(1, 0) = 1.0;
  adjacency(2, 1) = 1.0;
  Eigen::VectorXd pinning(3);
  pinning << 1.0, 0.0, 0.0;
  Eigen::MatrixXd a(2, 2);
  a << 0.0, 1.0, -1.0, 0.0;
  std::vector<Eigen::MatrixXd> bs(3, Eigen::MatrixXd(2, 1));
  bs[0] << 2.0, 1.0;
  bs[1] << 2.0, 3.0;
  bs[2] << 2.0, 2.0;
  std::vector<Eigen::MatrixXd> cs(3, Eigen::MatrixXd::Identity(2, 2));
  MasModel model(a, bs, cs, Digraph(adjacency, pinning));
  CostWeights weights;
  for (std::size_t i = 0; i < 3; ++i) {
    weights.push_back({Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Constant(1, 1, 2.0),
                       {Eigen::MatrixXd::Constant(1, 1, 0.1)}});
  }
  LearnerConfig learner;
  learner.horizon = 2;
  learner.samples_per_iteration = 200;
  learner.max_iterations = 100;
  return Scenario{std::move(model), std::move(weights), learner, SimulationSettings{}, "demo-out"};
}

SwarmState initial_state(const Scenario& s) {
  if (s.simulation.initial_followers && s.simulation.initial_leader) {
    return SwarmState{*s.simulation.initial_followers, *s.simulation.initial_leader, 0};
  }
  return random_state(s.model, s.simulation.seed);
}

std::string serialize_gains(const GainsFile& g) {
  ordered_json j;
  j["format"] = kGainsFormat;
  j["version"] = kVersion;
  j["horizon"] = g.horizon;
  j["coupling"] = to_string(g.coupling);
  ordered_json agents = ordered_json::array();
  for (std::size_t i = 0; i < g.gains.size(); ++i) {
    const auto& pg = g.gains[i];
    ordered_json a;
    a["agent"] = i + 1;
    a["layout"] = layout_json(pg.layout);
    if (i < g.kernels.size()) a["kernel_upper"] = upper_json(g.kernels[i]);
    a["g_own_past"] = from_matrix(pg.g_own_past);
    a["g_neighbors"] = from_matrix(pg.g_neighbors);
    a["g_output"] = from_matrix(pg.g_output);
    a["inverted_term"] = from_matrix(pg.inverted_term);
    agents.push_back(std::move(a));
  }
  j["agents"] = std::move(agents);
  return pretty(j);
}

namespace {

// Gain blocks may legitimately have zero columns (N = 1 or no neighbors),
// which the row-list format cannot express; those are stored as m empty rows.
Eigen::MatrixXd to_gain_block(const json& v, Eigen::Index rows, Eigen::Index cols, const std::string& path) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != rows) parse_fail(path, "expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = v[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      invalid(path, "expected " + std::to_string(cols) + " columns");
    }
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = to_double(row[static_cast<std::size_t>(c)], path);
  }
  return out;
}

}  // namespace

GainsFile parse_gains(std::string_view text) {
  const json j = parse_json(text, "gains");
  check_header(j, kGainsFormat, "gains");
  GainsFile g;
  g.horizon = to_size(member(j, "horizon", "gains"), "gains.horizon");
  try {
    g.coupling = parse_coupling(to_string_field(member(j, "coupling", "gains"), "gains.coupling"));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw;
    invalid("gains.coupling", e.what());
  }
  const json& agents = member(j, "agents", "gains");
  if (!agents.is_array() || agents.empty()) parse_fail("gains.agents", "expected a non-empty list");
  bool with_kernels = true;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string p = "gains.agents[" + std::to_string(i) + "]";
    const json& a = agents[i];
    PolicyGains pg;
    pg.layout = parse_layout(member(a, "layout", p), p + ".layout");
    if (pg.layout.horizon != g.horizon) invalid(p + ".layout.horizon", "does not match gains.horizon");
    const auto m = static_cast<Eigen::Index>(pg.layout.own_dim);
    const auto n_steps = static_cast<Eigen::Index>(pg.layout.horizon);
    const auto nb_w = static_cast<Eigen::Index>(pg.layout.output_offset()) - m * n_steps;
    pg.g_own_past = to_gain_block(member(a, "g_own_past", p), m, m * (n_steps - 1), p + ".g_own_past");
    pg.g_neighbors = to_gain_block(member(a, "g_neighbors", p), m, nb_w, p + ".g_neighbors");
    pg.g_output = to_gain_block(member(a, "g_output", p), m, static_cast<Eigen::Index>(pg.layout.output_dim) * n_steps,
                                p + ".g_output");
    pg.inverted_term = to_gain_block(member(a, "inverted_term", p), m, m, p + ".inverted_term");
    if (a.contains("kernel_upper") && with_kernels) {
      g.kernels.push_back(parse_kernel(pg.layout, a["kernel_upper"], p + ".kernel_upper"));
    } else {
      with_kernels = false;
      g.kernels.clear();
    }
    g.gains.push_back(std::move(pg));
  }
  return g;
}

GainsFile load_gains(const std::filesystem::path& path) { return parse_gains(read_text(path)); }

void check_gains_compatible(const Scenario& s, const GainsFile& g) {
  if (g.gains.size() != s.model.agent_count()) {
    invalid("gains.agents", "expected " + std::to_string(s.model.agent_count()) + " agents");
  }
  for (std::size_t i = 0; i < g.gains.size(); ++i) {
    if (!(g.gains[i].layout == layout_for(s.model, i, g.horizon))) {
      invalid("gains.agents[" + std::to_string(i) + "].layout", "does not match the scenario");
    }
  }
}

std::string serialize_report(const LearningReport& r) {
  ordered_json j;
  j["format"] = kReportFormat;
  j["version"] = kVersion;
  j["seed"] = r.config.rng_seed;
  j["config"] = learner_json(r.config);
  j["horizon"] = r.horizon;
  j["samples_per_iteration"] = r.samples_per_iteration;
  ordered_json lays = ordered_json::array();
  for (const auto& l : r.layouts) lays.push_back(layout_json(l));
  j["layouts"] = std::move(lays);
  j["converged"] = r.converged;
  j["iteration_count"] = r.iteration_count;
  j["final_delta"] = r.final_delta;
  j["heldout_residuals"] = r.heldout_residuals;
  ordered_json its = ordered_json::array();
  for (const auto& it : r.iterations) {
    ordered_json ks = ordered_json::array();
    for (const auto& k : it.kernels) ks.push_back(upper_json(k));
    its.push_back(ordered_json{{"iteration", it.index},
                               {"max_delta", it.max_delta},
                               {"deltas", it.deltas},
                               {"feature_ranks", it.feature_ranks},
                               {"window_ranks", it.window_ranks},
                               {"train_residuals", it.train_residuals},
                               {"kernels_upper", std::move(ks)}});
  }
  j["iterations"] = std::move(its);
  return pretty(j);
}

std::string kernel_trace_csv(const LearningReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,agent,row,col,value\n";
  for (const auto& it : r.iterations) {
    for (std::size_t i = 0; i < it.kernels.size(); ++i) {
      const auto& m = it.kernels[i].matrix();
      for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index b = a; b < m.cols(); ++b) {
          os << it.index << ',' << i + 1 << ',' << a + 1 << ',' << b + 1 << ',' << m(a, b) << '\n';
        }
    }
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace ioql
