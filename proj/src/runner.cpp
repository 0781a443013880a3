#include "curvmf/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "curvmf/analysis.hpp"
#include "curvmf/curvature.hpp"

namespace curvmf::cli {

namespace {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kPi = std::numbers::pi;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = [] {
    std::set<std::string> curvature;
    for (const std::string f : {"K", "h"}) {
      curvature.insert(f);
      for (const char* k : {"value", "a", "b", "m", "center", "radius", "height", "file"}) {
        curvature.insert(f + "_" + k);
      }
    }
    return std::map<std::string, std::set<std::string>>{
        {"surface", {"generator", "k", "refinement", "length", "n_axial", "n_circ", "lengths"}},
        {"curvature", curvature},
        {"solver",
         {"grad_tol", "max_iters", "memory", "domain_margin", "backtrack_factor", "armijo_c", "symmetric", "seed",
          "lambda"}},
        {"experiment",
         {"type", "start", "samples", "steps", "eps", "symmetric", "D0", "n_min", "n_max", "loop", "delta", "lambdas",
          "deltas", "axis", "seed"}},
        {"output", {"dir", "off"}},
    };
  }();
  return keys;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}' as a number", where, raw));
  }
  return value;
}

bool parse_bool(const std::string& raw, const std::string& where) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", where, raw));
}

std::vector<double> parse_list(const std::string& raw, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(item, where));
  return out;
}

class Section {
public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (v) return trim(*v);
    return std::nullopt;
  }
  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  template <class T>
  void read(const std::string& key, T& target) const {
    auto v = raw(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      target = parse_bool(*v, where(key));
    } else if constexpr (std::is_same_v<T, std::string>) {
      target = *v;
    } else {
      target = parse_number<T>(*v, where(key));
    }
  }

private:
  const pt::ptree* tree_;
  std::string name_;
};

void read_field(const Section& s, const std::string& prefix, FieldConfig& f) {
  s.read(prefix, f.family);
  s.read(prefix + "_value", f.value);
  s.read(prefix + "_a", f.a);
  s.read(prefix + "_b", f.b);
  s.read(prefix + "_m", f.m);
  s.read(prefix + "_center", f.center);
  s.read(prefix + "_radius", f.radius);
  s.read(prefix + "_height", f.height);
  s.read(prefix + "_file", f.file);
}

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
  return s;
}

void add_field(std::vector<std::string>& lines, const std::string& p, const FieldConfig& f) {
  lines.push_back("curvature." + p + "=" + f.family);
  lines.push_back("curvature." + p + "_value=" + num(f.value));
  lines.push_back("curvature." + p + "_a=" + num(f.a));
  lines.push_back("curvature." + p + "_b=" + num(f.b));
  lines.push_back("curvature." + p + "_m=" + std::to_string(f.m));
  lines.push_back("curvature." + p + "_center=" + std::to_string(f.center));
  lines.push_back("curvature." + p + "_radius=" + num(f.radius));
  lines.push_back("curvature." + p + "_height=" + num(f.height));
  lines.push_back("curvature." + p + "_file=" + f.file);
}

Field build_field(const FieldConfig& f, const IntrinsicMesh& mesh, const std::string& name) {
  if (f.family == "constant") return constant_field(mesh, f.value);
  if (f.family == "azimuthal_cosine") {
    if (mesh.azimuth.empty()) {
      throw ConfigError(fmt::format("[curvature] {}: azimuthal_cosine needs a hemisphere or cylinder surface", name));
    }
    return azimuthal_cosine_field(mesh, f.a, f.b, f.m);
  }
  if (f.family == "cap_bump") {
    if (f.center < 0 || f.center >= mesh.vertex_count) {
      throw ConfigError(fmt::format("[curvature] {}_center: vertex {} out of range", name, f.center));
    }
    if (!(f.radius > 0)) throw ConfigError(fmt::format("[curvature] {}_radius must be positive", name));
    return constant_field(mesh, f.value) + cap_bump_field(mesh, f.center, f.radius, f.height);
  }
  if (f.family == "file") {
    std::ifstream in(f.file);
    if (!in) throw ConfigError(fmt::format("[curvature] {}_file: cannot open '{}'", name, f.file));
    try {
      return read_vertex_csv(in, mesh.vertex_count);
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("[curvature] {}_file: {}", name, e.what()));
    }
  }
  throw ConfigError(fmt::format("[curvature] {}: unknown family '{}'", name, f.family));
}

bool orbit_invariant(const SymmetryOrbits& orbits, const Field& f) {
  const double tol = 1e-12 * (1.0 + f.lpNorm<Eigen::Infinity>());
  for (Eigen::Index v = 0; v < f.size(); ++v) {
    if (std::abs(f[orbits.orbit_map[v]] - f[v]) > tol) return false;
  }
  return true;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

fs::path prepare_out(const RunConfig& cfg) {
  fs::path dir(cfg.output.dir);
  fs::create_directories(dir);
  return dir;
}

json base_report(const RunConfig& cfg, const std::string& experiment) {
  json j;
  j["experiment"] = experiment;
  j["spec_hash"] = cfg.hash();
  j["seed"] = cfg.seed;
  return j;
}

void put(json& j, const std::string& key, double x) {
  if (std::isfinite(x)) {
    j[key] = x;
  } else {
    j[key] = nullptr;
  }
}

void write_deficit_csv(const fs::path& path, const DeficitReport& r) {
  std::ofstream out(path);
  out << "parameter,lhs,rhs,deficit\n" << std::setprecision(17);
  for (const auto& s : r.samples) out << s.parameter << ',' << s.lhs << ',' << s.rhs << ',' << s.deficit << '\n';
}

json deficit_json(const DeficitReport& r) {
  json j;
  j["label"] = r.label;
  j["samples"] = r.samples.size();
  put(j, "max_deficit", r.max_deficit);
  j["all_finite"] = r.all_finite;
  if (r.bounded) j["bounded"] = *r.bounded;
  return j;
}

std::vector<double> geometric_steps(double lo, double hi, int steps) {
  std::vector<double> out(steps);
  for (int i = 0; i < steps; ++i) out[i] = steps == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (steps - 1));
  return out;
}

int first_boundary_vertex(const IntrinsicMesh& mesh) {
  return mesh.boundary_loops.empty() ? 0 : mesh.boundary_loops[0][0];
}

std::vector<int> orbit_of(const SymmetryOrbits& orbits, int v) {
  std::vector<int> out{v};
  for (int w = orbits.orbit_map[v]; w != v; w = orbits.orbit_map[w]) out.push_back(w);
  return out;
}

}  // namespace

// configuration ---------------------------------------------------------------

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("malformed config: {}", e.message()));
  }
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) {
      if (body.empty()) throw ConfigError(fmt::format("key '{}' outside any section", section));
      throw ConfigError(fmt::format("unknown section [{}]", section));
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError(fmt::format("[{}] unknown key '{}'", section, key));
    }
  }
  auto section = [&](const std::string& name) {
    auto child = tree.get_child_optional(name);
    return Section(child ? &*child : nullptr, name);
  };
  if (!tree.get_child_optional("surface")) throw ConfigError("missing [surface] section");

  RunConfig cfg;
  const Section surface = section("surface");
  surface.read("generator", cfg.surface.generator);
  if (cfg.surface.generator.empty()) throw ConfigError("[surface] generator is required");
  surface.read("k", cfg.surface.k);
  surface.read("refinement", cfg.surface.refinement);
  surface.read("length", cfg.surface.length);
  surface.read("n_axial", cfg.surface.n_axial);
  surface.read("n_circ", cfg.surface.n_circ);
  if (auto l = surface.raw("lengths")) {
    const auto v = parse_list(*l, surface.where("lengths"));
    if (v.size() != 3) throw ConfigError("[surface] lengths needs three values");
    std::copy(v.begin(), v.end(), cfg.surface.lengths.begin());
  }

  const Section curvature = section("curvature");
  read_field(curvature, "K", cfg.K);
  read_field(curvature, "h", cfg.h);

  const Section solver = section("solver");
  if (auto g = solver.raw("grad_tol")) cfg.solver.grad_tol = parse_number<double>(*g, solver.where("grad_tol"));
  solver.read("max_iters", cfg.solver.max_iters);
  solver.read("memory", cfg.solver.memory);
  solver.read("domain_margin", cfg.solver.domain_margin);
  solver.read("backtrack_factor", cfg.solver.backtrack_factor);
  solver.read("armijo_c", cfg.solver.armijo_c);
  solver.read("symmetric", cfg.solver.symmetric);
  if (auto l = solver.raw("lambda")) cfg.solver.lambda = parse_number<double>(*l, solver.where("lambda"));
  try {
    cfg.solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("[solver] {}", e.what()));
  }

  const Section ex = section("experiment");
  ex.read("type", cfg.experiment.type);
  ex.read("start", cfg.experiment.start);
  ex.read("samples", cfg.experiment.samples);
  ex.read("steps", cfg.experiment.steps);
  ex.read("eps", cfg.experiment.eps);
  ex.read("symmetric", cfg.experiment.symmetric);
  ex.read("D0", cfg.experiment.D0);
  ex.read("n_min", cfg.experiment.n_min);
  ex.read("n_max", cfg.experiment.n_max);
  ex.read("loop", cfg.experiment.loop);
  ex.read("delta", cfg.experiment.delta);
  ex.read("axis", cfg.experiment.axis);
  if (auto l = ex.raw("lambdas")) cfg.experiment.lambdas = parse_list(*l, ex.where("lambdas"));
  if (auto l = ex.raw("deltas")) cfg.experiment.deltas = parse_list(*l, ex.where("deltas"));

  std::optional<std::uint64_t> s1, s2;
  if (auto s = solver.raw("seed")) s1 = parse_number<std::uint64_t>(*s, solver.where("seed"));
  if (auto s = ex.raw("seed")) s2 = parse_number<std::uint64_t>(*s, ex.where("seed"));
  if (s1 && s2 && *s1 != *s2) throw ConfigError("[solver] seed and [experiment] seed disagree");
  cfg.seed = s2 ? *s2 : s1.value_or(0);
  cfg.solver.seed = cfg.seed;

  const Section output = section("output");
  output.read("dir", cfg.output.dir);
  output.read("off", cfg.output.off);

  static const std::set<std::string> types{"", "solve", "verify", "tm", "trace", "sharpness", "lambda_sweep", "perturb"};
  if (!types.count(cfg.experiment.type)) {
    throw ConfigError(fmt::format("[experiment] unknown type '{}'", cfg.experiment.type));
  }
  if (cfg.experiment.start != "domain_point" && cfg.experiment.start != "random") {
    throw ConfigError(fmt::format("[experiment] start must be domain_point or random, got '{}'", cfg.experiment.start));
  }
  if (cfg.experiment.samples < 1 || cfg.experiment.steps < 2) {
    throw ConfigError("[experiment] samples must be >= 1 and steps >= 2");
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path));
  return parse_config(in);
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.solver.seed = *o.seed;
  }
  if (o.out) cfg.output.dir = *o.out;
  if (o.refinement) cfg.surface.refinement = *o.refinement;
}

std::string RunConfig::canonical() const {
  std::vector<std::string> lines{
      "surface.generator=" + surface.generator,
      "surface.k=" + std::to_string(surface.k),
      "surface.refinement=" + std::to_string(surface.refinement),
      "surface.length=" + num(surface.length),
      "surface.n_axial=" + std::to_string(surface.n_axial),
      "surface.n_circ=" + std::to_string(surface.n_circ),
      "surface.lengths=" + join({surface.lengths.begin(), surface.lengths.end()}),
      "solver.grad_tol=" + (solver.grad_tol ? num(*solver.grad_tol) : std::string("auto")),
      "solver.max_iters=" + std::to_string(solver.max_iters),
      "solver.memory=" + std::to_string(solver.memory),
      "solver.domain_margin=" + num(solver.domain_margin),
      "solver.backtrack_factor=" + num(solver.backtrack_factor),
      "solver.armijo_c=" + num(solver.armijo_c),
      "solver.symmetric=" + std::to_string(solver.symmetric),
      "solver.lambda=" + (solver.lambda ? num(*solver.lambda) : std::string("none")),
      "seed=" + std::to_string(seed),
      "experiment.type=" + experiment.type,
      "experiment.start=" + experiment.start,
      "experiment.samples=" + std::to_string(experiment.samples),
      "experiment.steps=" + std::to_string(experiment.steps),
      "experiment.eps=" + num(experiment.eps),
      "experiment.symmetric=" + std::to_string(experiment.symmetric),
      "experiment.D0=" + num(experiment.D0),
      "experiment.n_min=" + std::to_string(experiment.n_min),
      "experiment.n_max=" + std::to_string(experiment.n_max),
      "experiment.loop=" + std::to_string(experiment.loop),
      "experiment.delta=" + num(experiment.delta),
      "experiment.lambdas=" + join(experiment.lambdas),
      "experiment.deltas=" + join(experiment.deltas),
      "experiment.axis=" + std::to_string(experiment.axis),
  };
  add_field(lines, "K", K);
  add_field(lines, "h", h);
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t x = 14695981039346656037ull;
  for (unsigned char c : canonical()) {
    x ^= c;
    x *= 1099511628211ull;
  }
  return fmt::format("{:016x}", x);
}

// problem ---------------------------------------------------------------------

Problem build_problem(const RunConfig& cfg, std::ostream& diag) {
  Problem p;
  const SurfaceConfig& s = cfg.surface;
  try {
    if (s.generator == "hemisphere") {
      HemisphereMesh hm = gen_hemisphere(s.k, s.refinement);
      p.mesh = std::make_shared<const IntrinsicMesh>(std::move(hm.mesh));
      p.orbits = std::make_shared<const SymmetryOrbits>(std::move(hm.orbits));
    } else if (s.generator == "cylinder") {
      p.mesh = std::make_shared<const IntrinsicMesh>(gen_flat_cylinder(s.length, s.n_axial, s.n_circ));
    } else if (s.generator == "pants") {
      p.mesh = std::make_shared<const IntrinsicMesh>(gen_pair_of_pants(s.lengths, s.refinement));
    } else {
      throw ConfigError(fmt::format("[surface] unknown generator '{}'", s.generator));
    }
  } catch (const MeshError& e) {
    throw ConfigError(fmt::format("[surface] {}", e.what()));
  }
  p.ops = std::make_shared<const OperatorSet>(assemble_operators(*p.mesh));
  if (!p.ops->degenerate_faces.empty()) {
    fmt::print(diag, "warning: {} near-degenerate faces (smallest angle below {})\n", p.ops->degenerate_faces.size(),
               OperatorSet::degenerate_angle);
  }
  Field K = build_field(cfg.K, *p.mesh, "K");
  Field h_full = build_field(cfg.h, *p.mesh, "h");
  if (cfg.solver.symmetric || cfg.experiment.symmetric) {
    if (!p.orbits) throw ConfigError("symmetric runs need a surface with a rotation (hemisphere)");
    if (!orbit_invariant(*p.orbits, K) || !orbit_invariant(*p.orbits, h_full)) {
      throw ConfigError("symmetric run requested but K or h is not invariant under the rotation");
    }
    // remove rounding-level asymmetry
    K = project_symmetric(*p.orbits, K);
    h_full = project_symmetric(*p.orbits, h_full);
  }
  p.spec = make_problem(p.mesh, p.ops, K, p.ops->restrict_to_boundary(h_full), p.orbits);
  if (cfg.solver.lambda && p.spec.chi <= 0) throw ConfigError("[solver] lambda needs a surface with chi > 0");
  return p;
}

void write_solution_csv(const Problem& p, const SolveResult& r, std::ostream& out) {
  const OperatorSet& ops = *p.ops;
  out << "vertex_id,u,v,K,h\n" << std::setprecision(17);
  for (int v = 0; v < ops.vertex_count(); ++v) {
    out << v << ',' << r.u_star[v] << ',' << r.v_star[v] << ',' << p.spec.K[v] << ',';
    if (ops.boundary_index[v] >= 0) out << p.spec.h[ops.boundary_index[v]];
    out << '\n';
  }
}

std::pair<Field, Field> read_solution_csv(std::istream& in, int vertex_count) {
  Field u = Field::Constant(vertex_count, std::numeric_limits<double>::quiet_NaN());
  Field v = u;
  std::vector<char> seen(vertex_count, 0);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("solution file is empty");
  int rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() < 3) throw ConfigError(fmt::format("solution row {}: expected vertex_id,u,v", rows + 1));
    const int id = parse_number<int>(cols[0], "solution vertex_id");
    if (id < 0 || id >= vertex_count) {
      throw ConfigError(fmt::format("solution has vertex {} but the mesh has {} vertices", id, vertex_count));
    }
    if (seen[id]++) throw ConfigError(fmt::format("solution lists vertex {} twice", id));
    auto value = [&](const std::string& s) {
      const std::string t = trim(s);
      if (t == "nan" || t == "-nan") return std::numeric_limits<double>::quiet_NaN();
      return parse_number<double>(t, "solution value");
    };
    u[id] = value(cols[1]);
    v[id] = value(cols[2]);
    ++rows;
  }
  if (rows != vertex_count) {
    throw ConfigError(fmt::format("solution has {} rows but the mesh has {} vertices", rows, vertex_count));
  }
  return {u, v};
}

// commands --------------------------------------------------------------------

int cmd_solve(const RunConfig& cfg, std::ostream& diag) {
  if (!cfg.experiment.type.empty() && cfg.experiment.type != "solve") {
    throw ConfigError(fmt::format("experiment '{}' is not run by 'solve'", cfg.experiment.type));
  }
  const Problem p = build_problem(cfg, diag);
  const ProblemSpec& spec = p.spec;
  SolverConfig solver = cfg.solver;
  const fs::path dir = prepare_out(cfg);
  json report = base_report(cfg, "solve");
  report["chi"] = spec.chi;

  std::optional<Field> u0;
  if (cfg.experiment.start == "random") {
    const auto fields =
        random_battery(*p.mesh, *p.ops, 2, cfg.seed, solver.symmetric ? p.orbits.get() : nullptr);
    u0 = fields[1];
    try {
      if (check_domain(spec.chi, compute_alpha_beta(spec, *u0), spec.mode()).relative_margin < solver.domain_margin) {
        throw DomainError("margin", {});
      }
    } catch (const DomainError&) {
      fmt::print(diag, "note: random start lies outside the energy domain, using the constructive start\n");
      u0.reset();
    }
  }

  SolveResult r;
  try {
    r = minimize(spec, solver, u0);
  } catch (const InfeasibleError& e) {
    fmt::print(diag, "infeasible: {}\n", e.what());
    report["error"] = e.what();
    write_json(dir / "report.json", report);
    return infeasible;
  }

  double pde = std::numeric_limits<double>::quiet_NaN();
  try {
    pde = solver.lambda ? lambda_gradient(spec, r.u_star, *solver.lambda).lpNorm<Eigen::Infinity>()
                        : pde_residual(spec, r.u_star);
  } catch (const DomainError&) {
  }
  const double gb = r.v_star.allFinite() ? gauss_bonnet_residual(spec, r.v_star)
                                         : std::numeric_limits<double>::quiet_NaN();
  put(report, "alpha", r.alpha);
  put(report, "beta", r.beta);
  put(report, "C", r.C_star);
  put(report, "J", r.J_star);
  report["residuals"] = json::object();
  put(report["residuals"], "gb", gb);
  put(report["residuals"], "pde", pde);
  report["iterations"] = r.iterations;
  report["termination"] = to_string(r.termination);
  report["sign_used"] = to_string(r.sign_used);
  report["converged"] = r.converged;
  report["degenerate"] = r.degenerate;
  report["grad_tol"] = solver.resolved_grad_tol(p.ops->vertex_count());
  report["vertex_count"] = p.ops->vertex_count();
  if (solver.lambda) report["lambda"] = *solver.lambda;

  write_json(dir / "report.json", report);
  {
    std::ofstream out(dir / "solution.csv");
    write_solution_csv(p, r, out);
  }
  {
    std::ofstream out(dir / "trace.csv");
    write_trace_csv(r.trace, out);
  }
  if (cfg.output.off && p.mesh->has_embedding()) {
    std::ofstream out(dir / "mesh.off");
    write_off(*p.mesh, out);
  }
  if (r.degenerate) fmt::print(diag, "note: minimizer sits on the degenerate C = 0 branch; v is undefined\n");
  if (!r.converged) {
    fmt::print(diag, "not converged: termination {} after {} iterations, |grad| = {:.3e}\n",
               to_string(r.termination), r.iterations, r.grad_norm);
    return not_converged;
  }
  return ok;
}

int cmd_verify(const RunConfig& cfg, const std::string& solution_path, std::ostream& diag) {
  const Problem p = build_problem(cfg, diag);
  const ProblemSpec& spec = p.spec;
  std::ifstream in(solution_path);
  if (!in) throw ConfigError(fmt::format("cannot read solution '{}'", solution_path));
  const auto [u, v_in] = read_solution_csv(in, p.ops->vertex_count());
  if (!u.allFinite()) throw ConfigError("solution u column has non-finite entries");

  json report = base_report(cfg, "verify");
  report["chi"] = spec.chi;
  report["residuals"] = json::object();
  double pde = std::numeric_limits<double>::quiet_NaN();
  try {
    const MeanFieldState st = cfg.solver.lambda ? lambda_energy(spec, u, *cfg.solver.lambda) : energy(spec, u);
    pde = st.grad.lpNorm<Eigen::Infinity>();
    put(report, "alpha", st.moments.true_alpha());
    put(report, "beta", st.moments.true_beta());
    put(report, "C", st.C);
    put(report, "J", st.J);
  } catch (const DomainError& e) {
    fmt::print(diag, "note: u lies outside the energy domain ({}); pde residual not defined\n", e.what());
    report["domain_error"] = e.what();
  }
  Field v = v_in;
  if (!v.allFinite()) {
    try {
      v = normalize_solution(spec, u);
    } catch (const std::exception&) {
    }
  }
  const double gb = v.allFinite() ? gauss_bonnet_residual(spec, v) : std::numeric_limits<double>::quiet_NaN();
  put(report["residuals"], "gb", gb);
  put(report["residuals"], "pde", pde);
  report["vertex_count"] = p.ops->vertex_count();
  write_json(prepare_out(cfg) / "report.json", report);
  return ok;
}

namespace {

int sweep_tm(const RunConfig& cfg, const Problem& p, const fs::path& dir, json& report) {
  const IntrinsicMesh& mesh = *p.mesh;
  const OperatorSet& ops = *p.ops;
  const ExperimentConfig& ex = cfg.experiment;
  const bool sym = ex.symmetric;
  const double coef = sym ? (1.0 + ex.eps) / (32.0 * kPi) : 1.0 / (16.0 * kPi);
  auto sample = [&](double param, const Field& u, double c) {
    const double lhs = tm_log_term(ops, u);
    const double rhs = c * dirichlet_energy(ops, u);
    return DeficitSample{param, lhs, rhs, lhs - rhs};
  };

  DeficitReport battery;
  battery.label = sym ? "symmetric_battery" : "battery";
  const auto fields = random_battery(mesh, ops, ex.samples, cfg.seed, sym ? p.orbits.get() : nullptr);
  battery.samples.resize(fields.size());
  parallel_for(static_cast<int>(fields.size()), [&](int i) { battery.samples[i] = sample(i, fields[i], coef); });
  battery.finish(false);

  const int b0 = first_boundary_vertex(mesh);
  std::vector<int> centers{b0};
  if (sym) centers = orbit_of(*p.orbits, b0);
  std::vector<std::vector<double>> dist;
  for (int c : centers) {
    const int src[1] = {c};
    dist.push_back(edge_distance(mesh, src));
  }
  const auto lambdas = geometric_steps(1.0, 1024.0, ex.steps);
  DeficitReport bubbles;
  bubbles.label = sym ? "symmetric_bubbles" : "bubbles";
  bubbles.samples.resize(lambdas.size());
  parallel_for(static_cast<int>(lambdas.size()), [&](int i) {
    bubbles.samples[i] = sample(lambdas[i], project_zero_mean(ops, multi_bubble(dist, lambdas[i])), coef);
  });
  bubbles.finish(true);

  DeficitReport spikes;
  spikes.label = sym ? "symmetric_spikes" : "spikes";
  spikes.samples.resize(ex.steps);
  parallel_for(ex.steps, [&](int i) {
    const double amp = 30.0 * i / (ex.steps - 1);
    Field u = Field::Zero(mesh.vertex_count);
    for (int c : centers) u += cap_bump_field(mesh, c, 0.3, amp);
    spikes.samples[i] = sample(amp, project_zero_mean(ops, u), coef);
  });
  spikes.finish(true);

  write_deficit_csv(dir / "battery.csv", battery);
  write_deficit_csv(dir / "bubbles.csv", bubbles);
  write_deficit_csv(dir / "spikes.csv", spikes);
  const bool bounded = battery.all_finite && *bubbles.bounded && *spikes.bounded;
  report["verdict"] = bounded ? "bounded" : "unbounded";
  put(report, "max_deficit", std::max({battery.max_deficit, bubbles.max_deficit, spikes.max_deficit}));
  report["samples"] = battery.samples.size() + bubbles.samples.size() + spikes.samples.size();
  report["coefficient"] = coef;
  report["reports"] = {deficit_json(battery), deficit_json(bubbles), deficit_json(spikes)};

  if (sym) {
    // same critical constant without symmetry, along a single boundary bubble
    DeficitReport contrast;
    contrast.label = "nonsymmetric_bubbles";
    contrast.samples.resize(lambdas.size());
    const std::vector<std::vector<double>> one{dist[0]};
    parallel_for(static_cast<int>(lambdas.size()), [&](int i) {
      contrast.samples[i] =
          sample(lambdas[i], project_zero_mean(ops, multi_bubble(one, lambdas[i])), 1.0 / (32.0 * kPi));
    });
    contrast.finish(true);
    write_deficit_csv(dir / "contrast.csv", contrast);
    report["reports"].push_back(deficit_json(contrast));
    put(report, "contrast_ratio", contrast.max_deficit / battery.max_deficit);
  }
  return ok;
}

int sweep_trace(const RunConfig& cfg, const Problem& p, const fs::path& dir, json& report) {
  const ProblemSpec& spec = p.spec;
  const ExperimentConfig& ex = cfg.experiment;
  double dm = 0.0;
  try {
    dm = quotient_max(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("trace experiment: {}", e.what()));
  }
  const double coef = 0.25 * (dm + ex.eps) * (dm + ex.eps);
  auto sample = [&](double param, const Field& u) {
    const double lhs = trace_quotient(spec, u);
    const double rhs = coef * dirichlet_energy(*p.ops, u);
    return DeficitSample{param, lhs, rhs, lhs - rhs};
  };
  DeficitReport battery;
  battery.label = "battery";
  const auto fields = random_battery(*p.mesh, *p.ops, ex.samples, cfg.seed);
  battery.samples.resize(fields.size());
  parallel_for(static_cast<int>(fields.size()), [&](int i) { battery.samples[i] = sample(i, fields[i]); });
  battery.finish(false);

  DeficitReport collar;
  collar.label = "collar";
  const std::vector<double> t = edge_distance(*p.mesh, p.mesh->boundary_loops.at(ex.loop));
  collar.samples.resize(ex.steps);
  parallel_for(ex.steps, [&](int i) {
    const int n = 1 << std::min(i, 20);
    collar.samples[i] = sample(n, collar_field(t, n, ex.delta));
  });
  collar.finish(true);

  write_deficit_csv(dir / "battery.csv", battery);
  write_deficit_csv(dir / "collar.csv", collar);
  report["verdict"] = battery.all_finite && *collar.bounded ? "bounded" : "unbounded";
  put(report, "max_deficit", std::max(battery.max_deficit, collar.max_deficit));
  report["samples"] = battery.samples.size() + collar.samples.size();
  report["quotient_max"] = dm;
  report["reports"] = {deficit_json(battery), deficit_json(collar)};
  return ok;
}

int sweep_sharpness(const RunConfig& cfg, const Problem& p, const fs::path& dir, json& report) {
  const ExperimentConfig& ex = cfg.experiment;
  std::vector<int> ns;
  for (long n = ex.n_min; n <= ex.n_max; n *= 2) ns.push_back(static_cast<int>(n));
  if (ns.size() < 2) throw ConfigError("[experiment] sharpness needs n_min < n_max");
  SharpnessSequence seq;
  try {
    seq = sharpness_sequence(p.spec, ex.D0, ns, ex.loop, ex.delta);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("sharpness experiment: {}", e.what()));
  }
  {
    std::ofstream out(dir / "sharpness.csv");
    out << "n,Q,E,value\n" << std::setprecision(17);
    for (std::size_t i = 0; i < ns.size(); ++i) {
      out << ns[i] << ',' << seq.Q[i] << ',' << seq.E[i] << ',' << seq.value[i] << '\n';
    }
  }
  const int tail = std::min<int>(5, static_cast<int>(ns.size()));
  const bool grows = seq.increasing_over_last(tail) && seq.value.back() > 10.0 * seq.value.front();
  const std::size_t half = ns.size() / 2;
  const double head_max = *std::max_element(seq.value.begin(), seq.value.begin() + half);
  const double tail_max = *std::max_element(seq.value.begin() + half, seq.value.end());
  report["verdict"] = grows ? "divergent" : (tail_max <= head_max ? "bounded" : "inconclusive");
  report["D0"] = ex.D0;
  report["quotient_max"] = quotient_max(p.spec);
  put(report, "max_deficit", *std::max_element(seq.value.begin(), seq.value.end()));
  report["samples"] = ns.size();
  report["n"] = ns;
  report["value"] = seq.value;
  return ok;
}

int sweep_lambda(const RunConfig& cfg, const Problem& p, const fs::path& dir, json& report) {
  const ExperimentConfig& ex = cfg.experiment;
  if (ex.lambdas.empty()) throw ConfigError("[experiment] lambda_sweep needs lambdas");
  if (p.spec.chi <= 0) throw ConfigError("lambda_sweep needs a surface with chi > 0");
  std::optional<Field> u0;
  if (ex.start == "random") {
    u0 = random_battery(*p.mesh, *p.ops, 2, cfg.seed, cfg.solver.symmetric ? p.orbits.get() : nullptr)[1];
  }
  const auto rows = lambda_sweep(p.spec, ex.lambdas, cfg.solver, u0);
  std::ofstream out(dir / "lambda_sweep.csv");
  out << "lambda,converged,termination,J_min,grad_norm,sup_u,iterations\n" << std::setprecision(17);
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  json table = json::array();
  for (const auto& r : rows) {
    out << r.lambda << ',' << r.converged << ',' << to_string(r.termination) << ',' << r.J_min << ','
        << r.grad_norm_star << ',' << r.sup_u << ',' << r.iterations << '\n';
    if (r.converged) {
      if (r.J_min > prev) monotone = false;
      prev = r.J_min;
    }
    json row;
    row["lambda"] = r.lambda;
    row["converged"] = r.converged;
    row["termination"] = to_string(r.termination);
    put(row, "J_min", r.J_min);
    put(row, "grad_norm", r.grad_norm_star);
    put(row, "sup_u", r.sup_u);
    row["iterations"] = r.iterations;
    table.push_back(row);
  }
  report["verdict"] = monotone ? "monotone" : "not_monotone";
  report["samples"] = rows.size();
  report["rows"] = table;
  return ok;
}

int sweep_perturb(const RunConfig& cfg, const Problem& p, const fs::path& dir, json& report) {
  const ExperimentConfig& ex = cfg.experiment;
  if (!p.orbits) throw ConfigError("perturb needs a surface with a rotation (hemisphere)");
  if (ex.deltas.empty()) throw ConfigError("[experiment] perturb needs deltas");
  if (ex.axis < 0 || ex.axis > 2 || !p.mesh->has_embedding()) throw ConfigError("[experiment] axis must be 0, 1 or 2");
  SolverConfig sym = cfg.solver;
  sym.symmetric = true;
  const SolveResult base = minimize(p.spec, sym);
  if (!base.converged) {
    report["error"] = "symmetric base solve did not converge";
    return not_converged;
  }
  Field pk(p.mesh->vertex_count);
  for (int v = 0; v < p.mesh->vertex_count; ++v) pk[v] = p.mesh->embedding[v][ex.axis];
  pk /= pk.lpNorm<Eigen::Infinity>();
  const Field ph = p.ops->restrict_to_boundary(pk);
  std::vector<PerturbationReport> rows(ex.deltas.size());
  parallel_for(static_cast<int>(rows.size()),
               [&](int i) { rows[i] = perturbation_experiment(p.spec, base, pk, ph, ex.deltas[i], cfg.solver); });
  std::ofstream out(dir / "perturb.csv");
  out << "delta,converged,termination,sup_distance,sign_changing_K,domain_rejections,iterations\n"
      << std::setprecision(17);
  json table = json::array();
  for (const auto& r : rows) {
    out << r.delta << ',' << r.converged << ',' << to_string(r.termination) << ',' << r.sup_distance << ','
        << r.sign_changing_K << ',' << r.domain_rejections << ',' << r.iterations << '\n';
    json row;
    row["delta"] = r.delta;
    row["converged"] = r.converged;
    row["termination"] = to_string(r.termination);
    put(row, "sup_distance", r.sup_distance);
    row["sign_changing_K"] = r.sign_changing_K;
    row["domain_rejections"] = r.domain_rejections;
    row["iterations"] = r.iterations;
    table.push_back(row);
  }
  const bool all = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.converged; });
  report["verdict"] = all ? "converged" : "flagged";
  report["samples"] = rows.size();
  report["rows"] = table;
  report["base_iterations"] = base.iterations;
  return ok;
}

}  // namespace

int cmd_sweep(const RunConfig& cfg, std::ostream& diag) {
  const std::string& type = cfg.experiment.type;
  if (type.empty() || type == "solve" || type == "verify") {
    throw ConfigError("'sweep' needs [experiment] type = tm | trace | sharpness | lambda_sweep | perturb");
  }
  const Problem p = build_problem(cfg, diag);
  const fs::path dir = prepare_out(cfg);
  json report = base_report(cfg, type);
  report["chi"] = p.spec.chi;
  int code = ok;
  if (type == "tm") {
    code = sweep_tm(cfg, p, dir, report);
  } else if (type == "trace") {
    code = sweep_trace(cfg, p, dir, report);
  } else if (type == "sharpness") {
    code = sweep_sharpness(cfg, p, dir, report);
  } else if (type == "lambda_sweep") {
    code = sweep_lambda(cfg, p, dir, report);
  } else {
    code = sweep_perturb(cfg, p, dir, report);
  }
  write_json(dir / "report.json", report);
  return code;
}

int cmd_mesh(const RunConfig& cfg, std::ostream& diag) {
  const Problem p = build_problem(cfg, diag);
  const fs::path dir = prepare_out(cfg);
  if (p.mesh->has_embedding()) {
    std::ofstream out(dir / "mesh.off");
    write_off(*p.mesh, out);
  }
  {
    std::ofstream out(dir / "edges.csv");
    write_edge_csv(*p.mesh, out);
  }
  {
    std::ofstream out(dir / "stiffness.csv");
    write_coo_csv(p.ops->stiffness, out);
  }
  const BackgroundReport bg = background_check(*p.mesh);
  json report = base_report(cfg, "mesh");
  report["vertex_count"] = p.mesh->vertex_count;
  report["edge_count"] = p.mesh->edge_count();
  report["face_count"] = p.mesh->face_count();
  report["chi"] = p.mesh->euler_characteristic();
  report["boundary_loops"] = p.mesh->boundary_loops.size();
  report["area"] = p.ops->total_area;
  report["boundary_length"] = p.ops->total_boundary;
  report["degenerate_faces"] = p.ops->degenerate_faces.size();
  report["gauss_bonnet_background"] = bg.residual;
  write_json(dir / "report.json", report);
  return ok;
}

int main_entry(int argc, const char* const* argv) {
  CLI::App app{"Prescribed curvature via the mean-field formulation"};
  app.require_subcommand(1);
  Overrides o;
  std::uint64_t seed = 0;
  std::string out;
  int refinement = 0;
  auto* seed_opt = app.add_option("--seed", seed, "override the random seed");
  auto* out_opt = app.add_option("--out", out, "override the output directory");
  auto* ref_opt = app.add_option("--refinement", refinement, "override the mesh refinement level");

  std::string config, solution;
  auto* solve = app.add_subcommand("solve", "minimize the mean-field energy");
  auto* verify = app.add_subcommand("verify", "residuals of a stored solution");
  auto* sweep = app.add_subcommand("sweep", "inequality and stability experiments");
  auto* mesh = app.add_subcommand("mesh", "export the mesh and operators");
  for (auto* sub : {solve, verify, sweep, mesh}) {
    sub->add_option("config", config, "INI configuration")->required();
    sub->fallthrough();
  }
  verify->add_option("solution", solution, "solution.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }
  if (*seed_opt) o.seed = seed;
  if (*out_opt) o.out = out;
  if (*ref_opt) o.refinement = refinement;

  try {
    RunConfig cfg = load_config(config);
    apply_overrides(cfg, o);
    if (*solve) return cmd_solve(cfg, std::cerr);
    if (*verify) return cmd_verify(cfg, solution, std::cerr);
    if (*sweep) return cmd_sweep(cfg, std::cerr);
    return cmd_mesh(cfg, std::cerr);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return config_error;
  } catch (const InfeasibleError& e) {
    fmt::print(stderr, "infeasible: {}\n", e.what());
    return infeasible;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return failure;
  }
}

}  // namespace curvmf::cli
