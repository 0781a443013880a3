#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "curvmf/minimizer.hpp"

namespace curvmf::cli {

enum ExitCode : int { ok = 0, failure = 1, infeasible = 2, not_converged = 3, config_error = 4 };

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct SurfaceConfig {
  std::string generator;  // hemisphere | cylinder | pants
  int k = 2;
  int refinement = 5;
  double length = 1.0;
  int n_axial = 64;
  int n_circ = 64;
  std::array<double, 3> lengths{1.0, 1.0, 1.0};
};

struct FieldConfig {
  std::string family = "constant";  // constant | azimuthal_cosine | cap_bump | file
  double value = 0.0;
  double a = 0.0, b = 0.0;
  int m = 1;
  int center = 0;
  double radius = 0.5, height = 1.0;
  std::string file;
};

struct ExperimentConfig {
  std::string type;  // solve | verify | tm | trace | sharpness | lambda_sweep | perturb
  std::string start = "domain_point";  // domain_point | random
  int samples = 1000;
  int steps = 30;
  double eps = 0.1;
  bool symmetric = false;
  double D0 = 0.8;
  int n_min = 2, n_max = 1024;
  int loop = 0;
  double delta = 0.5;
  std::vector<double> lambdas;
  std::vector<double> deltas;
  int axis = 1;
};

struct OutputConfig {
  std::string dir = "out";
  bool off = true;
};

struct RunConfig {
  SurfaceConfig surface;
  FieldConfig K, h;
  SolverConfig solver;
  ExperimentConfig experiment;
  OutputConfig output;
  std::uint64_t seed = 0;

  /// Sorted key=value listing of every resolved setting except output.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), as 16 hex digits.
  std::string hash() const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> refinement;
};
void apply_overrides(RunConfig& cfg, const Overrides& o);

struct Problem {
  std::shared_ptr<const IntrinsicMesh> mesh;
  std::shared_ptr<const OperatorSet> ops;
  std::shared_ptr<const SymmetryOrbits> orbits;
  ProblemSpec spec;
};
/// Builds mesh, operators and curvature data. Incompatible generator and
/// curvature settings raise ConfigError before any solve runs.
Problem build_problem(const RunConfig& cfg, std::ostream& diag);

/// Header vertex_id,u,v,K,h; h is empty off the boundary.
void write_solution_csv(const Problem& p, const SolveResult& r, std::ostream& out);
/// Returns (u, v) columns. Throws ConfigError on a dimension mismatch.
std::pair<Field, Field> read_solution_csv(std::istream& in, int vertex_count);

int cmd_solve(const RunConfig& cfg, std::ostream& diag);
int cmd_verify(const RunConfig& cfg, const std::string& solution_path, std::ostream& diag);
int cmd_sweep(const RunConfig& cfg, std::ostream& diag);
int cmd_mesh(const RunConfig& cfg, std::ostream& diag);

/// Full command line entry point used by the curvmf binary.
int main_entry(int argc, const char* const* argv);

}  // namespace curvmf::cli
