#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "curvmf/mean_field.hpp"

namespace curvmf {

struct SolverConfig {
  /// Default 1e-8 * sqrt(vertex_count) when unset.
  std::optional<double> grad_tol;
  int max_iters = 10000;
  int memory = 10;
  /// Minimum relative domain margin an accepted iterate must keep.
  double domain_margin = 1e-10;
  double backtrack_factor = 0.5;
  double armijo_c = 1e-4;
  bool symmetric = false;
  std::uint64_t seed = 0;
  /// Minimize J_lambda instead of J when set.
  std::optional<double> lambda;

  void validate() const;
  double resolved_grad_tol(int vertex_count) const;
};

enum class Termination { grad_tol, stalled, max_iters, domain_boundary };
enum class SignUsed { h, minus_h, not_applicable };

std::string to_string(Termination t);
std::string to_string(SignUsed s);

struct TraceRow {
  int iter = 0;
  double J = 0, grad_norm = 0, alpha = 0, beta = 0, C = 0, step = 0, domain_margin = 0;
};

struct SolveResult {
  Field u_star;
  /// NaN when the solve ended on the degenerate C = 0 branch.
  Field v_star;
  double C_star = 0.0;
  double J_star = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  Termination termination = Termination::stalled;
  SignUsed sign_used = SignUsed::not_applicable;
  bool degenerate = false;
  /// Trial points rejected by the domain guard.
  int domain_rejections = 0;
  std::vector<TraceRow> trace;
};

class InfeasibleError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Orbit average: result[v] = mean of u over the orbit of v.
Field project_symmetric(const SymmetryOrbits& orbits, const Field& u);

/// Preconditioned L-BFGS with Armijo backtracking. Trial points are mean
/// projected (and orbit averaged when configured); a trial point whose
/// relative domain margin falls below config.domain_margin is rejected by
/// shrinking the step.
SolveResult minimize(const ProblemSpec& spec, const SolverConfig& config, std::optional<Field> u0 = std::nullopt);

/// chi = 0: classify the sign of C at the minimizer and set v_star.
SolveResult resolve_sign(const ProblemSpec& spec, SolveResult result);

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out);

}  // namespace curvmf
