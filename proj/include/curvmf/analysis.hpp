#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "curvmf/minimizer.hpp"

namespace curvmf {

/// Runs body(i) for i in [0, n) on up to max_threads threads. Threads pick
/// indices dynamically; callers write results by index, so output order is
/// deterministic. max_threads = 0 reads CURVMF_THREADS (default: hardware).
void parallel_for(int n, const std::function<void(int)>& body, int max_threads = 0);
int thread_budget();

// residuals -----------------------------------------------------------------

/// |int K e^v + int h e^(v/2) - 2 pi chi|
double gauss_bonnet_residual(const ProblemSpec& spec, const Field& v);
/// Sup norm of the projected weak gradient of J; the quantity the solver
/// drives below grad_tol.
double pde_residual(const ProblemSpec& spec, const Field& u);
/// Per-node strong-form residual: projected gradient divided by vertex area.
Field pde_residual_nodes(const ProblemSpec& spec, const Field& u);

// Trudinger-Moser -----------------------------------------------------------

/// log(sqrt(B^2 + 8 pi A) + B) with A = int e^u, B = int_bdry e^(u/2),
/// evaluated with an overflow shift. u must have zero area-weighted mean.
double tm_log_term(const OperatorSet& ops, const Field& u);
/// tm_log_term(u) - coefficient * int |grad u|^2
double tm_deficit_with(const OperatorSet& ops, const Field& u, double coefficient);
/// coefficient 1 / (16 pi)
double tm_deficit(const IntrinsicMesh& mesh, const OperatorSet& ops, const Field& u);
/// coefficient (1 + eps) / (32 pi); u must be orbit-symmetric.
double tm_symmetric_deficit(const IntrinsicMesh& mesh, const SymmetryOrbits& orbits, const OperatorSet& ops,
                            const Field& u, double eps);
/// sqrt(b^2 + 8 pi a) + b <= (sqrt(1 + 8 pi) + 1) max(sqrt(a), b) for a, b > 0.
std::pair<double, double> elementary_inequality(double a, double b);

// trace inequality ----------------------------------------------------------

/// max over boundary slots of |h| / sqrt(|K|). Throws if K > 0 somewhere.
double quotient_max(const ProblemSpec& spec);
/// (int h e^(u/2))^2 / int |K| e^u
double trace_quotient(const ProblemSpec& spec, const Field& u);
/// trace_quotient - ((D_M + eps)^2 / 4) int |grad u|^2
double trace_deficit(const ProblemSpec& spec, const Field& u, double eps);

// sharpness -----------------------------------------------------------------

struct SharpnessSequence {
  double D0 = 0.0;
  std::vector<int> n;
  std::vector<double> Q;      // trace quotient of u_n
  std::vector<double> E;      // int |grad u_n|^2
  std::vector<double> value;  // Q - (D0^2 / 4) E

  bool increasing_over_last(int count) const;
};

/// u_n = xi_n(min(t, delta)), xi_n(t) = -2 log(1 + n t), t = edge distance to
/// boundary loop `loop`. Outside the collar the field is frozen at xi_n(delta).
Field collar_field(const std::vector<double>& t, int n, double delta);
SharpnessSequence sharpness_sequence(const ProblemSpec& spec, double D0, const std::vector<int>& n_list, int loop = 0,
                                     double delta = 0.5);

struct LogCorrectionFit {
  std::vector<int> n;
  std::vector<double> value;  // Q - E / 4
  double log_coefficient = 0.0;
  /// 2 |bdry| int_Gamma h_g from discrete turning defects of the loop.
  double reference_coefficient = 0.0;
};
/// Least-squares slope of Q - E/4 against log n.
LogCorrectionFit log_correction_fit(const ProblemSpec& spec, const std::vector<int>& n_list, int loop = 0,
                                    double delta = 0.5);

// F on the negative branch --------------------------------------------------

/// F_chi(-1, t) for chi < 0, evaluated for every real t.
double f_lemma(int chi, double t);

struct FBound {
  double eps = 0.0;
  double C_eps = 0.0;  // measured on the fitting grid
  double worst_violation = 0.0;  // max of f - (2+eps) t_+^2 - C_eps on the check grid
};
/// Measures C_eps on [t_min, t_max] and checks it on a finer and wider grid.
FBound f_bound(int chi, double eps, double t_min = -50.0, double t_max = 50.0);

// Jensen --------------------------------------------------------------------

/// (int -K e^u, |Sigma| exp(mean log |K|)). Vertices with K = 0 are dropped
/// from the log average and rhs is then reported as 0.
std::pair<double, double> jensen_lower_bound(const ProblemSpec& spec, const Field& u);

// batteries -----------------------------------------------------------------

struct DeficitSample {
  double parameter = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double deficit = 0.0;
};

struct DeficitReport {
  std::string label;
  std::vector<DeficitSample> samples;
  double max_deficit = 0.0;
  bool all_finite = true;
  /// Sweeps only: max over the second half <= max over the first half + slack.
  std::optional<bool> bounded;

  void finish(bool sweep, double slack = 0.25);
};

/// Zero-mean random smooth fields: sums of Gaussian bumps in edge distance
/// around random centers plus random constants-free low modes. Deterministic
/// in seed. With orbits the fields are orbit-averaged.
std::vector<Field> random_battery(const IntrinsicMesh& mesh, const OperatorSet& ops, int count, std::uint64_t seed,
                                  const SymmetryOrbits* orbits = nullptr);

/// -2 log(1 + lambda^2 d^2) for a distance field d.
Field bubble(const std::vector<double>& d, double lambda);
/// log sum_j (1 + lambda^2 d_j^2)^-2 over several distance fields.
Field multi_bubble(const std::vector<std::vector<double>>& d, double lambda);

// lambda family and perturbation -------------------------------------------

struct LambdaRow {
  double lambda = 0.0;
  bool converged = false;
  Termination termination = Termination::stalled;
  double J_min = 0.0;
  double grad_norm_star = 0.0;  // sqrt(int |grad u*|^2)
  double sup_u = 0.0;
  int iterations = 0;
};
std::vector<LambdaRow> lambda_sweep(const ProblemSpec& spec, const std::vector<double>& lambdas,
                                    const SolverConfig& config, std::optional<Field> u0 = std::nullopt);

struct PerturbationReport {
  double delta = 0.0;
  bool converged = false;
  Termination termination = Termination::stalled;
  double sup_distance = 0.0;
  bool sign_changing_K = false;
  int domain_rejections = 0;
  int iterations = 0;
};
/// Adds delta * p_K to K and delta * p_h to h, minimizes without symmetry
/// starting at base.u_star and compares with it.
PerturbationReport perturbation_experiment(const ProblemSpec& spec0, const SolveResult& base, const Field& p_K,
                                           const Field& p_h, double delta, const SolverConfig& config);

}  // namespace curvmf
