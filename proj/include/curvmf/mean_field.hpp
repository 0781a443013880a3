#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "curvmf/mesh.hpp"
#include "curvmf/operators.hpp"

namespace curvmf {

enum class Branch { chi_pos, chi_zero, chi_neg };

/// strict: the open set on which F is defined. extended: chi = 0 with
/// single-signed K, where only alpha != 0 is needed and C may have either sign.
enum class DomainMode { strict, extended };

std::string to_string(Branch b);

struct DomainStatus {
  bool member = false;
  /// lhs - rhs of the defining inequality, in units of alpha.
  double margin = 0.0;
  /// margin divided by the matching absolute-value scale; in [-1, 1].
  double relative_margin = 0.0;
  Branch branch = Branch::chi_zero;
};

class DomainError : public std::runtime_error {
public:
  DomainError(const std::string& what, DomainStatus s) : std::runtime_error(what), status(s) {}
  DomainStatus status;
};

struct ProblemSpec {
  std::shared_ptr<const IntrinsicMesh> mesh;
  std::shared_ptr<const OperatorSet> ops;
  /// Optional rotation structure; only used when a solve is run symmetric.
  std::shared_ptr<const SymmetryOrbits> orbits;
  Field K;  // per vertex
  Field h;  // per boundary slot of ops
  int chi = 0;
  double rho_bar = 0.0;

  DomainMode mode() const;
  int vertex_count() const { return ops->vertex_count(); }
};

/// Validates sizes and fills ops, chi and rho_bar.
ProblemSpec make_problem(std::shared_ptr<const IntrinsicMesh> mesh, Field K, Field h,
                         std::shared_ptr<const SymmetryOrbits> orbits = nullptr);
ProblemSpec make_problem(std::shared_ptr<const IntrinsicMesh> mesh, std::shared_ptr<const OperatorSet> ops, Field K,
                         Field h, std::shared_ptr<const SymmetryOrbits> orbits = nullptr);

/// alpha = int K e^(u - shift), beta = int h e^((u - shift)/2); the true
/// integrals are alpha e^shift and beta e^(shift/2). shift is 0 unless
/// max(u) > 700. The absolute-value integrals set the scale of margins.
struct Moments {
  double alpha = 0.0;
  double beta = 0.0;
  double alpha_abs = 0.0;
  double beta_abs = 0.0;
  double shift = 0.0;

  double true_alpha() const;
  double true_beta() const;
};

Moments compute_alpha_beta(const ProblemSpec& spec, const Field& u);

DomainStatus check_domain(int chi, double alpha, double beta, DomainMode mode = DomainMode::strict);
DomainStatus check_domain(int chi, const Moments& m, DomainMode mode = DomainMode::strict);

/// kappa = 8 pi chi for the curvature problem, lambda for the lambda family.
/// C solves C^2 alpha + C beta = kappa / 4 (larger root) and
/// F = kappa (log(sqrt(D) + beta) + beta / (sqrt(D) + beta)) in the positive case.
struct BranchValue {
  double C = 0.0;
  double F = 0.0;
};
BranchValue evaluate_branch(double kappa, double alpha, double beta);

double F_chi(int chi, double alpha, double beta, DomainMode mode = DomainMode::strict);
std::pair<double, double> dF_chi(int chi, double alpha, double beta, DomainMode mode = DomainMode::strict);
double compute_C(int chi, double alpha, double beta, DomainMode mode = DomainMode::strict);

struct MeanFieldState {
  Field u;
  Moments moments;
  DomainStatus domain;
  /// C of the true (unshifted) integrals.
  double C = 0.0;
  /// C of the shifted integrals; C = C_shifted e^(-shift/2).
  double C_shifted = 0.0;
  double F = 0.0;
  double dirichlet = 0.0;
  double J = 0.0;
  /// Zero-mean tangent projection of the nodal gradient.
  Field grad;
};

/// Area-weighted mean removed.
Field project_zero_mean(const OperatorSet& ops, const Field& u);
/// Component along the vertex-area vector removed (Euclidean inner product).
Field project_tangent(const OperatorSet& ops, const Field& g);

/// J(u) and its projected gradient. Throws DomainError outside the domain.
MeanFieldState energy(const ProblemSpec& spec, const Field& u);
/// J_lambda(u) on chi > 0 surfaces. Throws DomainError outside
/// alpha + beta_+^2 / lambda > 0.
MeanFieldState lambda_energy(const ProblemSpec& spec, const Field& u, double lambda);
Field lambda_gradient(const ProblemSpec& spec, const Field& u, double lambda);

/// v = u + 2 log C(u). Throws std::domain_error("non-geometric branch") if C <= 0.
Field normalize_solution(const ProblemSpec& spec, const Field& u);

struct FeasibilityReport {
  bool feasible = false;
  std::string clause;
};
FeasibilityReport sign_conditions(const ProblemSpec& spec);

/// Builds a zero-mean field in the domain by plateau bumps on sign regions.
/// Throws std::runtime_error("constructive search failed") when nothing works.
Field find_domain_point(const ProblemSpec& spec);

}  // namespace curvmf
