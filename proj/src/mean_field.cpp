#include "curvmf/mean_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace curvmf {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kShiftThreshold = 700.0;

double pos(double t) { return std::max(t, 0.0); }
double neg(double t) { return std::max(-t, 0.0); }

DomainStatus domain_status(double kappa, double alpha, double beta, double A, double B, DomainMode mode) {
  DomainStatus s;
  s.branch = kappa > 0 ? Branch::chi_pos : (kappa < 0 ? Branch::chi_neg : Branch::chi_zero);
  if (!std::isfinite(alpha) || !std::isfinite(beta)) return s;
  if (kappa > 0) {
    s.margin = alpha + pos(beta) * pos(beta) / kappa;
    const double scale = A + B * B / kappa;
    s.relative_margin = scale > 0 ? s.margin / scale : 0.0;
  } else if (kappa < 0) {
    const double k = -kappa;
    s.margin = -neg(beta) * neg(beta) / k - alpha;
    const double scale = A + B * B / k;
    s.relative_margin = scale > 0 ? s.margin / scale : 0.0;
  } else if (mode == DomainMode::extended) {
    s.margin = std::abs(alpha);
    s.relative_margin = A > 0 ? s.margin / A : 0.0;
  } else {
    s.margin = -alpha * beta;
    if (A > 0 && B > 0 && s.margin != 0.0) {
      s.relative_margin = std::copysign(std::min(std::abs(alpha) / A, std::abs(beta) / B), s.margin);
    }
  }
  s.member = s.relative_margin > 0.0 && std::isfinite(s.margin);
  return s;
}

double kappa_of(int chi) { return 8.0 * kPi * chi; }

MeanFieldState evaluate(const ProblemSpec& spec, const Field& u, double kappa, DomainMode mode) {
  const OperatorSet& ops = *spec.ops;
  if (u.size() != ops.vertex_count()) throw std::invalid_argument("energy: field has wrong dimension");
  MeanFieldState st;
  st.u = u;
  st.moments = compute_alpha_beta(spec, u);
  const Moments& m = st.moments;
  st.domain = domain_status(kappa, m.alpha, m.beta, m.alpha_abs, m.beta_abs, mode);
  st.domain.margin *= std::exp(m.shift);
  if (!st.domain.member) throw DomainError("state outside the energy domain", st.domain);

  const BranchValue bv = evaluate_branch(kappa, m.alpha, m.beta);
  st.C_shifted = bv.C;
  st.C = bv.C * std::exp(-0.5 * m.shift);
  st.F = bv.F + 0.5 * kappa * m.shift;
  const Field Su = ops.stiffness * u;
  st.dirichlet = u.dot(Su);
  st.J = 0.5 * st.dirichlet - st.F;

  const double ca = 2.0 * bv.C * bv.C;
  const double cb = 2.0 * bv.C;
  Field g = Su;
  for (int i = 0; i < ops.vertex_count(); ++i) {
    g[i] -= ca * spec.K[i] * std::exp(u[i] - m.shift) * ops.vertex_areas[i];
  }
  for (int b = 0; b < ops.boundary_count(); ++b) {
    const int v = ops.boundary_vertices[b];
    g[v] -= cb * spec.h[b] * std::exp(0.5 * (u[v] - m.shift)) * ops.boundary_weights[b];
  }
  st.grad = project_tangent(ops, g);
  return st;
}

}  // namespace

std::string to_string(Branch b) {
  switch (b) {
    case Branch::chi_pos: return "chi_pos";
    case Branch::chi_zero: return "chi_zero";
    case Branch::chi_neg: return "chi_neg";
  }
  return "?";
}

DomainMode ProblemSpec::mode() const {
  if (chi != 0 || K.size() == 0) return DomainMode::strict;
  const double lo = K.minCoeff(), hi = K.maxCoeff();
  const bool single_signed = lo >= 0.0 || hi <= 0.0;
  const bool nonzero = lo != 0.0 || hi != 0.0;
  return single_signed && nonzero ? DomainMode::extended : DomainMode::strict;
}

ProblemSpec make_problem(std::shared_ptr<const IntrinsicMesh> mesh, Field K, Field h,
                         std::shared_ptr<const SymmetryOrbits> orbits) {
  auto ops = std::make_shared<const OperatorSet>(assemble_operators(*mesh));
  return make_problem(std::move(mesh), std::move(ops), std::move(K), std::move(h), std::move(orbits));
}

ProblemSpec make_problem(std::shared_ptr<const IntrinsicMesh> mesh, std::shared_ptr<const OperatorSet> ops, Field K,
                         Field h, std::shared_ptr<const SymmetryOrbits> orbits) {
  if (K.size() != ops->vertex_count()) throw std::invalid_argument("K must have one value per vertex");
  if (h.size() != ops->boundary_count()) throw std::invalid_argument("h must have one value per boundary vertex");
  if (!K.allFinite() || !h.allFinite()) throw std::invalid_argument("curvature samples must be finite");
  if (orbits) validate(*mesh, *orbits);
  ProblemSpec spec;
  spec.chi = mesh->euler_characteristic();
  spec.mesh = std::move(mesh);
  spec.ops = std::move(ops);
  spec.orbits = std::move(orbits);
  spec.K = std::move(K);
  spec.h = std::move(h);
  spec.rho_bar = 4.0 * kPi * spec.chi / spec.ops->total_area;
  return spec;
}

double Moments::true_alpha() const { return alpha * std::exp(shift); }
double Moments::true_beta() const { return beta * std::exp(0.5 * shift); }

Moments compute_alpha_beta(const ProblemSpec& spec, const Field& u) {
  const OperatorSet& ops = *spec.ops;
  if (u.size() != ops.vertex_count()) throw std::invalid_argument("compute_alpha_beta: wrong dimension");
  Moments m;
  const double top = u.maxCoeff();
  m.shift = top > kShiftThreshold ? top : 0.0;
  for (int i = 0; i < ops.vertex_count(); ++i) {
    const double w = std::exp(u[i] - m.shift) * ops.vertex_areas[i];
    m.alpha += spec.K[i] * w;
    m.alpha_abs += std::abs(spec.K[i]) * w;
  }
  for (int b = 0; b < ops.boundary_count(); ++b) {
    const double w = std::exp(0.5 * (u[ops.boundary_vertices[b]] - m.shift)) * ops.boundary_weights[b];
    m.beta += spec.h[b] * w;
    m.beta_abs += std::abs(spec.h[b]) * w;
  }
  return m;
}

DomainStatus check_domain(int chi, double alpha, double beta, DomainMode mode) {
  return domain_status(kappa_of(chi), alpha, beta, std::abs(alpha), std::abs(beta), mode);
}

DomainStatus check_domain(int chi, const Moments& m, DomainMode mode) {
  DomainStatus s = domain_status(kappa_of(chi), m.alpha, m.beta, m.alpha_abs, m.beta_abs, mode);
  s.margin *= std::exp(m.shift);
  return s;
}

BranchValue evaluate_branch(double kappa, double alpha, double beta) {
  BranchValue out;
  if (kappa == 0.0) {
    out.C = -beta / alpha;
    out.F = 2.0 * beta * out.C;
    return out;
  }
  const double root = std::sqrt(beta * beta + kappa * alpha);
  if (kappa > 0) {
    out.C = beta >= 0 ? 0.5 * kappa / (root + beta) : (root - beta) / (2.0 * alpha);
    out.F = 2.0 * beta * out.C + kappa * (std::log(0.5 * kappa) - std::log(out.C));
  } else {
    const double k = -kappa;
    out.C = beta <= 0 ? 0.5 * k / (root - beta) : (root + beta) / (-2.0 * alpha);
    out.F = 2.0 * beta * out.C - k * (std::log(0.5 * k) - std::log(out.C));
  }
  return out;
}

namespace {
void require_domain(int chi, double alpha, double beta, DomainMode mode) {
  DomainStatus s = check_domain(chi, alpha, beta, mode);
  if (!s.member) throw DomainError("(alpha, beta) outside the domain of F", s);
}
}  // namespace

double F_chi(int chi, double alpha, double beta, DomainMode mode) {
  require_domain(chi, alpha, beta, mode);
  return evaluate_branch(kappa_of(chi), alpha, beta).F;
}

std::pair<double, double> dF_chi(int chi, double alpha, double beta, DomainMode mode) {
  const double C = compute_C(chi, alpha, beta, mode);
  return {2.0 * C * C, 4.0 * C};
}

double compute_C(int chi, double alpha, double beta, DomainMode mode) {
  require_domain(chi, alpha, beta, mode);
  return evaluate_branch(kappa_of(chi), alpha, beta).C;
}

Field project_zero_mean(const OperatorSet& ops, const Field& u) {
  const double mean = integrate_interior(ops, u) / ops.total_area;
  return u.array() - mean;
}

Field project_tangent(const OperatorSet& ops, const Field& g) {
  const Field& a = ops.vertex_areas;
  return g - (a.dot(g) / a.squaredNorm()) * a;
}

MeanFieldState energy(const ProblemSpec& spec, const Field& u) {
  return evaluate(spec, u, kappa_of(spec.chi), spec.mode());
}

MeanFieldState lambda_energy(const ProblemSpec& spec, const Field& u, double lambda) {
  if (spec.chi <= 0) throw std::invalid_argument("the lambda family is defined for chi > 0 only");
  if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
  return evaluate(spec, u, lambda, DomainMode::strict);
}

Field lambda_gradient(const ProblemSpec& spec, const Field& u, double lambda) {
  return lambda_energy(spec, u, lambda).grad;
}

Field normalize_solution(const ProblemSpec& spec, const Field& u) {
  const MeanFieldState st = energy(spec, u);
  if (!(st.C_shifted > 0)) throw std::domain_error("non-geometric branch: C(u) <= 0");
  return u.array() + (2.0 * std::log(st.C_shifted) - st.moments.shift);
}

FeasibilityReport sign_conditions(const ProblemSpec& spec) {
  FeasibilityReport r;
  const double kmax = spec.K.maxCoeff(), kmin = spec.K.minCoeff();
  const double hmax = spec.h.size() ? spec.h.maxCoeff() : 0.0;
  const double hmin = spec.h.size() ? spec.h.minCoeff() : 0.0;
  if (spec.chi > 0) {
    if (kmax > 0) {
      r = {true, "K > 0 somewhere"};
    } else if (hmax > 0) {
      r = {true, "h > 0 somewhere on the boundary"};
    } else {
      r = {false, "chi > 0 needs K > 0 somewhere or h > 0 somewhere; both are non-positive"};
    }
  } else if (spec.chi == 0) {
    if (kmax > 0 && hmin < 0) {
      r = {true, "K(x) > 0 > h(y) for some x, y"};
    } else if (kmin < 0 && hmax > 0) {
      r = {true, "K(x) < 0 < h(y) for some x, y"};
    } else {
      r = {false, "chi = 0 needs K(x) h(y) < 0 for some x, y"};
    }
  } else {
    if (kmin < 0) {
      r = {true, "K < 0 somewhere"};
    } else if (hmin < 0) {
      r = {false, "chi < 0 with K >= 0 everywhere: int K e^u >= 0 rules out the domain even though h < 0 somewhere"};
    } else {
      r = {false, "chi < 0 needs K < 0 somewhere"};
    }
  }
  return r;
}

Field find_domain_point(const ProblemSpec& spec) {
  const OperatorSet& ops = *spec.ops;
  const int nv = ops.vertex_count();
  const DomainMode mode = spec.mode();
  const double kappa = kappa_of(spec.chi);
  constexpr double required = 1e-6;
  auto in_domain = [&](const Field& u) {
    const Moments m = compute_alpha_beta(spec, u);
    return domain_status(kappa, m.alpha, m.beta, m.alpha_abs, m.beta_abs, mode).relative_margin > required;
  };

  Field zero = Field::Zero(nv);
  if (in_domain(zero)) return zero;

  // u = a * phi + offset on the support of phi
  struct Bump {
    Field phi, offset;
  };
  std::vector<Bump> bumps;
  auto add = [&](auto pred) {
    Field phi = Field::Zero(nv);
    bool any = false;
    for (int v = 0; v < nv; ++v) {
      if (pred(v)) {
        phi[v] = 1.0;
        any = true;
      }
    }
    if (any) bumps.push_back({std::move(phi), Field::Zero(nv)});
  };
  auto h_at = [&](int v) { return ops.boundary_index[v] >= 0 ? spec.h[ops.boundary_index[v]] : 0.0; };
  auto on_boundary = [&](int v) { return ops.boundary_index[v] >= 0; };
  add([&](int v) { return spec.K[v] > 0; });
  add([&](int v) { return spec.K[v] < 0; });
  add([&](int v) { return spec.K[v] > 0 && !on_boundary(v); });
  add([&](int v) { return spec.K[v] < 0 && !on_boundary(v); });
  add([&](int v) { return on_boundary(v) && h_at(v) > 0; });
  add([&](int v) { return on_boundary(v) && h_at(v) < 0; });
  add([&](int v) { return on_boundary(v) && spec.K[v] * h_at(v) < 0; });
  // boundary profile e^(u/2) ~ |h| w / A maximizes beta^2 / |alpha| on one sign of h
  for (int sign : {1, -1}) {
    Field phi = Field::Zero(nv), offset = Field::Zero(nv);
    double top = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < nv; ++v) {
      const int j = ops.boundary_index[v];
      if (j < 0 || sign * spec.h[j] <= 0) continue;
      phi[v] = 1.0;
      offset[v] = 2.0 * std::log(std::abs(spec.h[j]) * ops.boundary_weights[j] / ops.vertex_areas[v]);
      top = std::max(top, offset[v]);
    }
    if (!std::isfinite(top)) continue;
    for (int v = 0; v < nv; ++v) {
      if (phi[v] > 0) offset[v] -= top;
    }
    bumps.push_back({std::move(phi), std::move(offset)});
  }

  std::vector<double> amps;
  for (double a = 1.0; a <= 512.0; a *= 2.0) amps.push_back(a);

  for (const Bump& b : bumps) {
    for (double a : amps) {
      Field u = a * b.phi + b.offset;
      if (in_domain(u)) return project_zero_mean(ops, u);
    }
  }
  for (std::size_t i = 0; i < bumps.size(); ++i) {
    for (std::size_t j = 0; j < bumps.size(); ++j) {
      if (i == j) continue;
      for (double outer : amps) {
        for (double inner : amps) {
          Field u = inner * bumps[i].phi + bumps[i].offset + outer * bumps[j].phi + bumps[j].offset;
          if (in_domain(u)) return project_zero_mean(ops, u);
        }
      }
    }
  }
  throw std::runtime_error("constructive search failed");
}

}  // namespace curvmf
