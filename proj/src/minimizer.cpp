#include "curvmf/minimizer.hpp"

#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <ostream>

#include <Eigen/SparseCholesky>

namespace curvmf {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

class Preconditioner {
public:
  explicit Preconditioner(const OperatorSet& ops) : a_(ops.vertex_areas) {
    Eigen::SparseMatrix<double> B = ops.stiffness;
    for (int i = 0; i < ops.vertex_count(); ++i) B.coeffRef(i, i) += a_[i];
    ldlt_.compute(B);
    if (ldlt_.info() != Eigen::Success) throw std::runtime_error("preconditioner factorization failed");
    z_ = ldlt_.solve(a_);
    az_ = a_.dot(z_);
  }

  // (S + M)^-1 restricted to the zero-mean tangent space
  Field apply(const Field& g) const {
    Field r = ldlt_.solve(g);
    return r - (a_.dot(r) / az_) * z_;
  }

private:
  const Field& a_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  Field z_;
  double az_ = 1.0;
};

struct Pair {
  Field s, y;
  double rho;
};

}  // namespace

void SolverConfig::validate() const {
  if (grad_tol && !(*grad_tol > 0)) throw std::invalid_argument("grad_tol must be positive");
  if (max_iters < 0) throw std::invalid_argument("max_iters must be non-negative");
  if (memory < 1) throw std::invalid_argument("memory must be at least 1");
  if (!(domain_margin > 0)) throw std::invalid_argument("domain_margin must be positive");
  if (!(backtrack_factor > 0 && backtrack_factor < 1)) throw std::invalid_argument("backtrack_factor must lie in (0, 1)");
  if (!(armijo_c > 0 && armijo_c < 1)) throw std::invalid_argument("armijo_c must lie in (0, 1)");
  if (lambda && !(*lambda > 0)) throw std::invalid_argument("lambda must be positive");
}

double SolverConfig::resolved_grad_tol(int vertex_count) const {
  return grad_tol ? *grad_tol : 1e-8 * std::sqrt(static_cast<double>(vertex_count));
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::grad_tol: return "grad_tol";
    case Termination::stalled: return "stalled";
    case Termination::max_iters: return "max_iters";
    case Termination::domain_boundary: return "domain_boundary";
  }
  return "?";
}

std::string to_string(SignUsed s) {
  switch (s) {
    case SignUsed::h: return "h";
    case SignUsed::minus_h: return "minus_h";
    case SignUsed::not_applicable: return "n/a";
  }
  return "?";
}

Field project_symmetric(const SymmetryOrbits& orbits, const Field& u) {
  Field out(u.size());
  for (const auto& cls : orbits.classes) {
    double s = 0.0;
    for (int v : cls) s += u[v];
    s /= static_cast<double>(cls.size());
    for (int v : cls) out[v] = s;
  }
  return out;
}

SolveResult minimize(const ProblemSpec& spec, const SolverConfig& config, std::optional<Field> u0) {
  config.validate();
  const OperatorSet& ops = *spec.ops;
  const int nv = ops.vertex_count();
  if (config.symmetric && !spec.orbits) throw std::invalid_argument("symmetric solve requested without orbits");
  if (config.lambda && spec.chi <= 0) throw std::invalid_argument("the lambda family needs chi > 0");

  if (spec.mode() == DomainMode::strict) {
    const FeasibilityReport fr = sign_conditions(spec);
    if (!fr.feasible) throw InfeasibleError("energy domain is empty: " + fr.clause);
  }

  auto eval = [&](const Field& u) {
    return config.lambda ? lambda_energy(spec, u, *config.lambda) : energy(spec, u);
  };
  auto project = [&](const Field& u) {
    Field p = project_zero_mean(ops, u);
    if (config.symmetric) p = project_symmetric(*spec.orbits, p);
    return p;
  };
  auto gradient = [&](const MeanFieldState& st) {
    return config.symmetric ? project_symmetric(*spec.orbits, st.grad) : st.grad;
  };

  Field x = u0 ? *u0 : find_domain_point(spec);
  if (x.size() != nv) throw std::invalid_argument("initial field has wrong dimension");
  x = project(x);
  MeanFieldState st;
  try {
    st = eval(x);
  } catch (const DomainError&) {
    throw std::invalid_argument("initial field lies outside the energy domain");
  }
  if (st.domain.relative_margin < config.domain_margin) {
    throw std::invalid_argument("initial field is closer to the domain boundary than domain_margin");
  }
  Field g = gradient(st);

  const double tol = config.resolved_grad_tol(nv);
  const Preconditioner precond(ops);
  std::deque<Pair> history;
  SolveResult res;
  double last_step = 0.0;
  int flat_steps = 0;
  bool done = false;

  for (int iter = 0; !done; ++iter) {
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    res.trace.push_back({iter, st.J, gnorm, st.moments.true_alpha(), st.moments.true_beta(), st.C, last_step,
                         st.domain.relative_margin});
    res.iterations = iter;
    if (gnorm <= tol) {
      res.converged = true;
      res.termination = Termination::grad_tol;
      break;
    }
    if (iter >= config.max_iters) {
      res.termination = Termination::max_iters;
      break;
    }

    bool reset_done = false;
    while (true) {
      // two-loop recursion
      Field q = -g;
      std::vector<double> alphas(history.size());
      for (int k = static_cast<int>(history.size()) - 1; k >= 0; --k) {
        alphas[k] = history[k].rho * history[k].s.dot(q);
        q -= alphas[k] * history[k].y;
      }
      Field d = precond.apply(q);
      if (!history.empty()) {
        const Pair& last = history.back();
        const Field Py = precond.apply(last.y);
        d *= last.s.dot(last.y) / last.y.dot(Py);
      }
      for (std::size_t k = 0; k < history.size(); ++k) {
        const double b = history[k].rho * history[k].y.dot(d);
        d += (alphas[k] - b) * history[k].s;
      }
      if (config.symmetric) d = project_symmetric(*spec.orbits, d);
      double slope = g.dot(d);
      if (!(slope < 0)) {
        history.clear();
        d = -precond.apply(g);
        if (config.symmetric) d = project_symmetric(*spec.orbits, d);
        slope = g.dot(d);
      }

      double t = 1.0;
      const double dmax = d.lpNorm<Eigen::Infinity>();
      if (dmax * t > 10.0) t = 10.0 / dmax;
      bool accepted = false, domain_hit = false;
      Field xt;
      MeanFieldState trial;
      for (int k = 0; k < 80 && slope < 0; ++k, t *= config.backtrack_factor) {
        xt = project(x + t * d);
        try {
          trial = eval(xt);
        } catch (const DomainError&) {
          domain_hit = true;
          ++res.domain_rejections;
          continue;
        }
        if (!std::isfinite(trial.J) || trial.domain.relative_margin < config.domain_margin) {
          domain_hit = true;
          ++res.domain_rejections;
          continue;
        }
        const double slack = 8.0 * kEps * (1.0 + std::abs(st.J) + std::abs(st.F) + 0.5 * st.dirichlet);
        if (trial.J <= st.J + config.armijo_c * t * slope + slack) {
          accepted = true;
          break;
        }
      }
      if (accepted) {
        Field gt = gradient(trial);
        Field s = xt - x;
        Field y = gt - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          history.push_back({s, y, 1.0 / sy});
          if (static_cast<int>(history.size()) > config.memory) history.pop_front();
        }
        const double change = st.J - trial.J;
        last_step = s.lpNorm<Eigen::Infinity>();
        flat_steps = (change <= 8.0 * kEps * (1.0 + std::abs(st.J))) ? flat_steps + 1 : 0;
        x = std::move(xt);
        st = std::move(trial);
        g = std::move(gt);
        if (flat_steps >= 20) {
          res.termination = Termination::stalled;
          res.iterations = iter + 1;
          const double gn = g.lpNorm<Eigen::Infinity>();
          res.trace.push_back({iter + 1, st.J, gn, st.moments.true_alpha(), st.moments.true_beta(), st.C,
                               last_step, st.domain.relative_margin});
          if (gn <= tol) {
            res.converged = true;
            res.termination = Termination::grad_tol;
          }
          done = true;
        }
        break;
      }
      if (!history.empty() && !reset_done) {
        history.clear();
        reset_done = true;
        continue;
      }
      res.termination = domain_hit ? Termination::domain_boundary : Termination::stalled;
      done = true;
      break;
    }
  }

  res.u_star = x;
  res.J_star = st.J;
  res.C_star = st.C;
  res.alpha = st.moments.true_alpha();
  res.beta = st.moments.true_beta();
  res.grad_norm = g.lpNorm<Eigen::Infinity>();
  if (spec.chi == 0) return resolve_sign(spec, std::move(res));
  res.sign_used = SignUsed::not_applicable;
  try {
    res.v_star = normalize_solution(spec, x);
  } catch (const std::exception&) {
    res.v_star = Field::Constant(nv, std::numeric_limits<double>::quiet_NaN());
  }
  return res;
}

SolveResult resolve_sign(const ProblemSpec& spec, SolveResult result) {
  if (spec.chi != 0) {
    result.sign_used = SignUsed::not_applicable;
    return result;
  }
  const OperatorSet& ops = *spec.ops;
  const MeanFieldState st = energy(spec, result.u_star);
  const Moments& m = st.moments;
  const double scale_ratio = m.beta_abs / std::abs(m.alpha) * std::exp(-0.5 * m.shift);
  const double threshold = 1e-8 * (1.0 + scale_ratio);
  result.C_star = st.C;
  result.degenerate = false;
  if (st.C > threshold) {
    result.sign_used = SignUsed::h;
    result.v_star = result.u_star.array() + (2.0 * std::log(st.C_shifted) - m.shift);
  } else if (st.C < -threshold) {
    result.sign_used = SignUsed::minus_h;
    result.v_star = result.u_star.array() + (2.0 * std::log(-st.C_shifted) - m.shift);
  } else {
    double total = 0.0, total_abs = 0.0;
    for (int b = 0; b < ops.boundary_count(); ++b) {
      total += spec.h[b] * ops.boundary_weights[b];
      total_abs += std::abs(spec.h[b]) * ops.boundary_weights[b];
    }
    if (std::abs(total) > 1e-10 * total_abs) {
      throw std::logic_error("internal consistency: C vanished at the minimizer although int h != 0");
    }
    result.sign_used = SignUsed::not_applicable;
    result.degenerate = true;
    result.v_star = Field::Constant(result.u_star.size(), std::numeric_limits<double>::quiet_NaN());
  }
  return result;
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out) {
  out << "iter,J,grad_norm,alpha,beta,C,step,domain_margin\n" << std::setprecision(17);
  for (const auto& r : trace) {
    out << r.iter << ',' << r.J << ',' << r.grad_norm << ',' << r.alpha << ',' << r.beta << ',' << r.C << ','
        << r.step << ',' << r.domain_margin << '\n';
  }
}

}  // namespace curvmf
