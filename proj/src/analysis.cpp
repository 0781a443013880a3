#include "curvmf/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include <boost/math/tools/minima.hpp>

namespace curvmf {

namespace {

constexpr double kPi = std::numbers::pi;

void require_zero_mean(const OperatorSet& ops, const Field& u) {
  const double mean = integrate_interior(ops, u) / ops.total_area;
  if (std::abs(mean) > 1e-9 * (1.0 + u.lpNorm<Eigen::Infinity>())) {
    throw std::invalid_argument("field must have zero area-weighted mean");
  }
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace

int thread_budget() {
  if (const char* env = std::getenv("CURVMF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int)>& body, int max_threads) {
  const int threads = std::min(n, max_threads > 0 ? max_threads : thread_budget());
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      (void)t;
      for (int i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double gauss_bonnet_residual(const ProblemSpec& spec, const Field& v) {
  const OperatorSet& ops = *spec.ops;
  double a = 0.0, b = 0.0;
  for (int i = 0; i < ops.vertex_count(); ++i) a += spec.K[i] * std::exp(v[i]) * ops.vertex_areas[i];
  for (int j = 0; j < ops.boundary_count(); ++j) {
    b += spec.h[j] * std::exp(0.5 * v[ops.boundary_vertices[j]]) * ops.boundary_weights[j];
  }
  return std::abs(a + b - 2.0 * kPi * spec.chi);
}

double pde_residual(const ProblemSpec& spec, const Field& u) {
  return energy(spec, u).grad.lpNorm<Eigen::Infinity>();
}

Field pde_residual_nodes(const ProblemSpec& spec, const Field& u) {
  return energy(spec, u).grad.cwiseQuotient(spec.ops->vertex_areas);
}

double tm_log_term(const OperatorSet& ops, const Field& u) {
  require_zero_mean(ops, u);
  const double s = u.maxCoeff();
  double A = 0.0, B = 0.0;
  for (int i = 0; i < ops.vertex_count(); ++i) A += std::exp(u[i] - s) * ops.vertex_areas[i];
  for (int j = 0; j < ops.boundary_count(); ++j) {
    B += std::exp(0.5 * (u[ops.boundary_vertices[j]] - s)) * ops.boundary_weights[j];
  }
  return 0.5 * s + std::log(std::sqrt(B * B + 8.0 * kPi * A) + B);
}

double tm_deficit_with(const OperatorSet& ops, const Field& u, double coefficient) {
  return tm_log_term(ops, u) - coefficient * dirichlet_energy(ops, u);
}

double tm_deficit(const IntrinsicMesh&, const OperatorSet& ops, const Field& u) {
  return tm_deficit_with(ops, u, 1.0 / (16.0 * kPi));
}

double tm_symmetric_deficit(const IntrinsicMesh&, const SymmetryOrbits& orbits, const OperatorSet& ops,
                            const Field& u, double eps) {
  const double scale = 1.0 + u.lpNorm<Eigen::Infinity>();
  for (Eigen::Index v = 0; v < u.size(); ++v) {
    if (std::abs(u[orbits.orbit_map[v]] - u[v]) > 1e-12 * scale) {
      throw std::invalid_argument("field is not orbit-symmetric");
    }
  }
  return tm_deficit_with(ops, u, (1.0 + eps) / (32.0 * kPi));
}

std::pair<double, double> elementary_inequality(double a, double b) {
  const double lhs = std::sqrt(b * b + 8.0 * kPi * a) + b;
  const double rhs = (std::sqrt(1.0 + 8.0 * kPi) + 1.0) * std::max(std::sqrt(a), b);
  return {lhs, rhs};
}

double quotient_max(const ProblemSpec& spec) {
  if (spec.K.maxCoeff() > 0) throw std::invalid_argument("trace inequality needs K <= 0 everywhere");
  if (spec.K.minCoeff() == 0 && spec.K.maxCoeff() == 0) throw std::invalid_argument("trace inequality needs K != 0");
  const OperatorSet& ops = *spec.ops;
  double dm = 0.0;
  for (int j = 0; j < ops.boundary_count(); ++j) {
    const double k = std::abs(spec.K[ops.boundary_vertices[j]]);
    const double h = std::abs(spec.h[j]);
    if (k == 0) {
      if (h > 0) return std::numeric_limits<double>::infinity();
      continue;
    }
    dm = std::max(dm, h / std::sqrt(k));
  }
  return dm;
}

double trace_quotient(const ProblemSpec& spec, const Field& u) {
  if (spec.K.maxCoeff() > 0) throw std::invalid_argument("trace inequality needs K <= 0 everywhere");
  const OperatorSet& ops = *spec.ops;
  const double s = u.maxCoeff();
  double a = 0.0, b = 0.0;
  for (int i = 0; i < ops.vertex_count(); ++i) a += std::abs(spec.K[i]) * std::exp(u[i] - s) * ops.vertex_areas[i];
  for (int j = 0; j < ops.boundary_count(); ++j) {
    b += spec.h[j] * std::exp(0.5 * (u[ops.boundary_vertices[j]] - s)) * ops.boundary_weights[j];
  }
  return b * b / a;
}

double trace_deficit(const ProblemSpec& spec, const Field& u, double eps) {
  const double dm = quotient_max(spec);
  return trace_quotient(spec, u) - 0.25 * (dm + eps) * (dm + eps) * dirichlet_energy(*spec.ops, u);
}

bool SharpnessSequence::increasing_over_last(int count) const {
  const int m = static_cast<int>(value.size());
  if (count > m) return false;
  for (int i = m - count + 1; i < m; ++i) {
    if (!(value[i] > value[i - 1])) return false;
  }
  return true;
}

Field collar_field(const std::vector<double>& t, int n, double delta) {
  Field u(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) u[i] = -2.0 * std::log1p(n * std::min(t[i], delta));
  return u;
}

SharpnessSequence sharpness_sequence(const ProblemSpec& spec, double D0, const std::vector<int>& n_list, int loop,
                                     double delta) {
  const IntrinsicMesh& mesh = *spec.mesh;
  if (loop < 0 || loop >= static_cast<int>(mesh.boundary_loops.size())) throw std::invalid_argument("no such loop");
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1]) throw std::invalid_argument("n values must be strictly increasing");
  }
  const std::vector<double> t = edge_distance(mesh, mesh.boundary_loops[loop]);
  SharpnessSequence seq;
  seq.D0 = D0;
  seq.n = n_list;
  seq.Q.resize(n_list.size());
  seq.E.resize(n_list.size());
  seq.value.resize(n_list.size());
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const Field u = collar_field(t, n_list[i], delta);
    seq.Q[i] = trace_quotient(spec, u);
    seq.E[i] = dirichlet_energy(*spec.ops, u);
    seq.value[i] = seq.Q[i] - 0.25 * D0 * D0 * seq.E[i];
  }
  return seq;
}

LogCorrectionFit log_correction_fit(const ProblemSpec& spec, const std::vector<int>& n_list, int loop, double delta) {
  const SharpnessSequence seq = sharpness_sequence(spec, 1.0, n_list, loop, delta);
  LogCorrectionFit fit;
  fit.n = seq.n;
  fit.value = seq.value;
  std::vector<double> logs;
  for (int n : n_list) logs.push_back(std::log(static_cast<double>(n)));
  fit.log_coefficient = least_squares_slope(logs, fit.value);
  const BackgroundReport bg = background_check(*spec.mesh);
  double turning = 0.0;
  for (int v : spec.mesh->boundary_loops[loop]) turning += bg.vertex_defect[v];
  fit.reference_coefficient = 2.0 * spec.ops->total_boundary * turning;
  return fit;
}

double f_lemma(int chi, double t) {
  if (chi >= 0) throw std::invalid_argument("f_lemma needs chi < 0");
  return evaluate_branch(8.0 * kPi * chi, -1.0, t).F;
}

FBound f_bound(int chi, double eps, double t_min, double t_max) {
  FBound out;
  out.eps = eps;
  auto excess = [&](double t) {
    const double tp = std::max(t, 0.0);
    return f_lemma(chi, t) - (2.0 + eps) * tp * tp;
  };
  const int fit_points = 2001;
  const double step = (t_max - t_min) / (fit_points - 1);
  double best_t = t_min;
  out.C_eps = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < fit_points; ++i) {
    const double t = t_min + step * i;
    const double e = excess(t);
    if (e > out.C_eps) {
      out.C_eps = e;
      best_t = t;
    }
  }
  // polish the grid maximum
  const auto [t_star, neg] = boost::math::tools::brent_find_minima(
      [&](double t) { return -excess(t); }, std::max(t_min, best_t - step), std::min(t_max, best_t + step), 52);
  (void)t_star;
  out.C_eps = std::max(out.C_eps, -neg);
  out.worst_violation = -std::numeric_limits<double>::infinity();
  const double lo = std::min(t_min, -1000.0), hi = std::max(t_max, 1000.0);
  const int check_points = 200001;
  for (int i = 0; i < check_points; ++i) {
    out.worst_violation = std::max(out.worst_violation, excess(lo + (hi - lo) * i / (check_points - 1)) - out.C_eps);
  }
  return out;
}

std::pair<double, double> jensen_lower_bound(const ProblemSpec& spec, const Field& u) {
  const OperatorSet& ops = *spec.ops;
  double lhs = 0.0, log_avg = 0.0;
  bool touches_zero = false;
  for (int i = 0; i < ops.vertex_count(); ++i) {
    if (spec.K[i] > 0) throw std::invalid_argument("Jensen bound needs K <= 0");
    lhs += -spec.K[i] * std::exp(u[i]) * ops.vertex_areas[i];
    if (spec.K[i] == 0) {
      touches_zero = true;
    } else {
      log_avg += std::log(-spec.K[i]) * ops.vertex_areas[i];
    }
  }
  const double rhs = touches_zero ? 0.0 : ops.total_area * std::exp(log_avg / ops.total_area);
  return {lhs, rhs};
}

void DeficitReport::finish(bool sweep, double slack) {
  all_finite = true;
  max_deficit = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    if (!std::isfinite(s.deficit)) all_finite = false;
    max_deficit = std::max(max_deficit, s.deficit);
  }
  if (!sweep) return;
  const std::size_t half = samples.size() / 2;
  double head = -std::numeric_limits<double>::infinity(), tail = head;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (i < half ? head : tail) = std::max(i < half ? head : tail, samples[i].deficit);
  }
  bounded = all_finite && tail <= head + slack;
}

std::vector<Field> random_battery(const IntrinsicMesh& mesh, const OperatorSet& ops, int count, std::uint64_t seed,
                                  const SymmetryOrbits* orbits) {
  const int nv = mesh.vertex_count;
  const int n_centers = std::min(16, nv);
  std::vector<std::vector<double>> dist(n_centers);
  double diameter = 0.0;
  for (int c = 0; c < n_centers; ++c) {
    const int src[1] = {static_cast<int>((static_cast<long>(c) * nv) / n_centers)};
    dist[c] = edge_distance(mesh, src);
    diameter = std::max(diameter, *std::max_element(dist[c].begin(), dist[c].end()));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, n_centers - 1);
  std::uniform_int_distribution<int> how_many(1, 4);

  std::vector<Field> out;
  out.reserve(count);
  if (count > 0) out.push_back(Field::Zero(nv));
  while (static_cast<int>(out.size()) < count) {
    Field u = Field::Zero(nv);
    const double scale = std::exp(std::log(0.1) + unit(rng) * std::log(50.0));
    const int bumps = how_many(rng);
    for (int b = 0; b < bumps; ++b) {
      const auto& d = dist[pick(rng)];
      const double amp = scale * normal(rng);
      const double width = diameter * (0.05 + 0.45 * unit(rng));
      for (int v = 0; v < nv; ++v) u[v] += amp * std::exp(-0.5 * d[v] * d[v] / (width * width));
    }
    if (mesh.has_embedding()) {
      const double cx = normal(rng), cy = normal(rng), cz = normal(rng);
      for (int v = 0; v < nv; ++v) {
        const auto& p = mesh.embedding[v];
        u[v] += 0.3 * scale * (cx * p[0] + cy * p[1] + cz * p[2]);
      }
    }
    u = project_zero_mean(ops, u);
    if (orbits) u = project_symmetric(*orbits, u);
    out.push_back(std::move(u));
  }
  return out;
}

Field bubble(const std::vector<double>& d, double lambda) {
  Field u(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) u[i] = -2.0 * std::log1p(lambda * lambda * d[i] * d[i]);
  return u;
}

Field multi_bubble(const std::vector<std::vector<double>>& d, double lambda) {
  const std::size_t nv = d.front().size();
  Field u(static_cast<Eigen::Index>(nv));
  for (std::size_t i = 0; i < nv; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
      terms[j] = -2.0 * std::log1p(lambda * lambda * d[j][i] * d[j][i]);
      top = std::max(top, terms[j]);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - top);
    u[i] = top + std::log(s);
  }
  return u;
}

std::vector<LambdaRow> lambda_sweep(const ProblemSpec& spec, const std::vector<double>& lambdas,
                                    const SolverConfig& config, std::optional<Field> u0) {
  std::vector<LambdaRow> rows(lambdas.size());
  parallel_for(static_cast<int>(lambdas.size()), [&](int i) {
    SolverConfig cfg = config;
    cfg.lambda = lambdas[i];
    LambdaRow& row = rows[i];
    row.lambda = lambdas[i];
    try {
      const SolveResult r = minimize(spec, cfg, u0);
      row.converged = r.converged;
      row.termination = r.termination;
      row.J_min = r.J_star;
      row.grad_norm_star = std::sqrt(dirichlet_energy(*spec.ops, r.u_star));
      row.sup_u = r.u_star.lpNorm<Eigen::Infinity>();
      row.iterations = r.iterations;
    } catch (const std::exception&) {
      row.converged = false;
      row.J_min = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return rows;
}

PerturbationReport perturbation_experiment(const ProblemSpec& spec0, const SolveResult& base, const Field& p_K,
                                           const Field& p_h, double delta, const SolverConfig& config) {
  PerturbationReport rep;
  rep.delta = delta;
  ProblemSpec spec = make_problem(spec0.mesh, spec0.ops, spec0.K + delta * p_K, spec0.h + delta * p_h);
  rep.sign_changing_K = spec.K.minCoeff() < 0 && spec.K.maxCoeff() > 0;
  SolverConfig cfg = config;
  cfg.symmetric = false;
  try {
    const SolveResult r = minimize(spec, cfg, base.u_star);
    rep.converged = r.converged;
    rep.termination = r.termination;
    rep.sup_distance = (r.u_star - base.u_star).lpNorm<Eigen::Infinity>();
    rep.domain_rejections = r.domain_rejections;
    rep.iterations = r.iterations;
  } catch (const std::exception&) {
    rep.converged = false;
    rep.sup_distance = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

}  // namespace curvmf
