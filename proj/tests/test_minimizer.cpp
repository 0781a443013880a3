#include <doctest.h>

#include <numbers>
#include <random>
#include <sstream>

#include "curvmf/curvature.hpp"
#include "curvmf/minimizer.hpp"
#include "oracles.hpp"

using namespace curvmf;

namespace {

constexpr double kPi = std::numbers::pi;

struct Setup {
  HemisphereMesh hm;
  ProblemSpec spec;
};

ProblemSpec hemisphere(int r, const std::function<double(const IntrinsicMesh&, int)>& K,
                       const std::function<double(const IntrinsicMesh&, int)>& h, bool orbits = true) {
  const HemisphereMesh hm = gen_hemisphere(2, r);
  auto mesh = std::make_shared<const IntrinsicMesh>(hm.mesh);
  auto ops = std::make_shared<const OperatorSet>(assemble_operators(*mesh));
  Field Kf(mesh->vertex_count), hf(ops->boundary_count());
  for (int v = 0; v < mesh->vertex_count; ++v) Kf[v] = K(*mesh, v);
  for (int b = 0; b < ops->boundary_count(); ++b) hf[b] = h(*mesh, ops->boundary_vertices[b]);
  std::shared_ptr<const SymmetryOrbits> o;
  if (orbits) {
    o = std::make_shared<const SymmetryOrbits>(hm.orbits);
    Kf = project_symmetric(*o, Kf);
    Field full = Field::Zero(mesh->vertex_count);
    for (int b = 0; b < ops->boundary_count(); ++b) full[ops->boundary_vertices[b]] = hf[b];
    hf = ops->restrict_to_boundary(project_symmetric(*o, full));
  }
  return make_problem(mesh, ops, Kf, hf, o);
}

ProblemSpec cylinder(int na, int nc, double K, double h) {
  auto mesh = std::make_shared<const IntrinsicMesh>(gen_flat_cylinder(1.0, na, nc));
  auto ops = std::make_shared<const OperatorSet>(assemble_operators(*mesh));
  return make_problem(mesh, ops, Field::Constant(mesh->vertex_count, K), Field::Constant(ops->boundary_count(), h));
}

ProblemSpec cylinder(int na, int nc, const Field& K, const Field& h) {
  auto mesh = std::make_shared<const IntrinsicMesh>(gen_flat_cylinder(1.0, na, nc));
  return make_problem(mesh, K, h);
}

ProblemSpec pants(int r, double K, double h) {
  auto mesh = std::make_shared<const IntrinsicMesh>(gen_pair_of_pants({1, 1, 1}, r));
  auto ops = std::make_shared<const OperatorSet>(assemble_operators(*mesh));
  return make_problem(mesh, ops, Field::Constant(mesh->vertex_count, K), Field::Constant(ops->boundary_count(), h));
}

double one(const IntrinsicMesh&, int) { return 1.0; }
double zero(const IntrinsicMesh&, int) { return 0.0; }

double gb_residual(const ProblemSpec& s, const Field& v) {
  const Moments m = compute_alpha_beta(s, v);
  return std::abs(m.true_alpha() + m.true_beta() - 2 * kPi * s.chi);
}

}  // namespace

TEST_SUITE("minimizer") {
  TEST_CASE("config validation") {
    SolverConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.resolved_grad_tol(100) == doctest::Approx(1e-7));
    auto bad = [](auto mutate) {
      SolverConfig x;
      mutate(x);
      CHECK_THROWS_AS(x.validate(), std::invalid_argument);
    };
    bad([](SolverConfig& x) { x.grad_tol = 0.0; });
    bad([](SolverConfig& x) { x.max_iters = -1; });
    bad([](SolverConfig& x) { x.memory = 0; });
    bad([](SolverConfig& x) { x.domain_margin = 0.0; });
    bad([](SolverConfig& x) { x.backtrack_factor = 1.0; });
    bad([](SolverConfig& x) { x.armijo_c = 0.0; });
    bad([](SolverConfig& x) { x.lambda = -2.0; });
    c.grad_tol = 3e-9;
    CHECK(c.resolved_grad_tol(100) == 3e-9);
  }

  TEST_CASE("orbit averaging is an idempotent mean-preserving projection") {
    const HemisphereMesh hm = gen_hemisphere(3, 3);
    const OperatorSet ops = assemble_operators(hm.mesh);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    Field u(hm.mesh.vertex_count);
    for (int i = 0; i < u.size(); ++i) u[i] = g(rng);
    const Field p = project_symmetric(hm.orbits, u);
    CHECK((project_symmetric(hm.orbits, p) - p).cwiseAbs().maxCoeff() == 0.0);
    for (int v = 0; v < u.size(); ++v) CHECK(p[hm.orbits.orbit_map[v]] == p[v]);
    // vertex areas are orbit invariant, so the area-weighted mean is kept
    CHECK(integrate_interior(ops, p) == doctest::Approx(integrate_interior(ops, u)).epsilon(1e-12).scale(u.norm()));
  }

  TEST_CASE("round hemisphere is recovered") {
    double prev = 1e9;
    for (int r = 3; r <= 5; ++r) {
      const ProblemSpec s = hemisphere(r, one, zero);
      SolverConfig c;
      c.symmetric = true;
      const SolveResult res = minimize(s, c);
      REQUIRE(res.converged);
      CHECK(gb_residual(s, res.v_star) < 1e-10);
      const double err = res.v_star.cwiseAbs().maxCoeff();
      CHECK(err < prev);
      prev = err;
    }
    CHECK(prev < 5e-3);
  }

  TEST_CASE("cylinder with K = -1, h = 1/2 matches the ODE profile") {
    constexpr int na = 64, nc = 16;
    const ProblemSpec s = cylinder(na, nc, -1.0, 0.5);
    SolverConfig c;
    c.grad_tol = 1e-10;
    const SolveResult res = minimize(s, c);
    REQUIRE(res.converged);
    CHECK(res.sign_used == SignUsed::h);
    const std::vector<double> ref = oracle::CylinderShooting(-1.0, 0.5, 1.0, na * 8).solve();
    REQUIRE(ref.size() == static_cast<std::size_t>(na * 8 + 1));
    double err = 0.0;
    for (int v = 0; v < s.vertex_count(); ++v) {
      const int i = static_cast<int>(std::lround(s.mesh->embedding[v][2] * na)) * 8;
      err = std::max(err, std::abs(res.v_star[v] - ref[i]));
    }
    CHECK(err < 1e-3);
    CHECK(gb_residual(s, res.v_star) < 1e-10);
  }

  TEST_CASE("pants with K = -1 converges") {
    const ProblemSpec s = pants(3, -1.0, 0.3);
    const SolveResult res = minimize(s, SolverConfig{});
    CHECK(res.converged);
    CHECK(res.termination == Termination::grad_tol);
    CHECK(res.C_star > 0);
    CHECK(gb_residual(s, res.v_star) < 1e-10);
  }

  TEST_CASE("chi = 0 sign resolution") {
    // K = -1 with h of either sign: extended mode, C carries the sign of h
    const SolveResult plus = minimize(cylinder(16, 8, -1.0, 0.5), SolverConfig{});
    CHECK(plus.converged);
    CHECK(plus.sign_used == SignUsed::h);
    const ProblemSpec sm = cylinder(16, 8, -1.0, -0.5);
    const SolveResult minus = minimize(sm, SolverConfig{});
    CHECK(minus.converged);
    CHECK(minus.sign_used == SignUsed::minus_h);
    CHECK(minus.C_star < 0);
    CHECK(minus.v_star.allFinite());

    // int h = 0 with h = cos(phi): the minimizer sits on the degenerate branch
    const IntrinsicMesh m = gen_flat_cylinder(1.0, 16, 16);
    const OperatorSet ops = assemble_operators(m);
    const Field h = ops.restrict_to_boundary(azimuthal_cosine_field(m, 0.0, 1.0, 1));
    const ProblemSpec sd = cylinder(16, 16, constant_field(m, -1.0), h);
    const SolveResult deg = minimize(sd, SolverConfig{});
    CHECK(deg.degenerate);
    CHECK(deg.sign_used == SignUsed::not_applicable);
    CHECK(!deg.v_star.allFinite());
  }

  TEST_CASE("empty domain is reported before any iteration") {
    const ProblemSpec s = hemisphere(2, [](const IntrinsicMesh&, int) { return -1.0; },
                                     [](const IntrinsicMesh&, int) { return -1.0; }, false);
    try {
      minimize(s, SolverConfig{});
      FAIL("expected InfeasibleError");
    } catch (const InfeasibleError& e) {
      CHECK(std::string(e.what()).find("empty") != std::string::npos);
    }
    CHECK_THROWS_AS(minimize(pants(1, 1.0, 1.0), SolverConfig{}), InfeasibleError);
  }

  TEST_CASE("bad arguments") {
    const ProblemSpec s = hemisphere(2, one, zero, false);
    SolverConfig c;
    c.symmetric = true;
    CHECK_THROWS_AS(minimize(s, c), std::invalid_argument);
    CHECK_THROWS_AS(minimize(s, SolverConfig{}, Field::Zero(4)), std::invalid_argument);
    SolverConfig l;
    l.lambda = 4 * kPi;
    CHECK_THROWS_AS(minimize(pants(1, -1.0, 0.0), l), std::invalid_argument);
  }

  TEST_CASE("trace: monotone descent and margins above the guard") {
    auto h = [](const IntrinsicMesh& m, int v) { return std::cos(2 * m.azimuth[v]); };
    const ProblemSpec s = hemisphere(4, one, h, false);
    SolverConfig c;
    const SolveResult res = minimize(s, c);
    REQUIRE(res.trace.size() >= 2);
    for (std::size_t i = 1; i < res.trace.size(); ++i) {
      CHECK(res.trace[i].J <= res.trace[i - 1].J + 1e-12 * (1 + std::abs(res.trace[i - 1].J)));
      CHECK(res.trace[i].domain_margin >= c.domain_margin);
    }
    CHECK(res.trace.back().grad_norm == res.grad_norm);
    std::ostringstream out;
    write_trace_csv(res.trace, out);
    CHECK(out.str().rfind("iter,J,grad_norm,alpha,beta,C,step,domain_margin\n", 0) == 0);
  }

  TEST_CASE("symmetric solves stay symmetric") {
    auto h = [](const IntrinsicMesh& m, int v) { return 0.3 + std::cos(2 * m.azimuth[v]); };
    const ProblemSpec s = hemisphere(4, one, h);
    SolverConfig c;
    c.symmetric = true;
    const SolveResult res = minimize(s, c);
    REQUIRE(res.converged);
    for (int v = 0; v < s.vertex_count(); ++v) CHECK(res.u_star[s.orbits->orbit_map[v]] == res.u_star[v]);
  }

  TEST_CASE("runs are bitwise reproducible") {
    const ProblemSpec s = pants(2, -1.0, 0.5);
    const SolveResult a = minimize(s, SolverConfig{}), b = minimize(s, SolverConfig{});
    CHECK(a.iterations == b.iterations);
    CHECK((a.u_star - b.u_star).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.J_star == b.J_star);
  }

  TEST_CASE("no descent direction at the minimizer") {
    auto h = [](const IntrinsicMesh& m, int v) { return 0.5 * std::cos(m.azimuth[v]); };
    const ProblemSpec s = hemisphere(4, one, h, false);
    SolverConfig c;
    c.grad_tol = 1e-10;
    const SolveResult res = minimize(s, c);
    REQUIRE(res.converged);
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g;
    int worse = 0;
    for (int k = 0; k < 50; ++k) {
      Field w(s.vertex_count());
      for (int i = 0; i < w.size(); ++i) w[i] = g(rng);
      w = project_zero_mean(*s.ops, w);
      w /= w.cwiseAbs().maxCoeff();
      const double J1 = energy(s, res.u_star + 1e-3 * w).J;
      const double J2 = energy(s, res.u_star - 1e-3 * w).J;
      if (J1 >= res.J_star && J2 >= res.J_star) ++worse;
    }
    CHECK(worse == 50);
  }

  TEST_CASE("lambda solve below the threshold") {
    const ProblemSpec s = hemisphere(4, one, zero, false);
    SolverConfig c;
    c.lambda = 4 * kPi;
    const SolveResult res = minimize(s, c);
    CHECK(res.converged);
    // constant K and zero h: the constant field is the critical point
    CHECK(res.u_star.cwiseAbs().maxCoeff() < 1e-6);
  }
}
