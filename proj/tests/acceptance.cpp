// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "maxprin/barrier.hpp"
#include "maxprin/harness.hpp"
#include "maxprin/varifold.hpp"

#include "plane_search.hpp"
#include "tube_samples.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace maxprin;
using namespace maxprin::barrier;
using tube_samples::support_points;
using tube_samples::tube_points;

namespace {

int failures = 0;

void line(int k, bool ok, const std::string& summary) {
  std::printf("criterion %2d: %s  %s\n", k, ok ? "PASS" : "FAIL", summary.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const BarrierBundle& ball_bundle() {
  static const BarrierBundle b = [] {
    BarrierOptions o;
    o.m = 2;
    o.eta = 1.0;
    return build_barrier(geom::make_ball(3, 1.0), make_vec({0, 0, 1}), o);
  }();
  return b;
}

harness::Report scenario(const std::string& text) { return harness::run_scenario(harness::Config::parse_string(text)); }

const harness::Assertion* find(const harness::Report& r, const std::string& name) {
  for (const auto& a : r.assertions())
    if (a.name == name) return &a;
  return nullptr;
}

void criterion1() {
  const BarrierBundle& b = ball_bundle();
  const BarrierField X(b, BarrierField::unit_lipschitz_log_amplitude(b));
  const double eps_expected = std::min(1.0 / std::sqrt(b.K), b.chart_bound);
  const auto t0 = std::chrono::steady_clock::now();
  const VerifyReport r = verify_barrier(X, 2, b.eta, 50, 1);
  const double secs = seconds_since(t0);
  const bool ok = b.K > 0 && b.epsilon > 0 && b.epsilon == eps_expected && r.evaluated > 0 && r.worst_normalized <= 1e-7 &&
                  secs <= 30.0;
  line(1, ok,
       fmt("K=%.6g eps=%.6g grid 50^3: %ld in tube, %ld active, max normalized Psi+eta|X| = %.3g (%.3g where X != 0), %.1f s",
           b.K, b.epsilon, r.evaluated, r.active, r.worst_normalized, r.worst_active_normalized, secs));
}

void criterion2() {
  const BarrierBundle& b = ball_bundle();
  double worst_off = 0.0;
  bool chain = true;
  for (const Vec& q : support_points(b, 1000, 21)) {
    // Entries of Q / phi(u); the bound 1e-6 (phi K + |phi'|) is divided by phi > 0 as well.
    const Mat Q = adapted_frame_Q_normalized(b, q);
    const double d = b.sigma->project(q).u - b.epsilon;
    const double dphi_over_phi = -1.0 / (d * d);
    Mat off = Q;
    off.diagonal().setZero();
    worst_off = std::max(worst_off, off.cwiseAbs().maxCoeff() / (b.K + std::abs(dphi_over_phi)));
    chain = chain && Q(0, 0) >= Q(1, 1) && Q(1, 1) >= -b.K && -b.K >= Q(2, 2) &&
            std::abs(Q(2, 2) - dphi_over_phi) <= 1e-8 * std::abs(dphi_over_phi);
  }
  line(2, worst_off <= 1e-6 && chain,
       fmt("1000 samples: max off-diagonal / (phi K + |phi'|) = %.3g, ordering chain %s", worst_off, chain ? "holds" : "broken"));
}

void criterion3() {
  const BarrierBundle& b = ball_bundle();
  const BarrierField X(b);
  std::mt19937 rng(31);
  double worst_excess = -1e300, worst_gap = 0.0, worst_closed = 0.0;
  for (const Vec& x : support_points(b, 100, 32)) {
    const BarrierField::Eval ev = X.evaluate(x);
    const double ps = psi(ev.unit_value, ev.unit_jacobian, x, 2, b.domain().metric());
    const double closed = -ev.unit_value.norm() * ev.proj.curvatures.head(2).sum();
    worst_closed = std::max(worst_closed, std::abs(ps - closed));
    const Mat S = ev.unit_jacobian;  // euclidean metric, so Q(u, v) = u . S v
    const PlaneSearch r = search_planes(0.5 * (S + S.transpose()), Mat::Identity(3, 3), 2, 10000, ps, rng);
    worst_excess = std::max(worst_excess, r.worst_excess / std::max(1.0, S.norm()));
    worst_gap = std::max(worst_gap, ps - r.best);
  }
  line(3, worst_excess <= 1e-12 && worst_gap <= 1e-2 && worst_closed <= 1e-5,
       fmt("100 points x 10^4 frames: max (trace - eigensum)/|S| = %.3g, best-sample gap = %.3g, |Psi - closed form| = %.3g",
           worst_excess, worst_gap, worst_closed));
}

struct TubeMesh {
  varifold::DiscreteVarifold V;
  double area = 0.0;
};

// Small jittered patches cutting steeply through the layer where the
// unit-Lipschitz field a phi(u) ~ eps^2 exp(-u / eps^2) is not negligible.
std::vector<TubeMesh> tube_meshes(const BarrierBundle& b, const BarrierField& X, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0, 1);
  std::normal_distribution<double> N01;
  const auto& g = b.domain().metric();
  const double e2 = b.epsilon * b.epsilon;
  std::vector<TubeMesh> out;
  while (static_cast<int>(out.size()) < count) {
    const double r = 0.075 * std::sqrt(U(rng));
    const double angle = 2 * std::numbers::pi * U(rng);
    const Vec y = b.domain().project_to_boundary(make_vec({r * std::cos(angle), r * std::sin(angle), 1.0}));
    const Vec nu = b.domain().inward_normal(y).normalized();
    Vec t1(3);
    for (int k = 0; k < 3; ++k) t1(k) = N01(rng);
    t1 = (t1 - t1.dot(nu) * nu).normalized();
    const Vec t2 = make_vec({nu(1) * t1(2) - nu(2) * t1(1), nu(2) * t1(0) - nu(0) * t1(2), nu(0) * t1(1) - nu(1) * t1(0)});
    const double side = e2 * (5.0 + 10.0 * U(rng));
    const double tilt = 0.2 + 1.0 * U(rng);
    const Vec a = std::cos(tilt) * t1 + std::sin(tilt) * nu;
    const Vec center = y + (0.5 * side * std::sin(tilt) + e2 * (0.2 + 0.8 * U(rng))) * nu;
    mesh::SimplicialSurface s = mesh::grid_patch(center - 0.5 * side * (a + t2), side * a, side * t2, 8);
    for (Vec& v : s.vertices)
      for (int k = 0; k < 3; ++k) v(k) += 0.02 * e2 * N01(rng);
    TubeMesh t;
    try {
      bool inside = true;
      for (const Vec& v : s.vertices) inside = inside && b.domain().u0(v) >= 0.0 && b.in_tube(v) && b.sigma->project(v).u >= 0.0;
      if (!inside) continue;
      t.V = varifold::varifold_from_mesh(s, g);
      if (!(varifold::norm_integral(t.V, X, g) > 0.0)) continue;
    } catch (const Error&) {
      continue;
    }
    t.area = mesh::area(s, g);
    out.push_back(std::move(t));
  }
  return out;
}

void criteria4and5() {
  const BarrierBundle& b = ball_bundle();
  const BarrierField X(b, BarrierField::unit_lipschitz_log_amplitude(b));
  const auto& g = b.domain().metric();
  const auto meshes = tube_meshes(b, X, 20, 41);
  double worst_ratio_dev = 0.0;
  double worst_ineq = -1e300;  // (dV + eta int|X|) / area, must stay <= 1e-6
  double worst_rel = -1e300;   // (dV + eta int|X|) / int|X|
  bool all_nonzero = true;
  for (const TubeMesh& t : meshes) {
    const double dv = varifold::first_variation(t.V, X, g);
    const double m0 = t.V.total_weight();
    std::vector<double> C;
    for (double h : {1e-2, 1e-3, 1e-4}) {
      const double fd = (varifold::flow_varifold(t.V, X, g, h, 4).total_weight() - m0) / h;
      C.push_back(std::abs(dv - fd) / h);
    }
    all_nonzero = all_nonzero && C[0] > 0 && C[1] > 0 && C[2] > 0;
    for (int k = 0; k < 2; ++k) worst_ratio_dev = std::max(worst_ratio_dev, std::abs(std::log(C[k] / C[k + 1])));
    const double nx = varifold::norm_integral(t.V, X, g);
    worst_ineq = std::max(worst_ineq, (dv + b.eta * nx) / t.area);
    worst_rel = std::max(worst_rel, (dv + b.eta * nx) / nx);
  }

  // Position field on the unit disk: div_P x = 2, so delta V = 2 pi.
  const auto disk = varifold::varifold_from_mesh(mesh::read_svmesh_file(std::string(MAXPRIN_SOURCE_DIR) + "/data/disk.svmesh"),
                                                 *geom::euclidean(3));
  const double disk_dv = varifold::first_variation(disk, geom::ExprVectorField::parse("x1, x2, x3", 3), *geom::euclidean(3));
  const double ratio_band = std::log(2.0);
  line(4, all_nonzero && worst_ratio_dev <= ratio_band && std::abs(disk_dv - 2 * std::numbers::pi) <= 1e-3,
       fmt("20 tube meshes: max |log(C(t)/C(t/10))| = %.3g (band %.3g); disk position field %.7f", worst_ratio_dev, ratio_band,
           disk_dv));
  line(5, worst_ineq <= 1e-6,
       fmt("20 tube meshes: max (delta V + eta int|X|) / area = %.3g, max (delta V + eta int|X|) / int|X| = %.3g", worst_ineq,
           worst_rel));
}

void criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::Report r = scenario(
      "scenario = theorem1\ndomain = ball:1\nm = 2\np = 0, 0, 1\neta = 1\nmeshes = dome\nanchor_radius = 0.3\n"
      "anchor_depth = 0.15\ntolerance = 1e-6\nseed = 1\n");
  const double secs = seconds_since(t0);
  const auto* res = find(r, "dome: stationarity residual");
  const auto* dist = find(r, "dome: support distance to p");
  line(6, r.passed() && res && dist && secs <= 120.0,
       fmt("residual %.3g, support distance %.6g >= eps - 2 max edge = %.6g, %.1f s", res ? res->value : NAN,
           dist ? dist->value : NAN, dist ? dist->threshold : NAN, secs));
}

void criterion7() {
  const harness::Report r = scenario("scenario = theorem5\ndomain = ball:1\nm = 2\np = 0, 0, 1\nh = 1\nmeshes = cap\nseed = 1\n");
  const auto* hrel = find(r, "cap: max relative error of |H| against h");
  const auto* dist = find(r, "cap: support distance to p");
  long triangles = 0;
  for (const auto& e : r.details["meshes"][0]["mean_curvature_refinement"]) triangles = e["triangles"];
  const harness::Report refused = scenario("scenario = theorem5\ndomain = ball:1\nm = 2\np = 0, 0, 1\nh = 3\n");
  line(7, r.passed() && hrel && triangles >= 5000 && refused.refused(),
       fmt("h=1: eps(1) = %.4g, |H| error %.3g at %ld triangles, support distance %.4g; h=3: %s", r.provenance["epsilon"].get<double>(),
           hrel ? hrel->value : NAN, triangles, dist ? dist->value : NAN, refused.status().c_str()));
}

void criterion8() {
  std::string summary;
  bool ok = true;
  for (const char* name : {"theorem3", "theorem6"}) {
    std::string cfg = std::string("scenario = ") + name + "\ndomain = ball:1\nm = 2\np = 0, 0, 1\nfamily = scaled\nfamily_max = 10\nseed = 1\n";
    if (std::string(name) == "theorem6") cfg += "h = 1\n";
    const harness::Report r = scenario(cfg);
    int failed = 0;
    for (const auto& a : r.assertions()) failed += a.pass ? 0 : 1;
    ok = ok && r.passed();
    summary += fmt("%s: %s, i0 = %d, %zu assertions, %d failed; ", name, r.status().c_str(),
                   r.provenance.value("i0", -1), r.assertions().size(), failed);
  }
  summary.resize(summary.size() - 2);
  line(8, ok, summary);
}

void criterion9() {
  const mesh::SimplicialSurface boundary = mesh::icosphere(1.0, 2);
  const mesh::SimplicialSurface inner = mesh::disk(make_vec({0, 0, 0.2}), make_vec({1, 0, 0}), make_vec({0, 1, 0}), 0.5, 6);
  const varifold::Decomposition d = varifold::decompose_integral(mesh::merge(boundary.scaled_multiplicity(3), inner), boundary);
  bool exact = d.d == 3 && d.W.simplices == boundary.simplices && d.Wprime.simplices == inner.simplices &&
               d.Wprime.multiplicity == inner.multiplicity && d.Wprime.vertices.size() >= inner.vertices.size();
  for (double w : d.W.multiplicity) exact = exact && w == 3.0;
  const mesh::SimplicialSurface plane = mesh::grid_patch(make_vec({-1, -1, 0}), make_vec({2, 0, 0}), make_vec({0, 2, 0}), 4);
  mesh::SimplicialSurface planes;
  for (int i = 1; i <= 10; ++i) {
    const double c = std::ldexp(1.0, -i);
    planes = mesh::merge(planes, mesh::grid_patch(make_vec({-1, -1, c}), make_vec({2, 0, 0}), make_vec({0, 2, 0}), 4).scaled_multiplicity(c));
  }
  std::string why = "accepted";
  try {
    varifold::decompose_integral(planes, plane);
  } catch (const HypothesisError& e) {
    why = e.what();
  }
  line(9, exact && why != "accepted",
       fmt("3 x sphere + disk: d = %d, W and W' exact: %s; 2^-i planes: %s", d.d, exact ? "yes" : "no", why.c_str()));
}

void criterion10() {
  const BarrierBundle& b = ball_bundle();
  double eik = 0.0, conn = 0.0;
  for (const Vec& x : tube_points(b, 1000, 1e300, 51)) {
    Vec grad(3);
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      grad(k) = (b.sigma->project(xp).u - b.sigma->project(xm).u) / (2 * h);
    }
    eik = std::max(eik, std::abs(grad.norm() - 1.0));
    const Vec nu = b.sigma->project(x).nu;
    const double s = 1e-5;
    conn = std::max(conn, ((b.sigma->project(Vec(x + s * nu)).nu - b.sigma->project(Vec(x - s * nu)).nu) / (2 * s)).norm());
  }
  bool cutoff_ok = true;
  double worst_fd = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = b.epsilon * i / 1000.0;
    const double p = cutoff(t, b.epsilon), dp = cutoff_derivative(t, b.epsilon);
    cutoff_ok = cutoff_ok && dp <= -p / (b.epsilon * b.epsilon) && dp <= -b.K * p;
    const double dt = 1e-6 * (b.epsilon - t);
    if (p > 1e-290 && t > dt) worst_fd = std::max(worst_fd, std::abs((cutoff(t + dt, b.epsilon) - cutoff(t - dt, b.epsilon)) / (2 * dt) - dp) / -dp);
  }
  line(10, eik <= 1e-6 && conn <= 1e-5 && cutoff_ok && worst_fd <= 1e-6,
       fmt("1000 tube samples: max ||grad u| - 1| = %.3g, max |nabla_nu nu| = %.3g; cutoff inequalities %s on 1000 t "
           "(derivative vs differences %.2g)",
           eik, conn, cutoff_ok ? "hold" : "fail", worst_fd));
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<void()>>> runs = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criteria4and5}, {6, criterion6},
      {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  for (const auto& [k, f] : runs) {
    try {
      f();
    } catch (const std::exception& e) {
      line(k, false, std::string("error: ") + e.what());
      if (k == 4) line(5, false, "not evaluated");
    }
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
