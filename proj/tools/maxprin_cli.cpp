// maxprin: command-line front end.
//
// Exit codes: 0 verified, 2 assertion violated or hypothesis refused,
// 1 usage or runtime error.

#include "maxprin/barrier.hpp"
#include "maxprin/geometry.hpp"
#include "maxprin/harness.hpp"
#include "maxprin/mesh.hpp"
#include "maxprin/minimizer.hpp"
#include "maxprin/parallel.hpp"
#include "maxprin/varifold.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

using namespace maxprin;
using harness::json;
using harness::number;
using harness::to_json;

namespace {

constexpr int kPass = 0;
constexpr int kRuntime = 1;
constexpr int kViolated = 2;

struct Common {
  int threads = default_threads();
  int seed = 1;
  bool no_timestamp = false;
  std::string out;
};

struct GeometryArgs {
  std::string domain = "ball:1";
  std::string metric = "euclidean";
  std::string p;
  int n = 0;
  int m = 2;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Vec parse_point(const std::string& text) {
  std::vector<double> xs;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      const std::string item = text.substr(start, i - start);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != item.size()) throw Error("malformed coordinate '" + item + "' in point '" + text + "'");
      xs.push_back(v);
      start = i + 1;
    }
  }
  return to_vec(xs);
}

int resolve_dim(const GeometryArgs& g) {
  if (g.n > 0) return g.n;
  if (!g.p.empty()) return static_cast<int>(parse_point(g.p).size());
  return 3;
}

std::shared_ptr<const geom::Domain> make_domain(const GeometryArgs& g, int n) {
  return geom::parse_domain(g.domain, n, geom::parse_metric(g.metric, n));
}

Vec boundary_point(const GeometryArgs& g, const geom::Domain& dom) {
  if (!g.p.empty()) {
    Vec p = parse_point(g.p);
    if (p.size() != dom.dim()) throw Error("--p has " + std::to_string(p.size()) + " coordinates, expected " + std::to_string(dom.dim()));
    return p;
  }
  Vec e = Vec::Zero(dom.dim());
  e(dom.dim() - 1) = 1.0;
  return dom.project_to_boundary(e);
}

void add_geometry(CLI::App* app, GeometryArgs& g, bool with_p = true) {
  app->add_option("--domain", g.domain, "halfspace | ball:R | cylinder:R | levelset:<expr>")->capture_default_str();
  app->add_option("--metric", g.metric, "euclidean | conformal:<f> | matrix:<g11;g12;...>")->capture_default_str();
  if (with_p) app->add_option("--p", g.p, "boundary point, comma-separated (default: boundary point above the origin)");
  app->add_option("--n", g.n, "ambient dimension (default: from --p, else 3)");
  app->add_option("--m", g.m, "dimension of the varieties")->capture_default_str();
}

void add_common(CLI::App* app, Common& c, bool csv) {
  app->add_option("--threads", c.threads, "worker threads (default: MAXPRIN_THREADS or all cores)");
  app->add_option("--seed", c.seed, "random seed")->capture_default_str();
  app->add_flag("--no-timestamp", c.no_timestamp, "omit the timestamp for byte-identical reruns");
  if (csv) app->add_option("--out", c.out, "write a CSV table to this path");
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f.precision(17);
  return f;
}

int emit(json body, const std::string& command, bool pass, const std::string& status, const Common& c) {
  json j;
  j["command"] = command;
  j["version"] = harness::kVersion;
  j["pass"] = pass;
  j["status"] = status;
  if (!c.no_timestamp) j["timestamp"] = utc_now();
  for (auto& [k, v] : body.items()) j[k] = v;
  std::cout << j.dump(2) << '\n';
  return pass ? kPass : kViolated;
}

json bundle_json(const barrier::BarrierBundle& b) {
  json j;
  j["m"] = b.m;
  j["eta"] = number(b.eta);
  if (b.h) j["h"] = number(*b.h);
  j["kappa_sum"] = number(b.kappa_sum);
  j["boundary_curvatures"] = to_json(b.boundary_curvatures);
  j["K"] = number(b.K);
  j["chart_bound"] = number(b.chart_bound);
  j["epsilon"] = number(b.epsilon);
  j["tube_radius"] = number(b.tube_radius);
  j["route"] = b.route();
  j["tube_samples"] = b.stats.tube_samples;
  j["boundary_samples"] = b.stats.boundary_samples;
  j["rim_samples"] = b.stats.rim_samples;
  j["min_convexity_margin"] = number(b.stats.min_convexity_margin);
  j["halvings"] = b.stats.halvings;
  return j;
}

struct BarrierArgs {
  std::optional<double> eta;
  std::optional<double> h;
  std::optional<double> epsilon;
  int budget = 1000;
  bool flat = false;
};

void add_barrier(CLI::App* app, BarrierArgs& b) {
  app->add_option("--eta", b.eta, "target eta (default: midpoint of the admissible interval)");
  app->add_option("--h", b.h, "mean curvature bound; eta must then lie in (h, kappa_sum)");
  app->add_option("--epsilon", b.epsilon, "override epsilon (must not exceed the selected value)");
  app->add_option("--sample-budget", b.budget, "tube samples for K and the tube checks")->capture_default_str();
  app->add_flag("--flat", b.flat, "use the boundary itself as the contact surface (testing only)");
}

barrier::BarrierOptions barrier_options(const GeometryArgs& g, const BarrierArgs& a, const Common& c) {
  barrier::BarrierOptions o;
  o.m = g.m;
  o.eta = a.eta;
  o.h = a.h;
  o.epsilon = a.epsilon;
  o.sample_budget = a.budget;
  o.flat_test_mode = a.flat;
  o.seed = static_cast<std::uint64_t>(c.seed);
  return o;
}

std::vector<int> parse_anchors(const std::string& spec, const mesh::SimplicialSurface& s) {
  std::vector<int> out;
  if (spec == "boundary") {
    const auto rim = mesh::boundary_vertices(s);
    for (std::size_t v = 0; v < rim.size(); ++v)
      if (rim[v]) out.push_back(static_cast<int>(v));
    return out;
  }
  if (spec == "none" || spec.empty()) return out;
  for (double x : to_std(parse_point(spec))) {
    if (x != static_cast<int>(x) || x < 0 || x >= static_cast<double>(s.vertices.size()))
      throw Error("anchor '" + std::to_string(x) + "' is not a vertex index");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Barrier vectorfields, discrete varifolds and maximum-principle checks"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help message and exit");
  app.set_version_flag("--version", harness::kVersion);
  app.footer(R"(Expressions (fields, metrics, level sets):
  expr    := term (('+' | '-') term)*
  term    := unary (('*' | '/') unary)*
  unary   := ('-' | '+') unary | power
  power   := primary ('^' unary)?
  primary := number | x1..xn | pi | e | func '(' expr ')' | '(' expr ')'
  func    := sin | cos | exp | log | sqrt | tanh
Vector fields are comma-separated component expressions, e.g. "x1, x2, x3".
Domains: halfspace {xn >= 0} | ball:R | cylinder:R | levelset:<f> for {f >= 0}.
Metrics: euclidean | conformal:<f> for exp(2f) I | matrix:<g11;g12;...;gnn>, upper triangle row-major.
Exit status: 0 pass, 2 assertion violated or hypothesis not satisfied, 1 usage or runtime error.
MAXPRIN_THREADS sets the default worker count.)");

  Common common;
  GeometryArgs geo;
  BarrierArgs bar;

  auto* convexity = app.add_subcommand("convexity", "principal curvatures and m-convexity of the boundary at p");
  add_geometry(convexity, geo);
  add_common(convexity, common, false);

  auto* build = app.add_subcommand("barrier-build", "construct the barrier: K, epsilon, tube");
  add_geometry(build, geo);
  add_barrier(build, bar);
  add_common(build, common, false);

  int grid = 50;
  auto* verify = app.add_subcommand("barrier-verify", "check Psi_X + eta |X| <= 0 on a grid over the tube");
  add_geometry(verify, geo);
  add_barrier(verify, bar);
  verify->add_option("--grid", grid, "grid points per axis")->capture_default_str();
  add_common(verify, common, true);

  std::string mesh_path, field, domain_check;
  std::optional<double> h_bound;
  auto* fv = app.add_subcommand("first-variation", "delta V(X) of the varifold of an SVMESH file");
  fv->add_option("--mesh", mesh_path, "SVMESH file")->required();
  fv->add_option("--field", field, "comma-separated components, e.g. \"x1,x2,x3\"")->required();
  fv->add_option("--metric", geo.metric, "metric")->capture_default_str();
  fv->add_option("--domain", domain_check, "also check first-order minimizing in this domain (exit 2 on failure)");
  fv->add_option("--h", h_bound, "also check delta V(X) + h int |X| >= 0 (exit 2 on failure)");
  add_common(fv, common, false);

  std::string anchors = "boundary", mesh_out;
  minimizer::MinimizeOptions mopt;
  bool no_remesh = false;
  auto* mini = app.add_subcommand("minimize", "projected-gradient area minimization inside the domain");
  mini->add_option("--mesh", mesh_path, "SVMESH file with the initial surface")->required();
  mini->add_option("--domain", geo.domain, "domain")->capture_default_str();
  mini->add_option("--metric", geo.metric, "metric")->capture_default_str();
  mini->add_option("--anchors", anchors, "boundary | none | comma-separated vertex indices")->capture_default_str();
  mini->add_option("--tolerance", mopt.tolerance, "stationarity residual target")->capture_default_str();
  mini->add_option("--max-iterations", mopt.max_iterations, "iteration cap")->capture_default_str();
  mini->add_option("--battery", mopt.battery_size, "size of the inward bump battery")->capture_default_str();
  mini->add_flag("--no-remesh", no_remesh, "disable edge flips and splits");
  mini->add_option("--mesh-out", mesh_out, "write the final surface as SVMESH");
  add_common(mini, common, true);

  std::string boundary_path, w_out, wprime_out;
  auto* dec = app.add_subcommand("decompose", "split an integral varifold into d * boundary + remainder");
  dec->add_option("--mesh", mesh_path, "SVMESH file of V")->required();
  dec->add_option("--boundary", boundary_path, "SVMESH file of the boundary")->required();
  dec->add_option("--w-out", w_out, "write W as SVMESH");
  dec->add_option("--wprime-out", wprime_out, "write W' as SVMESH");
  add_common(dec, common, false);

  std::string config_path, scenario_name;
  std::vector<std::string> overrides;
  auto* sc = app.add_subcommand("scenario", "run a theorem-level scenario");
  sc->add_option("--config", config_path, "key-value scenario file");
  sc->add_option("--name", scenario_name, "scenario name when no config is given (theorem1, theorem3, ...)");
  sc->add_option("--set", overrides, "override a config key: key=value (repeatable)");
  add_common(sc, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kPass : kRuntime;
  }

  try {
    if (common.threads < 1) throw Error("--threads must be at least 1");
    if (common.seed < 0) throw Error("--seed must be nonnegative");

    if (*convexity) {
      const int n = resolve_dim(geo);
      const auto dom = make_domain(geo, n);
      const Vec p = boundary_point(geo, *dom);
      const geom::ConvexityReport r = geom::m_convexity(*dom, p, geo.m);
      json body;
      body["domain"] = dom->describe();
      body["metric"] = dom->metric().describe();
      body["p"] = to_json(p);
      body["m"] = geo.m;
      body["kappa_sum"] = number(r.kappa_sum);
      body["curvatures"] = to_json(r.curvatures);
      body["inward_normal"] = to_json(r.inward_normal);
      body["classification"] = geom::to_string(r.classification);
      const bool strong = r.classification == geom::Convexity::Strong;
      return emit(body, "convexity", strong, strong ? "pass" : "fail", common);
    }

    if (*build || *verify) {
      const std::string command = *build ? "barrier-build" : "barrier-verify";
      const int n = resolve_dim(geo);
      const auto dom = make_domain(geo, n);
      const Vec p = boundary_point(geo, *dom);
      json body;
      body["domain"] = dom->describe();
      body["metric"] = dom->metric().describe();
      body["p"] = to_json(p);
      body["seed"] = common.seed;
      barrier::BarrierBundle b;
      try {
        b = barrier::build_barrier(dom, p, barrier_options(geo, bar, common));
      } catch (const HypothesisError& e) {
        body["reason"] = e.what();
        return emit(body, command, false, "hypothesis not satisfied", common);
      }
      body["barrier"] = bundle_json(b);
      if (*build) return emit(body, command, true, "pass", common);
      const barrier::BarrierField X(b, barrier::BarrierField::unit_lipschitz_log_amplitude(b));
      const barrier::VerifyReport vr = barrier::verify_barrier(X, geo.m, b.eta, grid, common.threads, !common.out.empty());
      body["grid"] = grid;
      body["grid_points"] = vr.grid_points;
      body["evaluated"] = vr.evaluated;
      body["active"] = vr.active;
      body["worst_normalized_margin"] = number(vr.worst_normalized);
      body["worst_active_normalized_margin"] = number(vr.worst_active_normalized);
      body["worst_point"] = vr.worst_point.size() ? to_json(vr.worst_point) : json(nullptr);
      body["tolerance"] = number(vr.tolerance);
      if (!common.out.empty()) {
        auto f = open_csv(common.out);
        for (int k = 0; k < n; ++k) f << 'x' << k + 1 << ',';
        f << "u,psi,norm_x,margin,normalized_margin,active\n";
        for (const auto& gp : vr.points) {
          for (int k = 0; k < n; ++k) f << gp.x(k) << ',';
          f << gp.u << ',' << gp.psi << ',' << gp.norm_x << ',' << gp.margin << ',' << gp.normalized_margin << ','
            << (gp.active ? 1 : 0) << '\n';
        }
      }
      return emit(body, command, vr.passed, vr.passed ? "pass" : "fail", common);
    }

    if (*fv) {
      const mesh::SimplicialSurface s = mesh::read_svmesh_file(mesh_path);
      const auto metric = geom::parse_metric(geo.metric, s.n);
      const auto X = std::make_shared<geom::ExprVectorField>(geom::ExprVectorField::parse(field, s.n));
      const varifold::DiscreteVarifold V = varifold::varifold_from_mesh(s, *metric);
      json body;
      body["mesh"] = mesh_path;
      body["metric"] = metric->describe();
      body["field"] = field;
      body["atoms"] = V.atoms.size();
      body["area"] = number(V.total_weight());
      body["first_variation"] = number(varifold::first_variation(V, *X, *metric, common.threads));
      body["norm_integral"] = number(varifold::norm_integral(V, *X, *metric, common.threads));
      bool pass = true;
      if (!domain_check.empty()) {
        const auto dom = geom::parse_domain(domain_check, s.n, metric);
        try {
          const varifold::MinimizingReport r = varifold::check_first_order_minimizing(V, *dom, {{"field", X}}, common.threads);
          body["minimizing_tolerance"] = number(r.tolerance);
          body["first_order_minimizing"] = r.passed;
          pass = pass && r.passed;
        } catch (const AdmissibilityError& e) {
          body["admissibility_error"] = e.what();
          pass = false;
        }
      }
      if (h_bound) {
        const varifold::BoundedMcReport r = varifold::check_bounded_mc(V, *X, *h_bound, *metric, common.threads);
        body["h"] = number(*h_bound);
        body["bounded_mc_quantity"] = number(r.quantity);
        body["bounded_mc_tolerance"] = number(r.tolerance);
        pass = pass && r.passed;
      }
      return emit(body, "first-variation", pass, pass ? "pass" : "fail", common);
    }

    if (*mini) {
      minimizer::MinimizeProblem prob;
      prob.mesh = mesh::read_svmesh_file(mesh_path);
      const int n = prob.mesh.n;
      prob.domain = geom::parse_domain(geo.domain, n, geom::parse_metric(geo.metric, n));
      prob.anchors = parse_anchors(anchors, prob.mesh);
      prob.options = mopt;
      prob.options.threads = common.threads;
      prob.options.seed = static_cast<std::uint64_t>(common.seed);
      prob.options.remesh = !no_remesh;
      const minimizer::MinimizeResult r = minimizer::minimize(prob);
      json body;
      body["mesh"] = mesh_path;
      body["domain"] = prob.domain->describe();
      body["metric"] = prob.domain->metric().describe();
      body["anchors"] = r.anchors.size();
      body["converged"] = r.converged;
      body["stop_reason"] = r.stop_reason;
      body["iterations"] = r.iterations;
      body["residual"] = number(r.residual);
      body["battery_residual"] = number(r.battery_residual);
      body["area"] = number(r.area);
      body["initial_area"] = number(r.history.front().area);
      body["min_boundary_distance"] = number(minimizer::boundary_distance(r.mesh, *prob.domain));
      body["flips"] = r.flips;
      body["splits"] = r.splits;
      body["vertices"] = r.mesh.vertices.size();
      if (!common.out.empty()) {
        auto f = open_csv(common.out);
        minimizer::write_convergence_csv(f, r.history);
      }
      if (!mesh_out.empty()) mesh::write_svmesh_file(mesh_out, r.mesh);
      const bool pass = r.converged && r.battery_residual <= prob.options.tolerance;
      return emit(body, "minimize", pass, pass ? "pass" : "fail", common);
    }

    if (*dec) {
      const mesh::SimplicialSurface V = mesh::read_svmesh_file(mesh_path);
      const mesh::SimplicialSurface B = mesh::read_svmesh_file(boundary_path);
      json body;
      body["mesh"] = mesh_path;
      body["boundary"] = boundary_path;
      varifold::Decomposition d;
      try {
        d = varifold::decompose_integral(V, B);
      } catch (const HypothesisError& e) {
        body["reason"] = e.what();
        return emit(body, "decompose", false, "hypothesis not satisfied", common);
      }
      body["d"] = d.d;
      body["matched_simplices"] = d.matched_simplices;
      body["mass_V"] = number(mesh::area(V));
      body["mass_W"] = number(d.W.num_simplices() ? mesh::area(d.W) : 0.0);
      body["mass_Wprime"] = number(d.Wprime.num_simplices() ? mesh::area(d.Wprime) : 0.0);
      if (!w_out.empty()) mesh::write_svmesh_file(w_out, d.W);
      if (!wprime_out.empty()) mesh::write_svmesh_file(wprime_out, d.Wprime);
      return emit(body, "decompose", true, "pass", common);
    }

    if (*sc) {
      if (config_path.empty() && scenario_name.empty()) throw Error("scenario needs --config or --name");
      harness::Config cfg = config_path.empty() ? harness::Config::parse_string("", "<command line>")
                                                : harness::Config::load(config_path);
      if (!scenario_name.empty()) cfg.set("scenario", scenario_name);
      for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw Error("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!cfg.has("threads")) cfg.set("threads", std::to_string(common.threads));
      if (!cfg.has("seed")) cfg.set("seed", std::to_string(common.seed));
      const harness::Report r = harness::run_scenario(cfg);
      json body = r.to_json();
      body.erase("pass");
      body.erase("status");
      return emit(body, "scenario", r.passed(), r.status(), common);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}
