#pragma once

// Theorem-level scenarios: key-value config in, JSON report out.

#include "maxprin/barrier.hpp"
#include "maxprin/core.hpp"
#include "maxprin/geometry.hpp"
#include "maxprin/mesh.hpp"
#include "maxprin/minimizer.hpp"
#include "maxprin/varifold.hpp"

#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace maxprin::harness {

using json = nlohmann::ordered_json;
using mesh::SimplicialSurface;
using varifold::DiscreteVarifold;

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Config

/// `key = value` lines; `#` starts a comment; keys are unique.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& origin = "<config>") {
    Config c;
    c.origin_ = origin;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) c.fail(lineno, "expected 'key = value'");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty()) c.fail(lineno, "empty key");
      for (char ch : key)
        if (!(std::islower(static_cast<unsigned char>(ch)) || std::isdigit(static_cast<unsigned char>(ch)) || ch == '_'))
          c.fail(lineno, "key '" + key + "' may only use a-z, 0-9 and '_'");
      if (value.empty()) c.fail(lineno, "key '" + key + "' has no value");
      if (c.entries_.count(key)) c.fail(lineno, "duplicate key '" + key + "'");
      c.entries_[key] = {value, lineno};
    }
    return c;
  }

  static Config parse_string(const std::string& text, const std::string& origin = "<config>") {
    std::istringstream in(text);
    return parse(in, origin);
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  /// Adds or replaces a key (command-line overrides).
  void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& origin() const { return origin_; }

  std::string str(const std::string& key) const { return entry(key).value; }
  std::string str(const std::string& key, const std::string& fallback) const {
    return has(key) ? str(key) : fallback;
  }

  double number(const std::string& key) const {
    const Entry& e = entry(key);
    return to_double(e.value, key, e.line);
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  std::optional<double> optional_number(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const Entry& e = entry(key);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (ec != std::errc() || ptr != e.value.data() + e.value.size())
      fail(e.line, "key '" + key + "' expects an integer, got '" + e.value + "'");
    return v;
  }

  std::vector<std::string> list(const std::string& key, const std::string& fallback) const {
    std::vector<std::string> out;
    const std::string v = str(key, fallback);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= v.size(); ++i) {
      if (i == v.size() || v[i] == ',') {
        const std::string item = trim(v.substr(start, i - start));
        if (!item.empty()) out.push_back(item);
        start = i + 1;
      }
    }
    return out;
  }

  Vec vector(const std::string& key, int n) const {
    const Entry& e = entry(key);
    const auto items = list(key, "");
    if (static_cast<int>(items.size()) != n)
      fail(e.line, "key '" + key + "' expects " + std::to_string(n) + " comma-separated numbers");
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = to_double(items[static_cast<std::size_t>(i)], key, e.line);
    return v;
  }

  /// Rejects keys outside `allowed`.
  void require_only(const std::set<std::string>& allowed) const {
    for (const auto& [key, e] : entries_)
      if (!allowed.count(key)) fail(e.line, "unknown key '" + key + "'");
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  [[noreturn]] void fail(int line, const std::string& what) const {
    throw ConfigError(origin_ + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what);
  }

  const Entry& entry(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) fail(0, "missing required key '" + key + "'");
    return it->second;
  }

  double to_double(const std::string& s, const std::string& key, int line) const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      fail(line, "key '" + key + "' expects a number, got '" + s + "'");
    return v;
  }

  std::map<std::string, Entry> entries_;
  std::string origin_;
};

// ---------------------------------------------------------------------------
// Reports

/// Finite doubles as numbers, everything else as null.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

struct Assertion {
  std::string name;
  std::string relation;  // "<=", ">=", "<", ">" or "true"
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;

  /// Signed slack, positive when the assertion holds.
  double margin() const {
    if (relation == "<=" || relation == "<") return threshold - value;
    if (relation == ">=" || relation == ">") return value - threshold;
    return pass ? 1.0 : -1.0;
  }
};

class Report {
 public:
  explicit Report(std::string scenario) : scenario_(std::move(scenario)) {}

  bool check(const std::string& name, double value, const std::string& relation, double threshold) {
    Assertion a{name, relation, value, threshold, false};
    if (relation == "<=") a.pass = value <= threshold;
    else if (relation == "<") a.pass = value < threshold;
    else if (relation == ">=") a.pass = value >= threshold;
    else if (relation == ">") a.pass = value > threshold;
    else throw Error("unknown relation '" + relation + "'");
    assertions_.push_back(a);
    return a.pass;
  }

  bool check_true(const std::string& name, bool ok) {
    assertions_.push_back({name, "true", ok ? 1.0 : 0.0, 1.0, ok});
    return ok;
  }

  /// Marks the scenario as refused; no assertion runs after this.
  void refuse(const std::string& reason) {
    refused_ = true;
    reason_ = reason;
  }

  bool refused() const { return refused_; }
  bool passed() const {
    if (refused_ || assertions_.empty()) return false;
    return std::all_of(assertions_.begin(), assertions_.end(), [](const Assertion& a) { return a.pass; });
  }
  std::string status() const { return refused_ ? "hypothesis not satisfied" : (passed() ? "pass" : "fail"); }
  const std::vector<Assertion>& assertions() const { return assertions_; }
  const std::string& scenario() const { return scenario_; }
  const std::string& reason() const { return reason_; }

  json provenance = json::object();
  json details = json::object();

  json to_json() const {
    json j;
    j["scenario"] = scenario_;
    j["status"] = status();
    j["pass"] = passed();
    if (refused_) j["reason"] = reason_;
    json list = json::array();
    for (const Assertion& a : assertions_) {
      json e;
      e["name"] = a.name;
      e["relation"] = a.relation;
      e["value"] = number(a.value);
      e["threshold"] = number(a.threshold);
      e["margin"] = number(a.margin());
      e["pass"] = a.pass;
      list.push_back(e);
    }
    j["assertions"] = list;
    j["provenance"] = provenance;
    j["details"] = details;
    return j;
  }

 private:
  std::string scenario_;
  std::vector<Assertion> assertions_;
  bool refused_ = false;
  std::string reason_;
};

// ---------------------------------------------------------------------------
// Point sets

inline double directed_hausdorff(const std::vector<Vec>& A, const std::vector<Vec>& B) {
  double worst = 0.0;
  for (const Vec& a : A) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& b : B) best = std::min(best, (a - b).squaredNorm());
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

/// max(sup_a dist(a, B), sup_b dist(b, A)) in chart coordinates.
inline double hausdorff_distance(const std::vector<Vec>& A, const std::vector<Vec>& B) {
  if (A.empty() || B.empty()) throw Error("Hausdorff distance needs two nonempty point sets");
  return std::max(directed_hausdorff(A, B), directed_hausdorff(B, A));
}


// ---------------------------------------------------------------------------
// Scenario plumbing

namespace detail {

inline const std::set<std::string> kCommonKeys = {
    "scenario", "n", "m", "domain", "metric", "p", "eta", "h", "seed", "threads", "sample_budget", "grid",
    "meshes", "anchor_radius", "anchor_depth", "lift", "rings", "tolerance", "max_iterations", "cap_depth",
    "cap_theta", "cap_rings", "battery", "bump_radius"};

struct Setup {
  int n = 3;
  int m = 2;
  std::shared_ptr<const geom::MetricField> metric;
  std::shared_ptr<const geom::Domain> domain;
  Vec p;
  std::uint64_t seed = 1;
  int threads = 1;
};

inline Setup setup(const Config& c, int default_m) {
  Setup s;
  s.n = c.integer("n", 3);
  require_dim(s.n);
  s.m = c.integer("m", default_m);
  if (s.m < 1 || s.m > s.n - 1) throw ConfigError("m must lie in [1, n-1]");
  s.metric = geom::parse_metric(c.str("metric", "euclidean"), s.n);
  s.domain = geom::parse_domain(c.str("domain", "ball:1"), s.n, s.metric);
  if (c.has("p")) {
    s.p = c.vector("p", s.n);
  } else {
    Vec e = Vec::Zero(s.n);
    e(s.n - 1) = 1.0;
    s.p = s.domain->project_to_boundary(e);
  }
  const int seed = c.integer("seed", 1);
  if (seed < 0) throw ConfigError("seed must be nonnegative");
  s.seed = static_cast<std::uint64_t>(seed);
  s.threads = std::max(1, c.integer("threads", 1));
  return s;
}

inline json setup_provenance(const Setup& s, const Config& c) {
  json j;
  j["version"] = kVersion;
  j["seed"] = s.seed;
  j["n"] = s.n;
  j["m"] = s.m;
  j["domain"] = s.domain->describe();
  j["metric"] = s.metric->describe();
  j["p"] = to_json(s.p);
  j["config"] = c.origin();
  return j;
}

/// Euclidean orthonormal basis of the complement of v.
inline Mat complement_basis(const Vec& v) {
  const int n = static_cast<int>(v.size());
  Mat A(n, 1);
  A.col(0) = v.normalized();
  const Mat Q = Eigen::HouseholderQR<Mat>(A).householderQ() * Mat::Identity(n, n);
  return Q.rightCols(n - 1);
}

struct MeshCase {
  std::string name;
  SimplicialSurface mesh;
  std::vector<int> anchors;
};

/// Anchored circle (m = 2) or anchored chord (m = 1) at depth `anchor_depth`
/// below p, its interior pushed toward p by `lift`.
inline MeshCase dome_case(const Config& c, const Setup& s) {
  const double r = c.number("anchor_radius", 0.3);
  const double depth = c.number("anchor_depth", 0.15);
  const double lift = c.number("lift", 0.1);
  const int rings = c.integer("rings", 8);
  if (!(r > 0.0) || !(depth > 0.0) || rings < 1) throw ConfigError("dome needs anchor_radius > 0, anchor_depth > 0, rings >= 1");
  const Vec nu = s.domain->inward_normal(s.p).normalized();
  const Vec center = s.p + depth * nu;
  const Mat T = complement_basis(nu);
  MeshCase mc;
  mc.name = "dome";
  if (s.m == 2) {
    mc.mesh = mesh::disk(center, T.col(0), T.col(1), r, rings);
    mc.anchors = mesh::disk_rim(rings);
  } else if (s.m == 1) {
    mc.mesh = mesh::segment(center - r * Vec(T.col(0)), center + r * Vec(T.col(0)), 2 * rings);
    mc.anchors = {0, 2 * rings};
  } else {
    throw ConfigError("the generated dome supports m = 1 and m = 2; pass an SVMESH file for m = " + std::to_string(s.m));
  }
  for (Vec& x : mc.mesh.vertices) {
    const double rho2 = (x - center).squaredNorm() / (r * r);
    x -= lift * std::max(0.0, 1.0 - rho2) * nu;
  }
  return mc;
}

/// Spherical cap of mean curvature h (radius m/h) whose top lies `cap_depth`
/// below p, bending away from p.
inline MeshCase cap_case(const Config& c, const Setup& s, double h, int rings_override = 0) {
  if (s.m != 2 || s.n != 3) throw ConfigError("the generated cap needs n = 3 and m = 2");
  if (!(h > 0.0)) throw ConfigError("the generated cap needs h > 0");
  const double R = s.m / h;
  const double depth = c.number("cap_depth", 0.15);
  const double theta = c.number("cap_theta", 0.3 / R);
  const int rings = rings_override > 0 ? rings_override : c.integer("cap_rings", 29);
  const Vec nu = s.domain->inward_normal(s.p).normalized();
  const Vec top = s.p + depth * nu;
  MeshCase mc;
  mc.name = "cap";
  mc.mesh = mesh::sphere_cap(top + R * nu, R, -nu, theta, rings);
  const auto rim = mesh::boundary_vertices(mc.mesh);
  for (std::size_t v = 0; v < rim.size(); ++v)
    if (rim[v]) mc.anchors.push_back(static_cast<int>(v));
  return mc;
}

inline MeshCase file_case(const std::string& path) {
  MeshCase mc;
  mc.name = path;
  mc.mesh = mesh::read_svmesh_file(path);
  const auto rim = mesh::boundary_vertices(mc.mesh);
  for (std::size_t v = 0; v < rim.size(); ++v)
    if (rim[v]) mc.anchors.push_back(static_cast<int>(v));
  return mc;
}

inline std::vector<MeshCase> mesh_cases(const Config& c, const Setup& s, const std::string& fallback, double h) {
  std::vector<MeshCase> out;
  for (const std::string& item : c.list("meshes", fallback)) {
    if (item == "dome") out.push_back(dome_case(c, s));
    else if (item == "cap") out.push_back(cap_case(c, s, h));
    else out.push_back(file_case(item));
  }
  if (out.empty()) throw ConfigError("no meshes configured");
  return out;
}

inline minimizer::MinimizeOptions minimize_options(const Config& c, const Setup& s) {
  minimizer::MinimizeOptions o;
  o.tolerance = c.number("tolerance", 1e-6);
  o.max_iterations = c.integer("max_iterations", 5000);
  o.threads = s.threads;
  o.seed = s.seed;
  return o;
}

/// Bump fields centered at mesh vertices whose support stays clear of the
/// anchored vertices. Directions are seeded random unit vectors, or the
/// direction of the discrete mean-curvature vector when `aligned`.
inline std::vector<varifold::NamedField> bump_battery(const MeshCase& mc, int count, double radius, std::uint64_t seed,
                                                      bool aligned = false) {
  std::vector<bool> anchored(mc.mesh.vertices.size(), false);
  for (int a : mc.anchors) anchored[static_cast<std::size_t>(a)] = true;
  std::vector<std::size_t> centers;
  for (std::size_t v = 0; v < mc.mesh.vertices.size(); ++v) {
    if (anchored[v]) continue;
    bool clear = true;
    for (int a : mc.anchors)
      if ((mc.mesh.vertices[static_cast<std::size_t>(a)] - mc.mesh.vertices[v]).norm() < radius) clear = false;
    if (clear) centers.push_back(v);
  }
  std::vector<varifold::NamedField> out;
  if (centers.empty() || count <= 0) return out;
  const std::vector<Vec> grad = mesh::area_gradient(mc.mesh, *geom::euclidean(mc.mesh.n), 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N01;
  for (int k = 0; k < count; ++k) {
    const std::size_t v = centers[static_cast<std::size_t>(k) * centers.size() / static_cast<std::size_t>(count)];
    Vec dir(mc.mesh.n);
    if (aligned && grad[v].norm() > 0.0) {
      dir = -grad[v].normalized();
    } else {
      for (int i = 0; i < mc.mesh.n; ++i) dir(i) = N01(rng);
      dir.normalize();
    }
    out.push_back({"bump " + std::to_string(k), varifold::bump_field(mc.mesh.vertices[v], radius, dir)});
  }
  return out;
}

/// Smallest signed distance u over the samples inside the tube; +inf when none is.
inline double min_u(const barrier::BarrierBundle& b, const std::vector<Vec>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec& x : pts)
    if (b.in_tube(x)) best = std::min(best, b.sigma->project(x).u);
  return best;
}

inline barrier::BarrierOptions barrier_options(const Config& c, const Setup& s, std::optional<double> h) {
  barrier::BarrierOptions o;
  o.m = s.m;
  o.eta = c.optional_number("eta");
  o.h = h;
  o.seed = s.seed;
  o.sample_budget = c.integer("sample_budget", 1000);
  return o;
}

inline json bundle_provenance(const barrier::BarrierBundle& b) {
  json j;
  j["epsilon"] = number(b.epsilon);
  j["eta"] = number(b.eta);
  j["K"] = number(b.K);
  j["kappa_sum"] = number(b.kappa_sum);
  j["tube_radius"] = number(b.tube_radius);
  j["chart_bound"] = number(b.chart_bound);
  j["route"] = b.route();
  j["tube_samples"] = b.stats.tube_samples;
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Theorems 1 and 5: exclusion from an epsilon-neighborhood of p

namespace detail {

inline Report exclusion_scenario(const Config& c, const std::string& name, bool bounded) {
  Report r(name);
  const Setup s = setup(c, 2);
  r.provenance = setup_provenance(s, c);
  const double h = bounded ? c.number("h") : 0.0;
  if (h < 0.0) throw ConfigError("h must be nonnegative");
  r.provenance["h"] = h;

  const geom::ConvexityReport conv = geom::m_convexity(*s.domain, s.p, s.m);
  r.details["kappa_sum"] = number(conv.kappa_sum);
  r.details["curvatures"] = to_json(conv.curvatures);
  r.details["classification"] = geom::to_string(conv.classification);
  if (conv.classification != geom::Convexity::Strong) {
    r.refuse("hypothesis not satisfied: N is not strongly m-convex at p (kappa_1 + ... + kappa_m = " +
             expr::detail::format_number(conv.kappa_sum + 0.0) + ")");
    return r;
  }
  if (bounded && !(conv.kappa_sum > h)) {
    r.refuse("hypothesis not satisfied: kappa_1 + ... + kappa_m = " + expr::detail::format_number(conv.kappa_sum) +
             " does not exceed h = " + expr::detail::format_number(h));
    return r;
  }
  barrier::BarrierBundle b;
  try {
    b = barrier::build_barrier(s.domain, s.p, barrier_options(c, s, bounded ? std::optional<double>(h) : std::nullopt));
  } catch (const HypothesisError& e) {
    r.refuse(e.what());
    return r;
  }
  r.provenance.update(bundle_provenance(b));
  const barrier::BarrierField X(b, barrier::BarrierField::unit_lipschitz_log_amplitude(b));

  const int grid = c.integer("grid", 16);
  r.provenance["grid"] = grid;
  if (grid > 0) {
    const barrier::VerifyReport vr = barrier::verify_barrier(X, s.m, b.eta, grid, s.threads);
    r.check("barrier: max normalized Psi_X + eta |X| on the grid", vr.worst_normalized, "<=", vr.tolerance);
    r.details["barrier_grid_points"] = vr.evaluated;
    r.details["barrier_active_points"] = vr.active;
  }

  const bool minimal = h == 0.0;
  json cases = json::array();
  for (const MeshCase& mc : mesh_cases(c, s, minimal ? "dome" : "cap", h)) {
    json d;
    d["mesh"] = mc.name;
    SimplicialSurface final_mesh = mc.mesh;
    // The generated dome is only a starting surface; it is always minimized.
    if (minimal || mc.name == "dome") {
      minimizer::MinimizeProblem prob{s.domain, mc.mesh, mc.anchors, minimize_options(c, s)};
      const minimizer::MinimizeResult mr = minimizer::minimize(prob);
      final_mesh = mr.mesh;
      d["iterations"] = mr.iterations;
      d["stop_reason"] = mr.stop_reason;
      d["area"] = number(mr.area);
      r.check(mc.name + ": stationarity residual", mr.residual, "<=", prob.options.tolerance);
      r.check(mc.name + ": inward battery residual", mr.battery_residual, "<=", prob.options.tolerance);
    }
    const DiscreteVarifold V = varifold::varifold_from_mesh(final_mesh, s.domain->metric());
    const double max_edge = mesh::max_edge_length(final_mesh);
    if (minimal) {
      const varifold::MinimizingReport fm =
          varifold::check_first_order_minimizing(V, *s.domain, {{"barrier", std::make_shared<barrier::BarrierField>(X)}}, s.threads);
      r.check(mc.name + ": delta V(X) for the barrier field", fm.min_first_variation, ">=", -fm.tolerance);
    } else {
      const double radius = c.number("bump_radius", 0.1);
      const MeshCase current{mc.name, final_mesh, mc.anchors};
      auto battery = bump_battery(current, c.integer("battery", 32), radius, s.seed);
      battery.insert(battery.begin(), {"barrier", std::make_shared<barrier::BarrierField>(X)});
      double worst = std::numeric_limits<double>::infinity();
      double worst_tol = 0.0;
      for (const auto& f : battery) {
        const varifold::BoundedMcReport br = varifold::check_bounded_mc(V, *f.field, h, s.domain->metric(), s.threads);
        if (br.quantity + br.tolerance < worst + worst_tol) {
          worst = br.quantity;
          worst_tol = br.tolerance;
        }
      }
      d["battery_size"] = battery.size();
      r.check(mc.name + ": min over battery of delta V(X) + h int |X|", worst, ">=", -worst_tol);
      // Bumps along the mean-curvature vector of a surface with |H| = h make
      // the inequality an equality; their slack is reported, not asserted.
      json tight = json::array();
      for (const auto& f : bump_battery(current, 4, radius, s.seed, true)) {
        const varifold::BoundedMcReport br = varifold::check_bounded_mc(V, *f.field, h, s.domain->metric(), s.threads);
        tight.push_back({{"quantity", number(br.quantity)}, {"tolerance", number(br.tolerance)}, {"norm_integral", number(br.norm_integral)}});
      }
      d["aligned_bumps"] = tight;
      if (s.domain->metric().describe() == "euclidean" && mc.name == "cap") {
        json refinement = json::array();
        for (int rings : {8, 16, c.integer("cap_rings", 29)}) {
          const MeshCase fine = cap_case(c, s, h, rings);
          const varifold::MeanCurvature mcv = varifold::mesh_mean_curvature(fine.mesh, s.domain->metric());
          double err = 0.0;
          for (std::size_t v = 0; v < fine.mesh.vertices.size(); ++v)
            if (!mcv.boundary[v]) err = std::max(err, std::abs(mcv.H[v].norm() - h) / h);
          refinement.push_back({{"rings", rings}, {"triangles", fine.mesh.num_simplices()}, {"max_relative_error", number(err)}});
          if (rings == c.integer("cap_rings", 29)) r.check(mc.name + ": max relative error of |H| against h", err, "<=", 0.05);
        }
        d["mean_curvature_refinement"] = refinement;
        const varifold::McInterpretation mi = varifold::mean_curvature_interpretation(final_mesh, *s.domain, h, 0.05);
        d["interior_vertices"] = mi.interior_vertices;
        d["contact_vertices"] = mi.contact_vertices;
        r.check_true(mc.name + ": two-part mean curvature interpretation", mi.passed);
      }
    }
    const double dist = varifold::support_distance(V, s.p, s.domain->metric());
    d["support_distance"] = number(dist);
    d["max_edge_length"] = number(max_edge);
    r.check(mc.name + ": support distance to p", dist, ">=", b.epsilon - 2.0 * max_edge);
    r.check(mc.name + ": support distance to p without the mesh allowance", dist, ">=", b.epsilon);
    cases.push_back(d);
  }
  r.details["meshes"] = cases;
  return r;
}

}  // namespace detail

inline Report scenario_theorem1(const Config& c) { return detail::exclusion_scenario(c, "theorem1", false); }

inline Report scenario_theorem5(const Config& c) {
  if (c.number("h") == 0.0) {
    Report r = detail::exclusion_scenario(c, "theorem5", false);
    r.provenance["h"] = 0.0;
    return r;
  }
  return detail::exclusion_scenario(c, "theorem5", true);
}

// ---------------------------------------------------------------------------
// Theorems 3 and 6: metric families g(i) -> g

namespace detail {

struct CSample {
  Vec x;
  barrier::Projection proj;
};

/// Points of C = {u <= eps}: boundary points within the quartic reach of p,
/// pushed inward by a random fraction of eps.
inline void sample_c(const barrier::BarrierBundle& b, int count, std::uint64_t seed, std::vector<CSample>& interior,
                     std::vector<Vec>& boundary) {
  const geom::Domain& dom = b.domain();
  const Vec& p = b.base_point();
  const int n = b.dim();
  const Vec nu = dom.inward_normal(p);
  const Mat T = complement_basis(nu);
  const double reach = std::min(b.tube_radius, 1.5 * std::pow(b.epsilon, 0.25));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N01;
  interior.push_back({p, b.sigma->project(p)});
  boundary.push_back(p);
  for (int k = 0; k < count; ++k) {
    Vec dir(n - 1);
    for (int i = 0; i < n - 1; ++i) dir(i) = N01(rng);
    dir.normalize();
    const double rho = reach * std::pow(U(rng), 1.0 / (n - 1));
    Vec q;
    try {
      q = dom.project_to_boundary(p + rho * (T * dir));
    } catch (const Error&) {
      continue;
    }
    if (!b.in_tube(q)) continue;
    const barrier::Projection pq = b.sigma->project(q);
    if (pq.u > b.epsilon) continue;
    boundary.push_back(q);
    const Vec x = q + U(rng) * b.epsilon * dom.inward_normal(q);
    if (!b.in_tube(x) || dom.u0(x) < 0.0) continue;
    const barrier::Projection px = b.sigma->project(x);
    if (px.u <= b.epsilon) interior.push_back({x, px});
  }
}

struct FamilyCheck {
  double min_boundary_margin = std::numeric_limits<double>::infinity();  // (iii): kappa sum - eta
  double min_level_margin = std::numeric_limits<double>::infinity();     // (iv): k sum - eta
  double min_grad = std::numeric_limits<double>::infinity();             // |grad u|_g(i)
  bool ok() const { return min_boundary_margin > 0.0 && min_level_margin > 0.0 && min_grad > 0.0; }
};

inline FamilyCheck check_iii_iv(const barrier::BarrierBundle& b, const std::shared_ptr<const geom::MetricField>& metric,
                                const std::vector<CSample>& interior, const std::vector<Vec>& boundary) {
  FamilyCheck f;
  const auto dom = geom::with_metric(b.domain(), metric);
  for (const Vec& q : boundary)
    f.min_boundary_margin = std::min(f.min_boundary_margin, geom::m_convexity(*dom, q, b.m).kappa_sum - b.eta);
  for (const CSample& cs : interior) {
    const geom::ScalarJet jet{cs.proj.u, cs.proj.du, cs.proj.hess_coord};
    const geom::LevelSetShape shape = geom::levelset_shape(jet, cs.x, *metric);
    f.min_grad = std::min(f.min_grad, shape.grad_norm);
    f.min_level_margin = std::min(f.min_level_margin, shape.curvatures.head(b.m).sum() - b.eta);
  }
  return f;
}

inline std::shared_ptr<const geom::MetricField> family_metric(const std::string& family, int i,
                                                              const std::shared_ptr<const geom::MetricField>& g) {
  if (family == "constant") return g;
  return std::make_shared<geom::ScaledMetric>(1.0 + std::ldexp(1.0, -i), g);
}

inline Report family_scenario(const Config& c, const std::string& name, bool bounded) {
  Report r(name);
  const Setup s = setup(c, 2);
  r.provenance = setup_provenance(s, c);
  const double h = bounded ? c.number("h") : 0.0;
  if (h < 0.0) throw ConfigError("h must be nonnegative");
  const std::string family = c.str("family", "scaled");
  if (family != "scaled" && family != "constant") throw ConfigError("family must be 'scaled' or 'constant'");
  const int family_max = c.integer("family_max", 10);
  const int index_cap = c.integer("index_cap", 40);
  if (family_max < 0 || index_cap < family_max) throw ConfigError("need 0 <= family_max <= index_cap");
  r.provenance["h"] = h;
  r.provenance["family"] = family;
  r.provenance["family_max"] = family_max;
  r.provenance["index_cap"] = index_cap;

  const geom::ConvexityReport conv = geom::m_convexity(*s.domain, s.p, s.m);
  r.details["kappa_sum"] = number(conv.kappa_sum);
  if (conv.classification != geom::Convexity::Strong || !(conv.kappa_sum > h)) {
    r.refuse("hypothesis not satisfied: kappa_1 + ... + kappa_m = " + expr::detail::format_number(conv.kappa_sum) +
             (bounded ? " does not exceed h = " + expr::detail::format_number(h) : std::string(" is not positive")));
    return r;
  }
  barrier::BarrierBundle b;
  try {
    b = barrier::build_barrier(s.domain, s.p, barrier_options(c, s, bounded ? std::optional<double>(h) : std::nullopt));
  } catch (const HypothesisError& e) {
    r.refuse(e.what());
    return r;
  }
  r.provenance.update(bundle_provenance(b));

  // Properties (i)-(iv) of u under the limit metric.
  std::vector<CSample> interior;
  std::vector<Vec> boundary;
  const int c_samples = c.integer("c_samples", 200);
  sample_c(b, c_samples, s.seed, interior, boundary);
  r.provenance["c_samples"] = c_samples;
  r.details["c_interior_samples"] = interior.size();
  r.details["c_boundary_samples"] = boundary.size();
  double min_u_off_p = std::numeric_limits<double>::infinity();
  for (const CSample& cs : interior)
    if ((cs.x - s.p).norm() > 0.0) min_u_off_p = std::min(min_u_off_p, cs.proj.u);
  const double u_p = std::abs(b.sigma->project(s.p).u);
  const FamilyCheck limit = check_iii_iv(b, s.metric, interior, boundary);
  const bool limit_ok = u_p <= 1e-12 && min_u_off_p > 0.0 && b.stats.min_rim_distance > b.epsilon && limit.ok();
  if (!limit_ok) {
    throw GeometryError("properties (i)-(iv) of u fail under the limit metric: u(p) = " + expr::detail::format_number(u_p) +
                        ", min u off p = " + expr::detail::format_number(min_u_off_p) +
                        ", min u on the tube rim = " + expr::detail::format_number(b.stats.min_rim_distance) +
                        ", boundary margin = " + expr::detail::format_number(limit.min_boundary_margin) +
                        ", level-set margin = " + expr::detail::format_number(limit.min_level_margin));
  }
  r.check("(i) |u(p)|", u_p, "<=", 1e-12);
  r.check("(i) min u on sampled C minus p", min_u_off_p, ">", 0.0);
  r.check("(ii) min u on the tube rim", b.stats.min_rim_distance, ">", b.epsilon);

  // (iii)-(iv) under g(i) for every i up to the cap; i0 is the start of the
  // final passing run.
  std::vector<FamilyCheck> checks;
  json per_index = json::array();
  for (int i = 0; i <= index_cap; ++i) {
    checks.push_back(check_iii_iv(b, family_metric(family, i, s.metric), interior, boundary));
    per_index.push_back({{"i", i},
                         {"boundary_margin", number(checks.back().min_boundary_margin)},
                         {"level_set_margin", number(checks.back().min_level_margin)}});
  }
  int i0 = index_cap + 1;
  while (i0 > 0 && checks[static_cast<std::size_t>(i0 - 1)].ok()) --i0;
  r.details["properties_by_index"] = per_index;
  r.provenance["i0"] = i0;
  if (!r.check("i0 (first index after which (iii)-(iv) hold up to the cap)", i0, "<=", family_max)) return r;

  auto run = [&](const std::shared_ptr<const geom::MetricField>& metric, SimplicialSurface& out, json& d) {
    const auto dom = geom::with_metric(*s.domain, metric);
    MeshCase mc = bounded ? cap_case(c, s, h) : dome_case(c, s);
    if (!bounded) {
      minimizer::MinimizeProblem prob{dom, mc.mesh, mc.anchors, minimize_options(c, s)};
      const minimizer::MinimizeResult mr = minimizer::minimize(prob);
      d["residual"] = number(mr.residual);
      d["iterations"] = mr.iterations;
      out = mr.mesh;
      return mr.residual <= prob.options.tolerance ? 0.0 : mr.residual;
    }
    out = mc.mesh;
    const DiscreteVarifold V = varifold::varifold_from_mesh(out, *metric);
    auto battery = bump_battery(mc, c.integer("battery", 16), c.number("bump_radius", 0.1), s.seed);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& f : battery) {
      const varifold::BoundedMcReport br = varifold::check_bounded_mc(V, *f.field, h, *metric, s.threads);
      worst = std::min(worst, br.quantity + br.tolerance);
    }
    d["battery_min_slack"] = number(worst);
    return worst >= 0.0 ? 0.0 : -worst;
  };

  SimplicialSurface limit_mesh;
  json limit_details;
  const double limit_violation = run(s.metric, limit_mesh, limit_details);
  const std::vector<Vec>& S = limit_mesh.vertices;
  const double limit_edge = mesh::max_edge_length(limit_mesh);
  r.check(bounded ? "limit: bounded mean curvature violation" : "limit: stationarity violation", limit_violation, "<=", 0.0);
  const double limit_umin = min_u(b, S);
  if (std::isfinite(limit_umin))
    r.check("limit set: min u over the support minus eps", limit_umin - b.epsilon, ">", 2.0 * limit_edge);
  else
    r.check("limit set: support vertices inside the tube around p", 0.0, "<=", 0.0);
  r.details["limit"] = limit_details;

  json runs = json::array();
  double previous = std::numeric_limits<double>::infinity();
  double last = 0.0;
  for (int i = i0; i <= family_max; ++i) {
    const auto metric = family_metric(family, i, s.metric);
    SimplicialSurface mi;
    json d;
    d["i"] = i;
    d["metric"] = metric->describe();
    const double violation = run(metric, mi, d);
    const std::vector<Vec>& pts = mi.vertices;
    const double edge = mesh::max_edge_length(mi);
    const double tol = 2.0 * std::max(edge, limit_edge);
    const double umin = min_u(b, pts);
    const double hd = hausdorff_distance(pts, S);
    d["u_min"] = number(umin);
    d["hausdorff_to_limit"] = number(hd);
    const std::string tag = "i = " + std::to_string(i) + ": ";
    r.check(tag + (bounded ? "bounded mean curvature violation" : "stationarity violation"), violation, "<=", 0.0);
    if (std::isfinite(umin)) {
      r.check(tag + "u minimum over the support", umin, ">", 0.0);
      r.check(tag + "exclusion margin u_min - eps - 2 max edge", umin - b.epsilon - 2.0 * edge, ">", 0.0);
    } else {
      r.check(tag + "support vertices inside the tube around p", 0.0, "<=", 0.0);
    }
    if (std::isfinite(previous)) r.check(tag + "Hausdorff distance growth over i - 1", hd - previous, "<=", tol);
    previous = hd;
    last = hd;
    runs.push_back(d);
  }
  r.check("Hausdorff distance to the limit at i = family_max", last, "<=", 2.0 * limit_edge);
  r.details["runs"] = runs;
  return r;
}

}  // namespace detail

inline Report scenario_theorem3(const Config& c) { return detail::family_scenario(c, "theorem3", false); }
inline Report scenario_theorem6(const Config& c) { return detail::family_scenario(c, "theorem6", true); }

// ---------------------------------------------------------------------------
// Theorem 4: barrier contradiction at a mean-convex touching point and the
// integral decomposition

inline Report scenario_theorem4(const Config& c) {
  using namespace detail;
  Report r("theorem4");
  const Setup s = setup(c, 2);
  if (s.m != s.n - 1) throw ConfigError("theorem4 needs hypersurface varifolds: m = n - 1");
  r.provenance = setup_provenance(s, c);
  const double threshold = c.number("mean_curvature_threshold", 0.0);
  r.provenance["mean_curvature_threshold"] = threshold;

  // (a) local barrier against a mesh tangent to the boundary at p.
  const geom::ConvexityReport conv = geom::m_convexity(*s.domain, s.p, s.m);
  r.details["boundary_mean_curvature"] = number(conv.kappa_sum);
  if (!(conv.kappa_sum > threshold)) {
    r.refuse("hypothesis not satisfied: boundary mean curvature " + expr::detail::format_number(conv.kappa_sum) +
             " does not exceed " + expr::detail::format_number(threshold));
    return r;
  }
  barrier::BarrierBundle b;
  try {
    b = barrier::build_barrier(s.domain, s.p, barrier_options(c, s, std::nullopt));
  } catch (const HypothesisError& e) {
    r.refuse(e.what());
    return r;
  }
  r.provenance.update(bundle_provenance(b));
  const auto X = std::make_shared<barrier::BarrierField>(b, barrier::BarrierField::unit_lipschitz_log_amplitude(b));
  const double rho = c.number("tangent_radius", 0.5);
  const double theta = c.number("tangent_theta", 0.2);
  const int rings = c.integer("tangent_rings", 10);
  if (s.n != 3) throw ConfigError("the generated tangent sphere patch needs n = 3");
  const Vec nu = s.domain->inward_normal(s.p).normalized();
  const SimplicialSurface touching = mesh::sphere_cap(s.p + rho * nu, rho, -nu, theta, rings);
  double min_u0 = std::numeric_limits<double>::infinity();
  for (const Vec& x : touching.vertices) min_u0 = std::min(min_u0, s.domain->u0(x));
  r.check("(a) touching mesh: min u0 over vertices", min_u0, ">=", -s.domain->boundary_tolerance());
  r.check_true("(a) touching mesh meets the boundary at p", s.domain->on_boundary(touching.vertices.front()));
  const DiscreteVarifold V = varifold::varifold_from_mesh(touching, s.domain->metric());
  const double dv = varifold::first_variation(V, *X, s.domain->metric(), s.threads);
  const double nx = varifold::norm_integral(V, *X, s.domain->metric(), s.threads);
  r.details["first_variation"] = number(dv);
  r.details["norm_integral"] = number(nx);
  r.details["first_variation_per_unit_norm"] = number(nx > 0.0 ? dv / nx : 0.0);
  r.check("(a) int |X| d mu_V", nx, ">", 0.0);
  r.check("(a) delta V(X) + eta int |X| (contradiction when <= 0)", dv + b.eta * nx, "<=", 0.0);
  const varifold::MinimizingReport fm = varifold::check_first_order_minimizing(V, *s.domain, {{"barrier", X}}, s.threads);
  r.check_true("(a) touching mesh is not first-order minimizing", !fm.passed);

  // (b) V = d * boundary + interior part.
  SimplicialSurface bmesh;
  if (c.has("boundary_mesh")) {
    bmesh = mesh::read_svmesh_file(c.str("boundary_mesh"));
  } else {
    if (s.domain->kind().rfind("ball:", 0) != 0) throw ConfigError("boundary_mesh is required unless the domain is a ball");
    bmesh = mesh::icosphere(std::stod(s.domain->kind().substr(5)), c.integer("boundary_level", 2));
  }
  const int mult = c.integer("boundary_multiplicity", 3);
  if (mult < 1) throw ConfigError("boundary_multiplicity must be at least 1");
  SimplicialSurface inner = c.has("interior_mesh")
                                ? mesh::read_svmesh_file(c.str("interior_mesh"))
                                : mesh::disk(Vec::Zero(3), mesh::axis_vec(3, {1}), mesh::axis_vec(3, {0, 1}),
                                             c.number("interior_radius", 0.5), 4);
  const SimplicialSurface combined = mesh::merge(bmesh.scaled_multiplicity(mult), inner);
  const varifold::Decomposition dec = varifold::decompose_integral(combined, bmesh);
  r.details["boundary_density"] = dec.d;
  r.check("(b) |d - boundary multiplicity|", std::abs(dec.d - mult), "<=", 0.0);
  double max_u0_W = 0.0;
  for (const Vec& x : dec.W.vertices) max_u0_W = std::max(max_u0_W, std::abs(s.domain->u0(x)));
  double min_u0_Wp = std::numeric_limits<double>::infinity();
  for (const Vec& x : dec.Wprime.vertices) min_u0_Wp = std::min(min_u0_Wp, s.domain->u0(x));
  const double aW = mesh::area(dec.W), aWp = mesh::area(dec.Wprime);
  const double expectW = mult * mesh::area(bmesh), expectWp = mesh::area(inner);
  r.check("(b) |mass(W) - d mass(boundary)|", std::abs(aW - expectW), "<=", 1e-12 * expectW);
  r.check("(b) |mass(W') - mass(interior)|", std::abs(aWp - expectWp), "<=", 1e-12 * std::max(expectWp, 1.0));
  r.check("(b) spt W on the boundary: max |u0|", max_u0_W, "<=", 1e-9);
  r.check("(b) spt W' clear of the boundary: min u0", min_u0_Wp, ">", s.domain->boundary_tolerance());
  r.details["matched_simplices"] = dec.matched_simplices;

  // (c) planes converging to the boundary of a half space with weights 2^-i.
  const int planes = c.integer("planes", 8);
  SimplicialSurface base = mesh::grid_patch(mesh::axis_vec(3, {-1, -1, 0}), mesh::axis_vec(3, {2}), mesh::axis_vec(3, {0, 2}), 2);
  SimplicialSurface stack;
  for (int i = 1; i <= planes; ++i) {
    SimplicialSurface P = base.scaled_multiplicity(std::ldexp(1.0, -i));
    for (Vec& x : P.vertices) x(2) = 1.0 / i;
    stack = i == 1 ? P : mesh::merge(stack, P);
  }
  bool rejected = false;
  std::string why;
  try {
    (void)varifold::decompose_integral(stack, base);
  } catch (const HypothesisError& e) {
    rejected = true;
    why = e.what();
  }
  r.details["non_integral_rejection"] = why;
  r.check_true("(c) truncated 2^-i planes rejected as non-integral", rejected);
  return r;
}

// ---------------------------------------------------------------------------
// Dispatch

inline std::set<std::string> allowed_keys(const std::string& scenario) {
  std::set<std::string> k = detail::kCommonKeys;
  if (scenario == "theorem3" || scenario == "theorem6")
    for (const char* key : {"family", "family_max", "index_cap", "c_samples"}) k.insert(key);
  if (scenario == "theorem4")
    for (const char* key : {"mean_curvature_threshold", "tangent_radius", "tangent_theta", "tangent_rings", "boundary_mesh",
                            "boundary_level", "boundary_multiplicity", "interior_mesh", "interior_radius", "planes"})
      k.insert(key);
  return k;
}

inline Report run_scenario(const Config& c) {
  const std::string name = c.str("scenario");
  static const std::set<std::string> known = {"theorem1", "theorem3", "theorem4", "theorem5", "theorem6"};
  if (!known.count(name)) throw ConfigError("unknown scenario '" + name + "' (expected theorem1, theorem3, theorem4, theorem5, theorem6)");
  c.require_only(allowed_keys(name));
  if (name == "theorem1") return scenario_theorem1(c);
  if (name == "theorem3") return scenario_theorem3(c);
  if (name == "theorem4") return scenario_theorem4(c);
  if (name == "theorem5") return scenario_theorem5(c);
  return scenario_theorem6(c);
}

}  // namespace maxprin::harness
