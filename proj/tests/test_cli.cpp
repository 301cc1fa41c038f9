#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#ifndef MAXPRIN_CLI
#error "MAXPRIN_CLI must name the built command-line binary"
#endif
#ifndef MAXPRIN_SOURCE_DIR
#error "MAXPRIN_SOURCE_DIR must name the source tree"
#endif

using json = nlohmann::json;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell with stderr discarded.
Invocation run(const std::string& args) {
  const std::string cmd = std::string("'") + MAXPRIN_CLI + "' " + args + " 2>/dev/null";
  Invocation r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string source(const std::string& rel) { return std::string(MAXPRIN_SOURCE_DIR) + "/" + rel; }

// Subset of JSON Schema used by docs/report.schema.json: type, enum, const,
// required, properties, items, minimum, not, allOf, if/then and local $ref.
class Validator {
 public:
  explicit Validator(json root) : root_(std::move(root)) {}

  bool validate(const json& v, std::string& error) const { return check(root_, v, "$", &error); }

 private:
  const json& resolve(const json& s) const {
    if (!s.contains("$ref")) return s;
    const std::string ref = s["$ref"];
    return root_.at(json::json_pointer(ref.substr(1)));
  }

  static bool type_matches(const std::string& t, const json& v) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (t == "number") return v.is_number();
    return false;
  }

  bool fail(std::string* error, const std::string& path, const std::string& what) const {
    if (error) *error = path + ": " + what;
    return false;
  }

  bool check(const json& schema_in, const json& v, const std::string& path, std::string* error) const {
    const json& s = resolve(schema_in);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || type_matches(t, v);
      } else {
        ok = type_matches(s["type"], v);
      }
      if (!ok) return fail(error, path, "expected type " + s["type"].dump());
    }
    if (s.contains("enum")) {
      bool ok = false;
      for (const auto& e : s["enum"]) ok = ok || e == v;
      if (!ok) return fail(error, path, "value " + v.dump() + " not in " + s["enum"].dump());
    }
    if (s.contains("const") && s["const"] != v) return fail(error, path, "expected " + s["const"].dump());
    if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>())
      return fail(error, path, "below minimum");
    if (s.contains("not") && check(s["not"], v, path, nullptr)) return fail(error, path, "matches a forbidden schema");
    if (v.is_object()) {
      if (s.contains("required"))
        for (const auto& k : s["required"])
          if (!v.contains(k.get<std::string>())) return fail(error, path, "missing key " + k.dump());
      if (s.contains("properties"))
        for (const auto& [k, sub] : s["properties"].items())
          if (v.contains(k) && !check(sub, v[k], path + "." + k, error)) return false;
    }
    if (v.is_array() && s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i)
        if (!check(s["items"], v[i], path + "[" + std::to_string(i) + "]", error)) return false;
    if (s.contains("allOf"))
      for (const auto& sub : s["allOf"])
        if (!check(sub, v, path, error)) return false;
    if (s.contains("if") && check(s["if"], v, path, nullptr) && s.contains("then"))
      if (!check(s["then"], v, path, error)) return false;
    return true;
  }

  json root_;
};

const Validator& schema() {
  static const Validator v = [] {
    std::ifstream in(source("docs/report.schema.json"));
    return Validator(json::parse(in));
  }();
  return v;
}

json parse_valid(const Invocation& r) {
  json j = json::parse(r.out);
  std::string error;
  EXPECT_TRUE(schema().validate(j, error)) << error << "\n" << r.out;
  return j;
}

}  // namespace

TEST(Schema, ValidatorRejectsBrokenReports) {
  std::string error;
  json good = {{"command", "scenario"}, {"version", "0.1.0"}, {"pass", false}, {"status", "hypothesis not satisfied"},
               {"reason", "r"}, {"scenario", "theorem1"}, {"assertions", json::array()},
               {"provenance", {{"version", "0.1.0"}, {"seed", 1}, {"n", 3}, {"m", 2}, {"domain", "ball:1"}, {"metric", "euclidean"}}},
               {"details", json::object()}};
  EXPECT_TRUE(schema().validate(good, error)) << error;
  json bad = good;
  bad.erase("reason");
  EXPECT_FALSE(schema().validate(bad, error));
  bad = good;
  bad["pass"] = true;
  EXPECT_FALSE(schema().validate(bad, error));
  bad = good;
  bad["assertions"] = json::array({{{"name", "x"}, {"relation", "=="}}});
  EXPECT_FALSE(schema().validate(bad, error));
  bad = good;
  bad["command"] = "plot";
  EXPECT_FALSE(schema().validate(bad, error));
}

TEST(Cli, ConvexityOfTheUnitBall) {
  const Invocation r = run("convexity --domain ball:1 --p 0,0,1 --m 2 --no-timestamp");
  EXPECT_EQ(r.code, 0);
  const json j = parse_valid(r);
  EXPECT_EQ(j["kappa_sum"], 2.0);
  EXPECT_EQ(j["classification"], "strongly m-convex");
  EXPECT_FALSE(j.contains("timestamp"));
}

TEST(Cli, HalfspaceBarrierIsAnExpectedFailure) {
  const Invocation r = run("barrier-verify --domain halfspace --p 0,0,0 --m 2 --eta 0.1 --grid 10 --no-timestamp");
  EXPECT_EQ(r.code, 2);
  const json j = parse_valid(r);
  EXPECT_EQ(j["pass"], false);
}

TEST(Cli, BarrierVerifyUnitBall) {
  const Invocation r = run("barrier-verify --domain ball:1 --m 2 --grid 12 --no-timestamp");
  EXPECT_EQ(r.code, 0);
  const json j = parse_valid(r);
  EXPECT_EQ(j["barrier"]["eta"], 1.0);
  EXPECT_LE(j["worst_normalized_margin"].get<double>(), 1e-7);
}

TEST(Cli, PositionFieldOnTheDisk) {
  const Invocation r = run("first-variation --mesh '" + source("data/disk.svmesh") + "' --field \"x1,x2,x3\" --no-timestamp");
  EXPECT_EQ(r.code, 0);
  const json j = parse_valid(r);
  EXPECT_NEAR(j["first_variation"].get<double>(), 2 * std::numbers::pi, 1e-3);
}

TEST(Cli, DecomposeAndScenario) {
  const std::string sphere = "'" + source("data/unit_sphere.svmesh") + "'";
  const Invocation d = run("decompose --mesh " + sphere + " --boundary " + sphere + " --no-timestamp");
  EXPECT_EQ(d.code, 0);
  EXPECT_EQ(parse_valid(d)["d"], 1);

  const Invocation refuse = run("scenario --config '" + source("configs/theorem5_refuse.cfg") + "' --no-timestamp");
  EXPECT_EQ(refuse.code, 2);
  EXPECT_EQ(parse_valid(refuse)["status"], "hypothesis not satisfied");

  const Invocation t4 = run("scenario --config '" + source("configs/theorem4.cfg") + "' --set boundary_level=1 --no-timestamp");
  EXPECT_EQ(t4.code, 0);
  parse_valid(t4);
}

TEST(Cli, OutputIsByteIdenticalAcrossRunsAndThreads) {
  const std::string args = "scenario --config '" + source("configs/theorem1.cfg") + "' --set grid=8 --no-timestamp";
  const Invocation a = run(args + " --threads 1");
  const Invocation b = run(args + " --threads 1");
  const Invocation c = run(args + " --threads 3");
  EXPECT_EQ(a.code, 0);
  parse_valid(a);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);

  const Invocation stamped = run("convexity --domain ball:1 --m 2");
  EXPECT_TRUE(parse_valid(stamped).contains("timestamp"));
}

TEST(Cli, ExitCodesForErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("convexity --bogus").code, 1);
  EXPECT_EQ(run("first-variation --mesh /nonexistent.svmesh --field x1,x2,x3").code, 1);
  EXPECT_EQ(run("scenario --name theorem1 --set bogus=1").code, 1);
  EXPECT_EQ(run("first-variation --mesh '" + source("data/disk.svmesh") + "' --field \"x1 +, x2, x3\"").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}
