#include "maxprin/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace maxprin;
using namespace maxprin::mesh;

namespace {

SimplicialSurface parse(const std::string& text) {
  std::istringstream in(text);
  return read_svmesh(in);
}

SimplicialSurface jittered_patch(std::uint64_t seed, int k = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1, 1);
  SimplicialSurface s = grid_patch(make_vec({-0.5, -0.5, 0}), make_vec({1, 0, 0}), make_vec({0, 1, 0}), k);
  for (Vec& v : s.vertices) v += make_vec({0.05 * U(rng), 0.05 * U(rng), 0.2 * U(rng)});
  return s;
}

}  // namespace

TEST(Svmesh, RoundTrip) {
  SimplicialSurface s = unit_square();
  s.multiplicity[1] = 3;
  std::ostringstream out;
  write_svmesh(out, s);
  const SimplicialSurface r = parse(out.str());
  ASSERT_EQ(r.m, 2);
  ASSERT_EQ(r.n, 3);
  ASSERT_EQ(r.vertices.size(), 4u);
  EXPECT_EQ(r.simplices, s.simplices);
  EXPECT_EQ(r.multiplicity, s.multiplicity);
  for (std::size_t v = 0; v < 4; ++v) EXPECT_EQ(r.vertices[v], s.vertices[v]);
}

TEST(Svmesh, DefaultMultiplicityAndTrailingBlankLines) {
  const SimplicialSurface r = parse("SVMESH 1 2\n2 1\n0 0\n1 0\n0 1\n\n\n");
  EXPECT_EQ(r.multiplicity, std::vector<double>{1.0});
}

TEST(Svmesh, StrictErrors) {
  EXPECT_THROW(parse("SVMESH 2\n"), MeshError);
  EXPECT_THROW(parse("MESH 1 2\n1 0\n0 0\n"), MeshError);
  EXPECT_THROW(parse("SVMESH 1 2\n2 1\n0 0\n1 0\n0 2\n"), MeshError);        // index out of range
  EXPECT_THROW(parse("SVMESH 1 2\n2 1\n0 0\n1\n0 1\n"), MeshError);          // short vertex line
  EXPECT_THROW(parse("SVMESH 1 2\n2 1\n0 0\n1 x\n0 1\n"), MeshError);        // non-numeric
  EXPECT_THROW(parse("SVMESH 1 2\n2 1\n0 0\n1 0\n0 1 1 4\n"), MeshError);    // extra token
  EXPECT_THROW(parse("SVMESH 1 2\n2 1\n0 0\n0 0\n0 1\n"), MeshError);        // degenerate
  EXPECT_THROW(parse("SVMESH 1 2\n2 1\n0 0\n1 0\n0 1 -1\n"), MeshError);     // bad multiplicity
  EXPECT_THROW(parse("SVMESH 1 2\n2 2\n0 0\n1 0\n0 1\n"), MeshError);        // missing line
  EXPECT_THROW(parse("SVMESH 1 2\n2 1\n\n0 0\n1 0\n0 1\n"), MeshError);      // interior blank line
  try {
    parse("SVMESH 1 2\n2 1\n0 0\n1 x\n0 1\n");
  } catch (const MeshError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Quadrature, WeightsAndExactness) {
  for (int m = 1; m <= 4; ++m) {
    const Quadrature q = simplex_quadrature(m, 2);
    double wsum = 0.0;
    for (double w : q.weights) wsum += w;
    EXPECT_NEAR(wsum, 1.0, 1e-15);
    // The average of b_0 b_1 over the simplex is 1/((m+1)(m+2)), and of b_0^2
    // is 2/((m+1)(m+2)).
    double cross = 0.0, square = 0.0;
    for (std::size_t k = 0; k < q.weights.size(); ++k) {
      cross += q.weights[k] * q.bary(0, static_cast<Eigen::Index>(k)) * q.bary(1, static_cast<Eigen::Index>(k));
      square += q.weights[k] * std::pow(q.bary(0, static_cast<Eigen::Index>(k)), 2);
    }
    EXPECT_NEAR(cross, 1.0 / ((m + 1) * (m + 2)), 1e-14) << m;
    EXPECT_NEAR(square, 2.0 / ((m + 1) * (m + 2)), 1e-14) << m;
  }
  const Quadrature tri = simplex_quadrature(2, 2);
  EXPECT_NEAR(tri.bary(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(tri.bary(1, 0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(simplex_quadrature(1, 2).bary(1, 0), 0.5 - 0.5 / std::sqrt(3.0), 1e-15);
}

TEST(Area, Examples) {
  EXPECT_NEAR(area(unit_square()), 1.0, 1e-15);
  EXPECT_NEAR(area(circle_polygon(1.0, 360)), 2.0 * std::numbers::pi, 1e-4);
  const double exact = 360 * 2 * std::sin(std::numbers::pi / 360);
  EXPECT_NEAR(area(circle_polygon(1.0, 360)), exact, 1e-12);
  SimplicialSurface doubled = unit_square().scaled_multiplicity(2);
  EXPECT_NEAR(area(doubled), 2.0, 1e-15);
}

TEST(Area, ConformalSegmentLength) {
  const SimplicialSurface seg = segment(make_vec({0, 0}), make_vec({1, 0}), 200);
  const auto constant = geom::parse_metric("conformal:0.3", 2);
  EXPECT_NEAR(area(seg, *constant), std::exp(0.3), 1e-13);
  const auto varying = geom::parse_metric("conformal:0.1*x1", 2);
  EXPECT_NEAR(area(seg, *varying), 10.0 * (std::exp(0.1) - 1.0), 1e-9);
}

TEST(Area, LatitudeSphere) {
  const SimplicialSurface s = uv_sphere(1.0, 50, 50);
  EXPECT_GE(s.num_simplices(), 4800u);
  EXPECT_NEAR(area(s), 4.0 * std::numbers::pi, 0.01 * 4.0 * std::numbers::pi);
}

TEST(Area, GradientMatchesCentralDifferences) {
  const std::vector<std::shared_ptr<const geom::MetricField>> metrics = {
      geom::euclidean(3), geom::parse_metric("conformal:0.2*x1 - 0.1*x2*x3", 3),
      geom::parse_metric("matrix:1+0.1*x3^2;0.1*x1;0;1;0;2", 3)};
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    for (const auto& g : metrics) {
      SimplicialSurface s = jittered_patch(seed);
      const std::vector<Vec> grad = area_gradient(s, *g);
      const double h = 1e-5;
      double worst = 0.0, scale = 0.0;
      for (std::size_t v = 0; v < s.vertices.size(); ++v)
        for (int i = 0; i < 3; ++i) {
          SimplicialSurface a = s, b = s;
          a.vertices[v](i) += h;
          b.vertices[v](i) -= h;
          const double fd = (area(a, *g) - area(b, *g)) / (2 * h);
          worst = std::max(worst, std::abs(fd - grad[v](i)));
          scale = std::max(scale, std::abs(grad[v](i)));
        }
      EXPECT_LE(worst, 1e-6 * scale) << g->describe() << " seed " << seed;
    }
  }
}

TEST(Area, GradientIsThreadInvariant) {
  const SimplicialSurface s = jittered_patch(9, 10);
  const auto g = geom::parse_metric("conformal:0.2*x1", 3);
  const auto one = area_gradient(s, *g, 2, 1);
  const auto four = area_gradient(s, *g, 2, 4);
  for (std::size_t v = 0; v < one.size(); ++v) EXPECT_EQ(one[v], four[v]);
  EXPECT_EQ(area(s, *g, 2, 1), area(s, *g, 2, 4));
}

TEST(Generators, DiskIsValidAndFlat) {
  const SimplicialSurface d = disk(1.0, 8);
  validate(d);
  EXPECT_EQ(d.num_simplices(), 6u * 64u);
  const double polygon = 0.5 * 48 * std::sin(2 * std::numbers::pi / 48);
  EXPECT_NEAR(area(d), polygon, 1e-12);
  const auto rim = disk_rim(8);
  const auto flags = boundary_vertices(d);
  for (int v : rim) EXPECT_TRUE(flags[static_cast<std::size_t>(v)]);
  int count = 0;
  for (bool f : flags) count += f;
  EXPECT_EQ(count, 48);
}

TEST(Generators, ClosedSurfacesHaveNoBoundary) {
  for (const auto& s : {icosphere(1.0, 2), uv_sphere(1.0, 8, 12)}) {
    validate(s);
    for (bool f : boundary_vertices(s)) EXPECT_FALSE(f);
  }
  EXPECT_EQ(icosphere(1.0, 4).num_simplices(), 5120u);
}

TEST(Generators, SphereCapLiesOnSphere) {
  const Vec c = make_vec({0, 0, -1.15});
  const SimplicialSurface cap = sphere_cap(c, 2.0, make_vec({0, 0, 1}), 0.15, 6);
  validate(cap);
  for (const Vec& v : cap.vertices) EXPECT_NEAR((v - c).norm(), 2.0, 1e-14);
  EXPECT_NEAR(cap.vertices[0](2), 0.85, 1e-14);
}

TEST(Topology, NonManifoldFaceIsReported) {
  SimplicialSurface s;
  s.m = 2;
  s.n = 3;
  s.vertices = {make_vec({0, 0, 0}), make_vec({1, 0, 0}), make_vec({0, 1, 0}), make_vec({0, -1, 0}), make_vec({0, 0, 1})};
  s.add_simplex({0, 1, 2});
  s.add_simplex({0, 1, 3});
  s.add_simplex({0, 1, 4});
  EXPECT_THROW(boundary_vertices(s), MeshError);
}
