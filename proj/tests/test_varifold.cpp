#include "maxprin/varifold.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace maxprin;
using namespace maxprin::varifold;
using geom::ExprVectorField;

namespace {

std::shared_ptr<const geom::MetricField> E3() { return geom::euclidean(3); }

std::shared_ptr<ExprVectorField> field(const std::string& src, int n = 3) {
  return std::make_shared<ExprVectorField>(ExprVectorField::parse(src, n));
}

DiscreteVarifold disk_varifold(int rings = 16, double radius = 1.0) {
  return varifold_from_mesh(mesh::disk(radius, rings), *E3());
}

mesh::SimplicialSurface tilted_disk() {
  const Vec a = make_vec({1, 0, 0.3}).normalized();
  const Vec b = make_vec({0, 1, -0.2});
  const Vec bb = (b - b.dot(a) * a).normalized();
  return mesh::disk(make_vec({0.1, -0.2, 0.3}), a, bb, 0.8, 6);
}

// |deltaV - FD(t)| / t for the three step sizes of the flow-derivative check.
std::vector<double> fd_constants(const DiscreteVarifold& V, const geom::VectorField& X, const geom::MetricField& g) {
  const double dv = first_variation(V, X, g);
  const double m0 = V.total_weight();
  std::vector<double> out;
  for (double t : {1e-2, 1e-3, 1e-4}) {
    const double fd = (flow_varifold(V, X, g, t, 4).total_weight() - m0) / t;
    out.push_back(std::abs(dv - fd) / t);
  }
  return out;
}

}  // namespace

TEST(FromMesh, UnitSquareAndMultiplicity) {
  const DiscreteVarifold V = varifold_from_mesh(mesh::unit_square(), *E3(), 1);
  EXPECT_EQ(V.atoms.size(), 2u);
  EXPECT_NEAR(V.total_weight(), 1.0, 1e-15);
  const DiscreteVarifold V2 = varifold_from_mesh(mesh::unit_square(), *E3(), 2);
  EXPECT_EQ(V2.atoms.size(), 6u);
  const DiscreteVarifold D = varifold_from_mesh(mesh::unit_square().scaled_multiplicity(2), *E3(), 2);
  for (std::size_t i = 0; i < V2.atoms.size(); ++i) EXPECT_DOUBLE_EQ(D.atoms[i].weight, 2 * V2.atoms[i].weight);
}

TEST(FromMesh, TotalWeightMatchesArea) {
  const auto g = geom::parse_metric("conformal:0.3*x1 - 0.2*x2*x3", 3);
  const mesh::SimplicialSurface s = tilted_disk();
  const DiscreteVarifold V = varifold_from_mesh(s, *g);
  EXPECT_NEAR(V.total_weight(), mesh::area(s, *g), 1e-8 * mesh::area(s, *g));
  V.check(*g);
  const auto sphere = mesh::uv_sphere(1.0, 50, 50);
  EXPECT_NEAR(varifold_from_mesh(sphere, *E3()).total_weight(), 4 * std::numbers::pi, 0.04 * std::numbers::pi);
}

TEST(FromMesh, DegenerateSimplexRejected) {
  mesh::SimplicialSurface s = mesh::unit_square();
  s.vertices[2] = s.vertices[0] + 1e-14 * make_vec({1, 1, 0});
  EXPECT_THROW(varifold_from_mesh(s, *E3()), MeshError);
}

TEST(FirstVariation, DiskExamples) {
  const DiscreteVarifold V = disk_varifold();
  EXPECT_NEAR(first_variation(V, *field("1, -2, 0.5"), *E3()), 0.0, 1e-13);
  // A regular 96-gon; the position field gives twice its area.
  EXPECT_NEAR(first_variation(V, *field("x1, x2, x3"), *E3()), 2 * std::numbers::pi, 1e-2);
  EXPECT_NEAR(first_variation(V, *field("x1, x2, x3"), *E3()), 2 * V.total_weight(), 1e-12);
  EXPECT_NEAR(first_variation(disk_varifold(64), *field("x1, x2, x3"), *E3()), 2 * std::numbers::pi, 1e-3);
}

TEST(FirstVariation, Linearity) {
  const DiscreteVarifold V = varifold_from_mesh(tilted_disk(), *E3());
  const auto X = field("sin(x2), x1*x3, x1^2");
  const auto Y = field("exp(0.3*x1), x2 - x3^3, cos(x1 + x2)");
  const auto Z = geom::linear_combination(2.5, X, -1.5, Y);
  const double lhs = first_variation(V, *Z, *E3());
  const double rhs = 2.5 * first_variation(V, *X, *E3()) - 1.5 * first_variation(V, *Y, *E3());
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(FirstVariation, Additivity) {
  const DiscreteVarifold A = varifold_from_mesh(tilted_disk(), *E3());
  const DiscreteVarifold B = varifold_from_mesh(mesh::icosphere(0.5, 2), *E3());
  const auto X = field("sin(x2), x1*x3, x1^2");
  EXPECT_NEAR(first_variation(A + B, *X, *E3()), first_variation(A, *X, *E3()) + first_variation(B, *X, *E3()), 1e-12);
}

TEST(FirstVariation, RigidMotionsOnClosedMesh) {
  const DiscreteVarifold V = varifold_from_mesh(mesh::icosphere(1.0, 3, make_vec({0.2, 0, 0})), *E3());
  for (const char* src : {"1, 2, 3", "-x2, x1, 0", "0, -x3, x2", "x3 + 1, 0, -x1"}) {
    EXPECT_NEAR(first_variation(V, *field(src), *E3()), 0.0, 1e-9) << src;
  }
}

TEST(FirstVariation, ThreadInvariant) {
  const DiscreteVarifold V = varifold_from_mesh(mesh::icosphere(1.0, 3), *E3());
  const auto X = field("sin(x2), x1*x3, x1^2");
  EXPECT_EQ(first_variation(V, *X, *E3(), 1), first_variation(V, *X, *E3(), 3));
}

TEST(WeightIntegral, Examples) {
  const DiscreteVarifold V = disk_varifold(8);
  EXPECT_NEAR(weight_integral(V, [](const Vec&) { return 1.0; }), V.total_weight(), 1e-15);
  EXPECT_EQ(weight_integral(V, [](const Vec&) { return 0.0; }), 0.0);
  EXPECT_EQ(norm_integral(V, *bump_field(make_vec({5, 0, 0}), 1.0, make_vec({0, 0, 1})), *E3()), 0.0);
}

TEST(Flow, MeshIdentityAndTranslation) {
  const mesh::SimplicialSurface s = tilted_disk();
  const auto zero = flow_mesh(s, *field("0, 0, 0"), 1.0, 10);
  for (std::size_t v = 0; v < s.vertices.size(); ++v) EXPECT_EQ(zero.vertices[v], s.vertices[v]);
  const auto moved = flow_mesh(s, *field("0.5, -1, 2"), 1.0, 3);
  for (std::size_t v = 0; v < s.vertices.size(); ++v)
    EXPECT_LE((moved.vertices[v] - s.vertices[v] - make_vec({0.5, -1, 2})).norm(), 1e-14);
  const geom::Box chart = geom::Box::cube(3, 1.0);
  EXPECT_THROW(flow_mesh(s, *field("3, 0, 0"), 1.0, 10, &chart), MeshError);
}

TEST(Flow, RotationMatchesClosedForm) {
  const mesh::SimplicialSurface s = mesh::circle_polygon(1.0, 12, 3);
  const auto r = flow_mesh(s, *field("-x2, x1, 0"), 0.7, 200);
  for (std::size_t v = 0; v < s.vertices.size(); ++v) {
    const Vec& x = s.vertices[v];
    const Vec expect = make_vec({std::cos(0.7) * x(0) - std::sin(0.7) * x(1), std::sin(0.7) * x(0) + std::cos(0.7) * x(1), 0});
    EXPECT_LE((r.vertices[v] - expect).norm(), 1e-10);
  }
}

TEST(Flow, FiniteDifferenceOrderEuclidean) {
  const DiscreteVarifold V = varifold_from_mesh(tilted_disk(), *E3());
  const auto C = fd_constants(V, *field("sin(x2), x1*x3 + 0.3*x2^2, cos(x1)*x3"), *E3());
  for (double c : C) EXPECT_GT(c, 0.0);
  EXPECT_LT(C[0] / C[1], 1.3);
  EXPECT_GT(C[0] / C[1], 0.77);
  EXPECT_LT(C[1] / C[2], 1.3);
  EXPECT_GT(C[1] / C[2], 0.77);
}

TEST(Flow, FiniteDifferenceOrderConformal) {
  const auto g = geom::parse_metric("conformal:0.3*x1 - 0.2*x2*x3", 3);
  const DiscreteVarifold V = varifold_from_mesh(tilted_disk(), *g);
  const auto C = fd_constants(V, *field("sin(x2), x1*x3 + 0.3*x2^2, cos(x1)*x3"), *g);
  EXPECT_LT(C[0] / C[1], 1.3);
  EXPECT_GT(C[0] / C[1], 0.77);
  EXPECT_LT(C[1] / C[2], 1.3);
  EXPECT_GT(C[1] / C[2], 0.77);
}

TEST(Flow, MeshAreaDerivativeForAffineField) {
  // An affine flow keeps simplices flat, so the mesh area is differentiable
  // exactly as the quadrature first variation predicts.
  const mesh::SimplicialSurface s = tilted_disk();
  const auto X = field("0.3*x1 - x2 + 0.1, 0.5*x3 + 0.2*x1, -0.4*x3 + x2");
  const double dv = first_variation(varifold_from_mesh(s, *E3()), *X, *E3());
  const double a0 = mesh::area(s);
  std::vector<double> C;
  for (double t : {1e-2, 1e-3, 1e-4}) C.push_back(std::abs((mesh::area(flow_mesh(s, *X, t, 4)) - a0) / t - dv) / t);
  EXPECT_LT(C[0] / C[1], 1.3);
  EXPECT_GT(C[0] / C[1], 0.77);
  EXPECT_LT(C[1] / C[2], 1.3);
  EXPECT_GT(C[1] / C[2], 0.77);
}

TEST(FirstOrderMinimizing, FlatDiskWithInteriorFields) {
  const auto domain = geom::make_ball(3, 2.0);
  const DiscreteVarifold V = disk_varifold(24);
  std::vector<NamedField> fields;
  const Vec up = make_vec({0, 0, 1});
  for (const Vec& c : {make_vec({0, 0, 0}), make_vec({0.3, -0.2, 0}), make_vec({-0.4, 0.1, 0.05})}) {
    fields.push_back({"up", bump_field(c, 0.5, up)});
    fields.push_back({"down", bump_field(c, 0.5, -up)});
  }
  const MinimizingReport r = check_first_order_minimizing(V, *domain, fields);
  EXPECT_TRUE(r.passed);
  for (const auto& f : r.fields) EXPECT_NEAR(f.first_variation, 0.0, 1e-14);
}

TEST(FirstOrderMinimizing, FarFieldGivesZero) {
  const auto domain = geom::make_ball(3, 10.0);
  const MinimizingReport r =
      check_first_order_minimizing(disk_varifold(8), *domain, {{"far", bump_field(make_vec({4, 0, 0}), 1.0, make_vec({1, 1, 0}))}});
  EXPECT_EQ(r.fields[0].first_variation, 0.0);
  EXPECT_TRUE(r.passed);
}

TEST(FirstOrderMinimizing, DiameterChordIsNotMinimizing) {
  // The chord of the unit disk shortens when its endpoints move inward.
  const auto domain = geom::make_ball(2, 1.0);
  const DiscreteVarifold V = varifold_from_mesh(mesh::segment(make_vec({-1, 0}), make_vec({1, 0}), 40), *geom::euclidean(2));
  const auto inward = field("-x1, -x2", 2);
  const MinimizingReport r = check_first_order_minimizing(V, *domain, {{"inward", inward}});
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.fields[0].first_variation, -2.0, 1e-12);
}

TEST(FirstOrderMinimizing, OutwardFieldIsRejected) {
  const auto domain = geom::make_ball(2, 1.0);
  const DiscreteVarifold V = varifold_from_mesh(mesh::segment(make_vec({-1, 0}), make_vec({1, 0}), 40), *geom::euclidean(2));
  EXPECT_THROW(check_first_order_minimizing(V, *domain, {{"inward", field("-x1, -x2", 2)}, {"outward", field("x1, x2", 2)}}),
               AdmissibilityError);
}

TEST(BoundedMc, ZeroBoundIsFirstVariation) {
  const DiscreteVarifold V = varifold_from_mesh(tilted_disk(), *E3());
  const auto X = field("sin(x2), x1*x3, x1^2");
  const BoundedMcReport r = check_bounded_mc(V, *X, 0.0, *E3());
  EXPECT_EQ(r.quantity, first_variation(V, *X, *E3()));
  EXPECT_THROW(check_bounded_mc(V, *X, -1.0, *E3()), Error);
}

TEST(BoundedMc, SphereOfRadiusTwoOverHIsBorderline) {
  // The round sphere of radius 2/h has |H| = h; for the unit inward normal
  // field deltaV(X) = -(2/R) area, which exactly cancels h int |X|.
  const double h = 1.0;
  const DiscreteVarifold V = varifold_from_mesh(mesh::icosphere(2.0 / h, 4), *E3());
  const auto inward = field("-x1/sqrt(x1^2+x2^2+x3^2), -x2/sqrt(x1^2+x2^2+x3^2), -x3/sqrt(x1^2+x2^2+x3^2)");
  const BoundedMcReport r = check_bounded_mc(V, *inward, h, *E3());
  EXPECT_NEAR(r.first_variation, -h * V.total_weight(), 1e-3 * V.total_weight());
  EXPECT_NEAR(r.quantity, 0.0, 1e-3 * V.total_weight());
  // The flow oracle agrees: area of the sphere shrinking at unit speed.
  const double t = 1e-4;
  const double fd = (flow_varifold(V, *inward, *E3(), t, 2).total_weight() - V.total_weight()) / t;
  EXPECT_NEAR(fd, r.first_variation, 1e-3 * V.total_weight());
  const BoundedMcReport tight = check_bounded_mc(V, *inward, 0.9 * h, *E3());
  EXPECT_FALSE(tight.passed);
}

TEST(MeanCurvature, FlatDiskInterior) {
  const mesh::SimplicialSurface d = mesh::disk(1.0, 10);
  const MeanCurvature mc = mesh_mean_curvature(d, *E3());
  for (std::size_t v = 0; v < d.vertices.size(); ++v)
    if (!mc.boundary[v]) EXPECT_LE(mc.H[v].norm(), 1e-8 * d.scale());
}

TEST(MeanCurvature, SphereRefinement) {
  double previous = 1.0;
  for (int level = 2; level <= 4; ++level) {
    const mesh::SimplicialSurface s = mesh::icosphere(1.0, level);
    const MeanCurvature mc = mesh_mean_curvature(s, *E3());
    double worst = 0.0;
    for (std::size_t v = 0; v < s.vertices.size(); ++v) {
      worst = std::max(worst, std::abs(mc.H[v].norm() - 2.0) / 2.0);
      EXPECT_LT(mc.H[v].dot(s.vertices[v]), 0.0);  // points to the center
    }
    EXPECT_LT(worst, previous);
    previous = worst;
    if (level == 4) EXPECT_LE(worst, 0.05);
  }
}

TEST(MeanCurvature, CylinderRefinement) {
  double previous = 1.0;
  for (int k : {24, 48, 96}) {
    const mesh::SimplicialSurface c = mesh::cylinder(1.0, 2.0, k, k / 3);
    const MeanCurvature mc = mesh_mean_curvature(c, *E3());
    double worst = 0.0;
    for (std::size_t v = 0; v < c.vertices.size(); ++v)
      if (!mc.boundary[v]) worst = std::max(worst, std::abs(mc.H[v].norm() - 1.0));
    EXPECT_LT(worst, previous);
    previous = worst;
  }
  EXPECT_LE(previous, 0.05);
}

TEST(MeanCurvature, RequiresEuclideanAndManifold) {
  EXPECT_THROW(mesh_mean_curvature(mesh::disk(1.0, 2), *geom::parse_metric("conformal:x1", 3)), Error);
  mesh::SimplicialSurface s = mesh::unit_square();
  s.vertices.push_back(make_vec({0.5, 0.5, 1}));
  s.add_simplex({0, 2, 4});
  EXPECT_THROW(mesh_mean_curvature(s, *E3()), MeshError);
}

TEST(MeanCurvature, TwoPartInterpretation) {
  // A sphere of radius 2 has |H| = 1 away from any boundary.
  const auto big = geom::make_ball(3, 10.0);
  EXPECT_TRUE(mean_curvature_interpretation(mesh::icosphere(2.0, 4), *big, 1.05, 0.0).passed);
  EXPECT_FALSE(mean_curvature_interpretation(mesh::icosphere(2.0, 4), *big, 0.9, 0.0).passed);
  // The unit sphere as the boundary of the exterior domain: H points out of
  // N, so apart from discretization error it is entirely the allowed normal
  // part.
  const auto exterior = geom::make_levelset(3, "x1^2 + x2^2 + x3^2 - 1", nullptr, 3.0);
  const McInterpretation outside = mean_curvature_interpretation(mesh::icosphere(1.0, 3), *exterior, 0.05, 0.0);
  EXPECT_GT(outside.contact_vertices, 0);
  EXPECT_TRUE(outside.passed);
  // As the boundary of the ball itself, H points into N and needs h >= 2.
  const auto ball = geom::make_ball(3, 1.0);
  EXPECT_FALSE(mean_curvature_interpretation(mesh::icosphere(1.0, 3), *ball, 1.0, 0.0).passed);
  EXPECT_TRUE(mean_curvature_interpretation(mesh::icosphere(1.0, 3), *ball, 2.1, 0.0).passed);
}

TEST(Decompose, BoundaryCopiesPlusInteriorDisk) {
  const mesh::SimplicialSurface boundary = mesh::icosphere(1.0, 2);
  const mesh::SimplicialSurface inner = mesh::disk(make_vec({0, 0, 0.2}), make_vec({1, 0, 0}), make_vec({0, 1, 0}), 0.5, 4);
  const mesh::SimplicialSurface V = mesh::merge(boundary.scaled_multiplicity(3), inner);
  const Decomposition d = decompose_integral(V, boundary);
  EXPECT_EQ(d.d, 3);
  EXPECT_EQ(d.W.simplices, boundary.simplices);
  for (double w : d.W.multiplicity) EXPECT_EQ(w, 3.0);
  EXPECT_EQ(d.Wprime.simplices, inner.simplices);
  EXPECT_EQ(d.Wprime.multiplicity, inner.multiplicity);
  EXPECT_NEAR(mesh::area(d.Wprime), mesh::area(inner), 1e-15);
}

TEST(Decompose, SplitCopiesAndExtraCoverage) {
  const mesh::SimplicialSurface boundary = mesh::icosphere(1.0, 1);
  mesh::SimplicialSurface V = mesh::merge(boundary, boundary.scaled_multiplicity(2));
  V.multiplicity[0] = 5;  // face 0 is covered 7 times, the rest 3 times
  const Decomposition d = decompose_integral(V, boundary);
  EXPECT_EQ(d.d, 3);
  double left = 0.0;
  for (std::size_t s = 0; s < d.Wprime.simplices.size(); ++s) {
    EXPECT_NEAR(mesh::euclidean_volume(d.Wprime, s), mesh::euclidean_volume(boundary, 0), 1e-15);
    left += d.Wprime.multiplicity[s];
  }
  EXPECT_EQ(left, 4.0);
}

TEST(Decompose, InteriorOnly) {
  const mesh::SimplicialSurface boundary = mesh::icosphere(1.0, 2);
  const mesh::SimplicialSurface inner = mesh::disk(0.5, 4);
  const Decomposition d = decompose_integral(inner, boundary);
  EXPECT_EQ(d.d, 0);
  EXPECT_TRUE(d.W.simplices.empty());
  EXPECT_EQ(d.Wprime.simplices.size(), inner.simplices.size());
}

TEST(Decompose, NonIntegralPlanesRejected) {
  // Planes x3 = 2^-i carrying weight 2^-i accumulate on the boundary plane.
  const mesh::SimplicialSurface boundary = mesh::grid_patch(make_vec({-1, -1, 0}), make_vec({2, 0, 0}), make_vec({0, 2, 0}), 4);
  mesh::SimplicialSurface V;
  for (int i = 1; i <= 10; ++i) {
    const double c = std::ldexp(1.0, -i);
    V = mesh::merge(V, mesh::grid_patch(make_vec({-1, -1, c}), make_vec({2, 0, 0}), make_vec({0, 2, 0}), 4).scaled_multiplicity(c));
  }
  EXPECT_THROW(decompose_integral(V, boundary), HypothesisError);
}

TEST(SupportDistance, Examples) {
  const Vec p = make_vec({0.3, 0.2, 0.1});
  DiscreteVarifold V = disk_varifold(4);
  V.atoms.push_back({p, V.atoms[0].frame, 1.0, -1});
  EXPECT_EQ(support_distance(V, p, *E3()), 0.0);
  const DiscreteVarifold S = varifold_from_mesh(mesh::icosphere(1.0, 4), *E3());
  const double d = support_distance(S, Vec::Zero(3), *E3());
  EXPECT_LE(d, 1.0);
  EXPECT_GE(d, 0.995);
  EXPECT_THROW(support_distance(DiscreteVarifold{}, p, *E3()), Error);
}

TEST(SupportDistance, ScaledAndConformalMetrics) {
  const DiscreteVarifold S = varifold_from_mesh(mesh::icosphere(1.0, 3), *E3());
  const auto scaled = geom::parse_metric("conformal:0.5", 3);
  EXPECT_NEAR(support_distance(S, Vec::Zero(3), *scaled), std::exp(0.5) * support_distance(S, Vec::Zero(3), *E3()), 1e-12);
  // Along a radial segment the length is the integral of e^f.
  const auto conformal = geom::parse_metric("conformal:0.1*(x1^2+x2^2+x3^2)", 3);
  const double r = support_distance(S, Vec::Zero(3), *E3());
  const double expect = [&] {
    // integral_0^r e^{0.1 s^2} ds by Simpson's rule
    const int k = 2000;
    double acc = 0.0;
    for (int i = 0; i <= k; ++i) {
      const double s = r * i / k;
      acc += (i == 0 || i == k ? 1 : (i % 2 ? 4 : 2)) * std::exp(0.1 * s * s);
    }
    return acc * r / (3.0 * k);
  }();
  EXPECT_NEAR(support_distance(S, Vec::Zero(3), *conformal), expect, 1e-10);
}
