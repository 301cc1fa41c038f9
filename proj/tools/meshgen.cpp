// meshgen: writes generated test surfaces as SVMESH.

#include "maxprin/mesh.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

using namespace maxprin;

int main(int argc, char** argv) {
  CLI::App app{"Generate SVMESH test surfaces"};
  app.require_subcommand(1);
  std::string out;
  app.add_option("--out", out, "output path (default: standard output)");

  double radius = 1.0, height = 1.0, theta = 0.3, depth = 0.0;
  int rings = 8, level = 2, nlat = 16, nlon = 32, around = 32, along = 8, k = 64;
  std::vector<double> center{0, 0, 0};

  auto* disk = app.add_subcommand("disk", "flat disk in the x1x2-plane with 6 j vertices on ring j");
  disk->add_option("--radius", radius)->capture_default_str();
  disk->add_option("--rings", rings)->capture_default_str();
  disk->add_option("--height", depth, "x3 coordinate")->capture_default_str();

  auto* ico = app.add_subcommand("icosphere", "subdivided icosahedron projected to a sphere");
  ico->add_option("--radius", radius)->capture_default_str();
  ico->add_option("--level", level)->capture_default_str();
  ico->add_option("--center", center)->expected(3);

  auto* uv = app.add_subcommand("uvsphere", "latitude-longitude sphere");
  uv->add_option("--radius", radius)->capture_default_str();
  uv->add_option("--nlat", nlat)->capture_default_str();
  uv->add_option("--nlon", nlon)->capture_default_str();

  auto* cyl = app.add_subcommand("cylinder", "open cylinder around the x3-axis");
  cyl->add_option("--radius", radius)->capture_default_str();
  cyl->add_option("--height", height)->capture_default_str();
  cyl->add_option("--around", around)->capture_default_str();
  cyl->add_option("--along", along)->capture_default_str();

  std::vector<double> axis{0, 0, 1};
  auto* cap = app.add_subcommand("cap", "geodesic disk of angular radius theta on a sphere");
  cap->add_option("--radius", radius)->capture_default_str();
  cap->add_option("--theta", theta)->capture_default_str();
  cap->add_option("--rings", rings)->capture_default_str();
  cap->add_option("--center", center)->expected(3);
  cap->add_option("--axis", axis)->expected(3);

  auto* poly = app.add_subcommand("polygon", "closed polygon inscribed in a circle (m = 1, n = 2)");
  poly->add_option("--radius", radius)->capture_default_str();
  poly->add_option("-k,--segments", k)->capture_default_str();

  auto* square = app.add_subcommand("square", "unit square [0,1]^2 x {0} as two triangles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    mesh::SimplicialSurface s;
    if (*disk) {
      s = mesh::disk(make_vec({0, 0, depth}), make_vec({1, 0, 0}), make_vec({0, 1, 0}), radius, rings);
    } else if (*ico) {
      s = mesh::icosphere(radius, level, to_vec(center));
    } else if (*uv) {
      s = mesh::uv_sphere(radius, nlat, nlon);
    } else if (*cyl) {
      s = mesh::cylinder(radius, height, around, along);
    } else if (*cap) {
      s = mesh::sphere_cap(to_vec(center), radius, to_vec(axis).normalized(), theta, rings);
    } else if (*poly) {
      s = mesh::circle_polygon(radius, k);
    } else if (*square) {
      s = mesh::unit_square();
    }
    mesh::validate(s);
    if (out.empty()) {
      mesh::write_svmesh(std::cout, s);
    } else {
      mesh::write_svmesh_file(out, s);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
