#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "usc/phantom.hpp"

using namespace usc;

namespace {

ArrayGeometry test_geometry(int m = 16) {
  return ArrayGeometry::uniform(m, 0.275e-3, 0.22e-3, 1540.0, 16e6, 3.5e6);
}

PointPhantomConfig four_reflector_config() {
  PointPhantomConfig cfg;
  cfg.speckle_count = 200;
  cfg.seed = 7;
  for (double z : {65e-3, 70e-3, 75e-3, 80e-3})
    cfg.reflectors.push_back({0.0, 0.0, z, 50.0, std::nullopt});
  return cfg;
}

}  // namespace

TEST_CASE("point phantom appends reflectors at gain x speckle std") {
  const Phantom p = make_point_phantom(four_reflector_config());
  REQUIRE(p.scatterers.size() == 204);
  REQUIRE(p.first_reflector == 200);
  for (std::size_t i = 200; i < 204; ++i) {
    CHECK(p.scatterers[i].amplitude == doctest::Approx(50.0));
    CHECK(p.scatterers[i].x_m == 0.0);
  }
  CHECK(p.scatterers[200].z_m == doctest::Approx(65e-3));
  CHECK(p.scatterers[203].z_m == doctest::Approx(80e-3));
}

TEST_CASE("point phantom with no speckle keeps only the reflectors") {
  PointPhantomConfig cfg;
  cfg.speckle_count = 0;
  cfg.reflectors.push_back({0.0, 0.0, 70e-3, 50.0, std::nullopt});
  const Phantom p = make_point_phantom(cfg);
  CHECK(p.scatterers.size() == 1);
  CHECK(p.first_reflector == 0);
}

TEST_CASE("point phantom draws are deterministic for a fixed seed") {
  PointPhantomConfig cfg = four_reflector_config();
  const Phantom a = make_point_phantom(cfg);
  const Phantom b = make_point_phantom(cfg);
  REQUIRE(a.scatterers.size() == b.scatterers.size());
  for (std::size_t i = 0; i < a.scatterers.size(); ++i) {
    CHECK(a.scatterers[i].x_m == b.scatterers[i].x_m);
    CHECK(a.scatterers[i].z_m == b.scatterers[i].z_m);
    CHECK(a.scatterers[i].amplitude == b.scatterers[i].amplitude);
  }
}

TEST_CASE("point phantom speckle stays inside the region box") {
  PointPhantomConfig cfg = four_reflector_config();
  cfg.speckle_count = 2000;
  const Phantom p = make_point_phantom(cfg);
  for (std::size_t i = 0; i < p.first_reflector; ++i) {
    CHECK(std::abs(p.scatterers[i].x_m) <= 9e-3);
    CHECK(std::abs(p.scatterers[i].y_m) <= 5e-3);
    CHECK(std::abs(p.scatterers[i].z_m - 70e-3) <= 14e-3);
  }
}

TEST_CASE("point phantom rejects an empty region box") {
  PointPhantomConfig cfg;
  cfg.speckle_count = 10;
  cfg.box.x_half_m = 0.0;
  CHECK_THROWS_AS(make_point_phantom(cfg), InvalidParameter);
}

TEST_CASE("cyst phantom carves the disc and places the reflector at 70.5mm, 7 deg") {
  CystPhantomConfig cfg;
  cfg.speckle_count = 3000;
  cfg.seed = 3;
  const Phantom p = make_cyst_phantom(cfg);

  for (std::size_t i = 0; i < p.first_reflector; ++i) {
    const double d = std::hypot(p.scatterers[i].x_m, p.scatterers[i].z_m - 70e-3);
    CHECK(d >= 8.5e-3);
  }

  REQUIRE(p.first_reflector + 1 == p.scatterers.size());
  const Scatterer& r = p.scatterers.back();
  const double range = std::hypot(r.x_m, r.z_m);
  const double angle = std::atan2(r.x_m, r.z_m) * 180.0 / std::numbers::pi;
  CHECK(range == doctest::Approx(70.527e-3).epsilon(1e-4));
  CHECK(angle == doctest::Approx(7.004).epsilon(1e-3));
  CHECK(r.amplitude == doctest::Approx(100.0));
}

TEST_CASE("cyst radius zero degenerates to speckle plus reflector") {
  CystPhantomConfig cfg;
  cfg.speckle_count = 500;
  cfg.cyst_radius_m = 0.0;
  cfg.seed = 5;
  const Phantom p = make_cyst_phantom(cfg);
  CHECK(p.scatterers.size() == 501);
}

TEST_CASE("cyst phantom rejects a reflector inside the cyst") {
  CystPhantomConfig cfg;
  cfg.reflectors = {{0.0, 0.0, 70e-3, 100.0, std::nullopt}};
  CHECK_THROWS_AS(make_cyst_phantom(cfg), InvalidParameter);
}

TEST_CASE("simulate_rx of an empty phantom is all zeros") {
  Phantom p;
  const RawFrame f = simulate_rx(p, test_geometry(), {0.0}, PulseModel{}, 512);
  for (double v : f.channels) CHECK(v == 0.0);
}

TEST_CASE("simulate_rx arrival times match the closed-form oracle") {
  const ArrayGeometry g = test_geometry(8);
  Phantom p;
  p.scatterers.push_back({0.0, 0.0, 40e-3, 1.0, std::nullopt});
  const int n = 1200;
  const RawFrame f = simulate_rx(p, g, {0.0}, PulseModel{}, n);

  const double r = 40e-3;
  for (int m = 0; m < 8; ++m) {
    const double dm = g.element_x_m[m];
    const double t = (r + std::sqrt(r * r + dm * dm)) / g.c_mps;
    const int expected = static_cast<int>(std::llround(g.fs_hz * t));

    const double* ch = f.channel(0, m);
    int peak = 0;
    for (int i = 1; i < n; ++i)
      if (std::abs(ch[i]) > std::abs(ch[peak])) peak = i;
    CHECK(std::abs(peak - expected) <= 1);
  }
}

TEST_CASE("simulate_rx is linear in scatterer amplitudes") {
  const ArrayGeometry g = test_geometry(4);
  PointPhantomConfig cfg;
  cfg.speckle_count = 50;
  cfg.box.z_center_m = 40e-3;
  cfg.box.z_half_m = 10e-3;
  cfg.seed = 9;
  Phantom p = make_point_phantom(cfg);

  const RawFrame a = simulate_rx(p, g, {0.0, 0.05}, PulseModel{}, 1024);
  for (Scatterer& s : p.scatterers) s.amplitude *= 2.0;
  const RawFrame b = simulate_rx(p, g, {0.0, 0.05}, PulseModel{}, 1024);
  for (std::size_t i = 0; i < a.channels.size(); ++i)
    CHECK(b.channels[i] == doctest::Approx(2.0 * a.channels[i]).epsilon(1e-12));
}

TEST_CASE("simulate_rx superposes phantoms additively") {
  const ArrayGeometry g = test_geometry(4);
  PointPhantomConfig ca, cb;
  ca.speckle_count = 40;
  ca.box.z_center_m = 40e-3;
  ca.box.z_half_m = 8e-3;
  ca.seed = 1;
  cb.speckle_count = 30;
  cb.box.z_center_m = 45e-3;
  cb.box.z_half_m = 8e-3;
  cb.seed = 2;
  const Phantom pa = make_point_phantom(ca);
  const Phantom pb = make_point_phantom(cb);
  Phantom both = pa;
  both.scatterers.insert(both.scatterers.end(), pb.scatterers.begin(), pb.scatterers.end());

  const RawFrame fa = simulate_rx(pa, g, {0.0}, PulseModel{}, 1024);
  const RawFrame fb = simulate_rx(pb, g, {0.0}, PulseModel{}, 1024);
  const RawFrame fc = simulate_rx(both, g, {0.0}, PulseModel{}, 1024);

  double scale = 0.0;
  for (double v : fc.channels) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < fc.channels.size(); ++i)
    CHECK(std::abs(fc.channels[i] - (fa.channels[i] + fb.channels[i])) <= 1e-12 * scale);
}

TEST_CASE("simulate_rx is mirror symmetric") {
  ArrayGeometry g = test_geometry(6);
  g.element_x_m = {-2e-3, -1e-3, 0.0, 0.5e-3, 1.5e-3, 3e-3};  // asymmetric on purpose
  PointPhantomConfig cfg;
  cfg.speckle_count = 60;
  cfg.box.z_center_m = 40e-3;
  cfg.box.z_half_m = 8e-3;
  cfg.seed = 4;
  Phantom p = make_point_phantom(cfg);

  ArrayGeometry gm = g;
  for (int m = 0; m < 6; ++m) gm.element_x_m[m] = -g.element_x_m[5 - m];
  Phantom pm = p;
  for (Scatterer& s : pm.scatterers) s.x_m = -s.x_m;

  const RawFrame f = simulate_rx(p, g, {0.08}, PulseModel{}, 1024);
  const RawFrame fm = simulate_rx(pm, gm, {-0.08}, PulseModel{}, 1024);

  double scale = 0.0;
  for (double v : f.channels) scale = std::max(scale, std::abs(v));
  for (int m = 0; m < 6; ++m) {
    const double* a = f.channel(0, m);
    const double* b = fm.channel(0, 5 - m);
    for (int i = 0; i < 1024; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12 * scale);
  }
}

TEST_CASE("off-axis strong scatterer leaks energy into side lobes") {
  const ArrayGeometry g = test_geometry(32);
  Phantom p;
  p.scatterers.push_back({std::sin(0.122) * 70e-3, 0.0, std::cos(0.122) * 70e-3, 100.0,
                          std::nullopt});
  // Line axis 3 degrees away from the scatterer direction (~7 deg).
  const double theta = 0.122 - 3.0 * std::numbers::pi / 180.0;
  const RawFrame f = simulate_rx(p, g, {theta}, PulseModel{}, 2048);
  double energy = 0.0;
  for (double v : f.channels) energy += v * v;
  CHECK(energy > 0.0);
}

TEST_CASE("simulate_rx rejects scatterers behind the array") {
  Phantom p;
  p.scatterers.push_back({0.0, 0.0, -1e-3, 1.0, std::nullopt});
  CHECK_THROWS_AS(simulate_rx(p, test_geometry(), {0.0}, PulseModel{}, 64), InvalidParameter);
}
