// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "mpx/amr/physics.hpp"

using namespace mpx;
using namespace mpx::amr;

TEST_CASE("initial data") {
  PhysicsConfig ph;
  ph.amplitude = 1.0;
  Point peak = initial_point(ph, 8.0);
  CHECK(peak.chi == 1.0);
  CHECK(peak.Phi == 0.0);
  CHECK(peak.Pi == 0.0);
  CHECK(initial_point(ph, 9.0).chi == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  Fields f = initial_data(ph, 0.015, 0, 2001);
  for (double v : f.Pi) REQUIRE(v == 0.0);
}

TEST_CASE("right-hand side on simple states") {
  PhysicsConfig ph;
  const int n = 64;
  const double dr = 0.1;
  Window w{dr, 0, n};
  Fields u(n), out(n);
  rhs(ph, w, u, 0, n, out);
  for (int i = 0; i < n; ++i) {
    REQUIRE(out.chi[i] == 0.0);
    REQUIRE(out.Phi[i] == 0.0);
    REQUIRE(out.Pi[i] == 0.0);
  }

  const double c = 0.3;
  for (int i = 0; i < n; ++i) u.chi[i] = c;
  rhs(ph, w, u, 0, n - 1, out);
  for (int i = 0; i < n - 1; ++i) {
    CHECK(out.chi[i] == 0.0);
    CHECK(out.Phi[i] == 0.0);
    CHECK(out.Pi[i] == ipow(c, 7));
    CHECK(out.Pi[i] == doctest::Approx(std::pow(c, 7)).epsilon(1e-14));
  }
}

TEST_CASE("flux term is second order on Phi = r") {
  PhysicsConfig ph;
  ph.linear = true;
  const double r = 2.0;
  double err[3];
  for (int m = 0; m < 3; ++m) {
    const double dr = 0.1 / (1 << m);
    const long i = std::lround(r / dr);
    const long n = 2 * i + 1;
    Fields u(n), out(n);
    for (long j = 0; j < n; ++j) u.Phi[j] = static_cast<double>(j) * dr;
    rhs(ph, Window{dr, 0, n}, u, static_cast<std::size_t>(i), static_cast<std::size_t>(i + 1), out);
    err[m] = std::fabs(out.Pi[i] - 3.0);
  }
  CHECK(std::log2(err[0] / err[1]) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(std::log2(err[1] / err[2]) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("scalar RK3 step matches the stability polynomial") {
  const double h = 0.1;
  const double y = rk3_scalar(1.0, h, [](double v) { return -v; });
  CHECK(std::fabs(y - (1.0 - h + h * h / 2 - h * h * h / 6)) <= 1e-12);
  CHECK(std::fabs(y - 0.9048333333333333) <= 1e-12);
  CHECK(rk3_scalar(2.5, h, [](double) { return 0.0; }) == 2.5);
}

TEST_CASE("a zero state is a fixed point of the step") {
  PhysicsConfig ph;
  const int n = 200;
  Fields u(n);
  Fields v = rk3_window(ph, Window{0.15, 0, n}, 0.0375, u, 0, n);
  for (int i = 0; i < n; ++i) REQUIRE((v.chi[i] == 0.0 && v.Phi[i] == 0.0 && v.Pi[i] == 0.0));
}

TEST_CASE("windowed steps reproduce a full-grid step") {
  PhysicsConfig ph;
  const int n = 401;
  const double dr = ph.rmax / (n - 1);
  Fields u = initial_data(ph, dr, 0, n);
  Fields full = rk3_window(ph, Window{dr, 0, n}, ph.cfl * dr, u, 0, n);
  // interior window [100, 140) needs step_radius ghosts on each side
  const long lo = 97, hi = 143;
  Fields part(hi - lo);
  for (long i = lo; i < hi; ++i) {
    part.chi[i - lo] = u.chi[i];
    part.Phi[i - lo] = u.Phi[i];
    part.Pi[i - lo] = u.Pi[i];
  }
  Fields out = rk3_window(ph, Window{dr, lo, 0}, ph.cfl * dr, part, 3, 43);
  for (long i = 100; i < 140; ++i) {
    REQUIRE(out.chi[i - 100] == full.chi[i]);
    REQUIRE(out.Pi[i - 100] == full.Pi[i]);
  }
  CHECK_THROWS_AS(rk3_window(ph, Window{dr, lo, 0}, ph.cfl * dr, part, 2, 43), Error);
}

TEST_CASE("linear evolution conserves energy before the pulse leaves") {
  PhysicsConfig ph;
  ph.linear = true;
  const int n = 1001;
  const double dr = ph.rmax / (n - 1);
  const int steps = static_cast<int>(15.0 / (ph.cfl * dr));
  const double e0 = energy(initial_data(ph, dr, 0, n), dr);
  const double e1 = energy(evolve_unigrid(ph, n, steps), dr);
  CHECK(std::fabs(e1 - e0) / e0 <= 0.01);
}

TEST_CASE("small pulses disperse and large ones blow up") {
  PhysicsConfig ph;
  ph.amplitude = 0.1;
  CHECK_FALSE(blows_up(ph, 201, 40.0));
  ph.amplitude = 0.3;
  CHECK(blows_up(ph, 201, 40.0));
  const double a = critical_amplitude(ph, 201, 40.0, 0.1, 0.3, 20);
  CHECK(a > 0.1);
  CHECK(a < 0.3);
  ph.amplitude = a * (1 + 1e-3);
  CHECK(blows_up(ph, 201, 40.0));
  ph.amplitude = a * (1 - 1e-3);
  CHECK_FALSE(blows_up(ph, 201, 40.0));
}
