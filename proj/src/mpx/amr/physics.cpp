// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/amr/physics.hpp"

#include <cmath>

#include "mpx/common/error.hpp"

namespace mpx::amr {

bool Fields::finite() const noexcept {
  for (std::size_t i = 0; i < size(); ++i)
    if (!std::isfinite(chi[i]) || !std::isfinite(Phi[i]) || !std::isfinite(Pi[i])) return false;
  return true;
}

double ipow(double x, int p) noexcept {
  double y = x;
  for (int k = 1; k < p; ++k) y *= x;
  return y;
}

Point initial_point(const PhysicsConfig& ph, double r) noexcept {
  const double d2 = ph.delta * ph.delta;
  const double x = r - ph.r0;
  const double chi = ph.amplitude * std::exp(-(x * x) / d2);
  return Point{chi, -2.0 * x / d2 * chi, 0.0};
}

Fields initial_data(const PhysicsConfig& ph, double dr, long first, std::size_t n) {
  Fields f(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point q = initial_point(ph, static_cast<double>(first + static_cast<long>(i)) * dr);
    f.chi[i] = q.chi;
    f.Phi[i] = q.Phi;
    f.Pi[i] = q.Pi;
  }
  return f;
}

void rhs(const PhysicsConfig& ph, const Window& w, const Fields& u, std::size_t a, std::size_t b, Fields& out) {
  const double dr = w.dr;
  const double inv2dr = 1.0 / (2.0 * dr);
  const long last = w.npoints - 1;
  for (std::size_t i = a; i < b; ++i) {
    const long g = w.first + static_cast<long>(i);
    const double src = ph.linear ? 0.0 : ipow(u.chi[i], ph.p);
    out.chi[i] = u.Pi[i];
    if (g == 0) {
      // mirrored neighbours: Pi_-1 = Pi_1, Phi_-1 = -Phi_1
      out.Phi[i] = (u.Pi[i + 1] - u.Pi[i + 1]) * inv2dr;
      out.Pi[i] = 3.0 * ((u.Phi[i + 1] + u.Phi[i + 1]) * inv2dr) + src;
    } else if (g == last) {
      const double r = static_cast<double>(g) * dr;
      out.Phi[i] = -(u.Phi[i] - u.Phi[i - 1]) / dr - u.Phi[i] / r;
      out.Pi[i] = -(u.Pi[i] - u.Pi[i - 1]) / dr - u.Pi[i] / r;
    } else {
      const double r = static_cast<double>(g) * dr;
      const double rp = static_cast<double>(g + 1) * dr;
      const double rm = static_cast<double>(g - 1) * dr;
      out.Phi[i] = (u.Pi[i + 1] - u.Pi[i - 1]) * inv2dr;
      out.Pi[i] = (rp * rp * u.Phi[i + 1] - rm * rm * u.Phi[i - 1]) * inv2dr / (r * r) + src;
    }
  }
}

Fields rk3_window(const PhysicsConfig& ph, const Window& w, double dt, const Fields& u, std::size_t keep_lo,
                  std::size_t keep_hi) {
  const std::size_t n = u.size();
  const bool at_origin = w.first == 0;
  const bool at_outer = w.npoints > 0 && w.first + static_cast<long>(n) == w.npoints;
  auto shrink = [&](std::size_t& a, std::size_t& b) {
    if (!at_origin || a != 0) ++a;
    if (!at_outer || b != n) --b;
  };
  std::size_t a = 0, b = n;
  shrink(a, b);
  if (a > keep_lo || b < keep_hi || a >= b) raise(ErrorCode::contract_violation, "rk3 window too narrow");

  Fields k(n), u1(n), u2(n);
  rhs(ph, w, u, a, b, k);
  for (std::size_t i = a; i < b; ++i) {
    u1.chi[i] = u.chi[i] + dt * k.chi[i];
    u1.Phi[i] = u.Phi[i] + dt * k.Phi[i];
    u1.Pi[i] = u.Pi[i] + dt * k.Pi[i];
  }
  std::size_t a2 = a, b2 = b;
  shrink(a2, b2);
  if (a2 > keep_lo || b2 < keep_hi || a2 >= b2) raise(ErrorCode::contract_violation, "rk3 window too narrow");
  rhs(ph, w, u1, a2, b2, k);
  for (std::size_t i = a2; i < b2; ++i) {
    u2.chi[i] = 0.75 * u.chi[i] + 0.25 * (u1.chi[i] + dt * k.chi[i]);
    u2.Phi[i] = 0.75 * u.Phi[i] + 0.25 * (u1.Phi[i] + dt * k.Phi[i]);
    u2.Pi[i] = 0.75 * u.Pi[i] + 0.25 * (u1.Pi[i] + dt * k.Pi[i]);
  }
  std::size_t a3 = a2, b3 = b2;
  shrink(a3, b3);
  if (a3 > keep_lo || b3 < keep_hi || a3 >= b3) raise(ErrorCode::contract_violation, "rk3 window too narrow");
  rhs(ph, w, u2, keep_lo, keep_hi, k);
  constexpr double third = 1.0 / 3.0;
  constexpr double two_thirds = 2.0 / 3.0;
  Fields out(keep_hi - keep_lo);
  for (std::size_t i = keep_lo; i < keep_hi; ++i) {
    const std::size_t j = i - keep_lo;
    out.chi[j] = third * u.chi[i] + two_thirds * (u2.chi[i] + dt * k.chi[i]);
    out.Phi[j] = third * u.Phi[i] + two_thirds * (u2.Phi[i] + dt * k.Phi[i]);
    out.Pi[j] = third * u.Pi[i] + two_thirds * (u2.Pi[i] + dt * k.Pi[i]);
  }
  return out;
}

Fields evolve_unigrid(const PhysicsConfig& ph, int n, int steps) {
  const double dr = ph.rmax / (n - 1);
  const double dt = ph.cfl * dr;
  Window w{dr, 0, n};
  Fields u = initial_data(ph, dr, 0, static_cast<std::size_t>(n));
  for (int s = 0; s < steps; ++s) u = rk3_window(ph, w, dt, u, 0, static_cast<std::size_t>(n));
  return u;
}

double rk3_scalar(double y, double dt, double (*f)(double)) {
  double y1 = y + dt * f(y);
  double y2 = 0.75 * y + 0.25 * (y1 + dt * f(y1));
  return y / 3.0 + 2.0 / 3.0 * (y2 + dt * f(y2));
}

double energy(const Fields& u, double dr) {
  double e = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double r = static_cast<double>(i) * dr;
    e += r * r * (u.Pi[i] * u.Pi[i] + u.Phi[i] * u.Phi[i]) * dr;
  }
  return e;
}

bool blows_up(const PhysicsConfig& ph, int n, double t_end, double limit) {
  const double dr = ph.rmax / (n - 1);
  const double dt = ph.cfl * dr;
  Window w{dr, 0, n};
  Fields u = initial_data(ph, dr, 0, static_cast<std::size_t>(n));
  const int steps = static_cast<int>(std::ceil(t_end / dt));
  for (int s = 0; s < steps; ++s) {
    u = rk3_window(ph, w, dt, u, 0, static_cast<std::size_t>(n));
    for (double c : u.chi)
      if (!std::isfinite(c) || std::fabs(c) > limit) return true;
  }
  return false;
}

double critical_amplitude(PhysicsConfig ph, int n, double t_end, double lo, double hi, int iterations) {
  for (int it = 0; it < iterations; ++it) {
    ph.amplitude = 0.5 * (lo + hi);
    (blows_up(ph, n, t_end) ? hi : lo) = ph.amplitude;
  }
  return 0.5 * (lo + hi);
}

}  // namespace mpx::amr
