// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Spherically symmetric semilinear wave equation in first-order form:
//   chi_t = Pi,  Phi_t = Pi_r,  Pi_t = r^-2 (r^2 Phi)_r + chi^p
// Centered second-order differences, Shu-Osher RK3. At r = 0 the fields are
// mirrored with their parities (chi, Pi even; Phi odd) and the flux term
// takes its limit 3 Phi_r. The outer point uses first-order outgoing
// conditions on Phi and Pi.

#pragma once

#include <cstddef>
#include <vector>

#include "mpx/amr/config.hpp"

namespace mpx::amr {

struct Fields {
  std::vector<double> chi, Phi, Pi;

  Fields() = default;
  explicit Fields(std::size_t n) : chi(n), Phi(n), Pi(n) {}
  std::size_t size() const noexcept { return chi.size(); }
  void resize(std::size_t n) {
    chi.resize(n);
    Phi.resize(n);
    Pi.resize(n);
  }
  bool finite() const noexcept;
};

// x^p by repeated multiplication (fixed arithmetic order).
double ipow(double x, int p) noexcept;

struct Point {
  double chi, Phi, Pi;
};

Point initial_point(const PhysicsConfig& ph, double r) noexcept;
Fields initial_data(const PhysicsConfig& ph, double dr, long first, std::size_t n);

// A contiguous run of level points [first, first + n) with spacing dr.
// `npoints` is the level's total point count when the run touches the outer
// boundary, else 0.
struct Window {
  double dr = 0;
  long first = 0;
  long npoints = 0;
};

// Time derivatives at local points [a, b) of `u`, which covers the window.
// Interior points read their two neighbours from `u`; the origin and outer
// points use the boundary treatment.
void rhs(const PhysicsConfig& ph, const Window& w, const Fields& u, std::size_t a, std::size_t b, Fields& out);

// One RK3 step on the window. Every stage shrinks the valid range by one
// point on each side that is not a physical boundary. Returns the new values
// on local points [keep_lo, keep_hi); throws contract_violation if the
// window is too narrow for that range.
Fields rk3_window(const PhysicsConfig& ph, const Window& w, double dt, const Fields& u, std::size_t keep_lo,
                  std::size_t keep_hi);

// Plain whole-grid RK3 loop on `n` points over [0, rmax].
Fields evolve_unigrid(const PhysicsConfig& ph, int n, int steps);

// One RK3 step of the scalar ODE y' = f(y).
double rk3_scalar(double y, double dt, double (*f)(double));

// Discrete energy sum r^2 (Pi^2 + Phi^2) dr.
double energy(const Fields& u, double dr);

// True if a unigrid run of `n` points leaves the finite regime or exceeds
// `limit` in |chi| before t_end.
bool blows_up(const PhysicsConfig& ph, int n, double t_end, double limit = 100.0);

// Bisects the amplitude between a dispersing `lo` and a blowing-up `hi`.
double critical_amplitude(PhysicsConfig ph, int n, double t_end, double lo, double hi, int iterations);

}  // namespace mpx::amr
