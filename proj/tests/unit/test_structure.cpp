// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "mpx/amr/cluster.hpp"
#include "mpx/amr/physics.hpp"
#include "mpx/amr/structure.hpp"

using namespace mpx;
using namespace mpx::amr;

namespace {

std::function<double(int, long)> analytic(const RunConfig& cfg) {
  return [cfg](int k, long i) {
    return initial_point(cfg.physics, static_cast<double>(i) * cfg.dr0() / static_cast<double>(1L << k)).chi;
  };
}

}  // namespace

TEST_CASE("granularity partition") {
  auto one = granularity_partition(0, 100, 100);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == std::pair<long, long>{0, 100});

  auto fine = granularity_partition(0, 100, 1);
  REQUIRE(fine.size() == 100);
  for (std::size_t b = 0; b < fine.size(); ++b) {
    CHECK(fine[b].second - fine[b].first == 1);
    const int links = (b > 0 && fine[b - 1].second == fine[b].first) + (b + 1 < fine.size() && fine[b].second == fine[b + 1].first);
    CHECK(links == (b == 0 || b + 1 == fine.size() ? 1 : 2));
  }

  auto ragged = granularity_partition(0, 100, 32);
  REQUIRE(ragged.size() == 4);
  CHECK(ragged[0].second - ragged[0].first == 32);
  CHECK(ragged[1].second - ragged[1].first == 32);
  CHECK(ragged[2].second - ragged[2].first == 32);
  CHECK(ragged[3].second - ragged[3].first == 4);
  CHECK(ragged[3].second == 100);
}

TEST_CASE("an unreachable threshold leaves a unigrid") {
  RunConfig cfg;
  cfg.theta = 1e300;
  Structure s = build_structure(cfg, 0, 0, 8, analytic(cfg));
  CHECK(s.depth() == 1);
  CHECK(s.levels[0].npoints == cfg.base_points);
  CHECK(s.levels[0].patches.size() == 1);
}

TEST_CASE("default hierarchy nests and covers the pulse") {
  RunConfig cfg;
  Structure s = build_structure(cfg, 0, 0, 8, analytic(cfg));
  REQUIRE(s.depth() == 3);
  CHECK_NOTHROW(s.check_nesting());
  const long peak = std::lround(cfg.physics.r0 / cfg.dr0());
  CHECK(s.patch_at(1, 2 * peak) >= 0);
  CHECK(s.patch_at(2, 4 * peak) >= 0);
  CHECK(s.covered(0, peak));
  CHECK(s.covered(1, 2 * peak));
  CHECK_FALSE(s.covered(0, 10));

  Structure back = Structure::decode(s.encode(), cfg.dr0());
  CHECK(back.describe() == s.describe());
  CHECK(back.block_count() == s.block_count());
}

TEST_CASE("grid below the threshold keeps its hierarchy") {
  RunConfig cfg;
  cfg.levels = 1;
  cfg.physics.amplitude = 0.01;
  cfg.theta = 1.0;
  cfg.steps = 32;
  LocalCluster c(1, 1);
  RunResult r = c.run(cfg);
  REQUIRE(r.completed);
  REQUIRE(r.structures.size() == 4);
  for (const auto& s : r.structures) CHECK(s.depth() == 1);
}

TEST_CASE("refinement follows the outgoing pulse") {
  RunConfig cfg;
  cfg.levels = 1;
  cfg.steps = 100;
  cfg.grain = 16;
  cfg.theta = cfg.physics.amplitude / 2;
  LocalCluster c(1, 1);
  RunResult r = c.run(cfg);
  REQUIRE(r.completed);
  const double dr = cfg.dr0();
  for (const Structure& s : r.structures) {
    CAPTURE(s.describe());
    REQUIRE(s.depth() == 2);
    CHECK_NOTHROW(s.check_nesting());
    // pulse centre from a unigrid run to the epoch start, outgoing half
    Fields u = evolve_unigrid(cfg.physics, cfg.base_points, s.n_begin);
    const long from = std::lround(cfg.physics.r0 / dr);
    long at = from;
    for (long i = from; i < cfg.base_points; ++i)
      if (std::fabs(u.chi[i]) > std::fabs(u.chi[at])) at = i;
    CHECK(s.patch_at(1, 2 * at) >= 0);
  }
}
