// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "mpx/common/error.hpp"
#include "mpx/harness/harness.hpp"

using namespace mpx;
using namespace mpx::harness;

TEST_CASE("options") {
  Options o = Options::parse("repeats=3\n# note\nwork_us = 0,1.5\ngrains=1,2,4\n");
  CHECK(o.get_int("repeats", 5) == 3);
  CHECK(o.get_int("missing", 5) == 5);
  CHECK(o.get("work_us", "") == "0,1.5");
  CHECK(o.get_list("grains", {}) == std::vector<long>{1, 2, 4});
  CHECK(o.get_double("x", 2.5) == 2.5);
  CHECK_THROWS_AS(Options::parse("oops\n"), Error);
  CHECK_THROWS_AS(Options::parse("repeats=x\n").get_int("repeats", 1), Error);
  CHECK_THROWS_AS(Options::parse("grains=1,,2\n").get_list("grains", {}), Error);
}

TEST_CASE("median and number format") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(fmt(0.1) == "0.1");
  CHECK(std::stod(fmt(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("sweep summary finds interior minima") {
  std::vector<SweepRow> rows;
  for (int g : {1, 2, 4, 8}) rows.push_back(SweepRow{2, g, g == 4 ? 1.0 : 2.0, {}});
  for (int g : {1, 2, 4, 8}) rows.push_back(SweepRow{4, g, 10.0 - g, {}});
  auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].argmin == 4);
  CHECK(s[0].interior);
  CHECK(s[1].argmin == 8);
  CHECK_FALSE(s[1].interior);
}

TEST_CASE("state difference") {
  std::vector<amr::StateRow> a{{0, 1, 2, 3, 0}, {1, 1, 2, 3, 0}};
  auto b = a;
  CHECK(max_state_diff(a, b) == 0);
  b[1].Pi += 1e-9;
  CHECK(max_state_diff(a, b) == doctest::Approx(1e-9));
  b[1].level = 1;
  CHECK_THROWS_AS(max_state_diff(a, b), Error);
  b.pop_back();
  CHECK_THROWS_AS(max_state_diff(a, b), Error);
}

TEST_CASE("task bench counts every task") {
  TaskBench b = bench_tasks(2, 2000, Workload::spin, 5);
  CHECK(b.tasks == 2000);
  CHECK(b.wall_s > 0);
  CHECK(b.wall_s >= 2000 * 5e-6 / 2 * 0.9);
  CHECK(std::isfinite(b.overhead_us));
  CHECK(parse_workload("wait") == Workload::wait);
  CHECK_THROWS_AS(parse_workload("sleep"), Error);
}
