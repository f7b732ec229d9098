// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/amr/analysis.hpp"

#include <algorithm>
#include <map>

namespace mpx::amr {

std::vector<FrontRow> front_at(const RunResult& res, int max_levels, double t) {
  std::vector<FrontRow> rows;
  if (res.structures.empty()) return rows;
  const Structure& s0 = res.structures.front();
  std::vector<std::vector<long>> reached(static_cast<std::size_t>(max_levels) + 1);
  std::vector<double> dr(reached.size());
  long np = s0.levels[0].npoints;
  for (std::size_t k = 0; k < reached.size(); ++k) {
    reached[k].assign(static_cast<std::size_t>(np), -1);
    dr[k] = s0.levels[0].dr / static_cast<double>(1L << k);
    np = 2 * (np - 1) + 1;
  }
  std::fill(reached[0].begin(), reached[0].end(), 0);
  for (const StepRecord& r : res.log) {
    if (r.t > t) break;
    auto& v = reached[r.level];
    for (long i = r.lo; i < r.hi; ++i) v[i] = std::max(v[i], r.step);
  }
  for (std::size_t k = 0; k < reached.size(); ++k)
    for (std::size_t i = 0; i < reached[k].size(); ++i)
      if (reached[k][i] >= 0)
        rows.push_back(FrontRow{t, static_cast<double>(i) * dr[k], static_cast<int>(k),
                                reached[k][i] << (max_levels - static_cast<int>(k))});
  return rows;
}

ConeReport check_cone(const RunResult& res) {
  ConeReport rep;
  // reached[epoch][level][block]
  std::map<int, std::vector<std::vector<long>>> reached;
  auto table = [&](int e) -> std::vector<std::vector<long>>& {
    auto it = reached.find(e);
    if (it != reached.end()) return it->second;
    const Structure& s = res.structures.at(static_cast<std::size_t>(e));
    std::vector<std::vector<long>> t;
    for (int k = 0; k < s.depth(); ++k) t.emplace_back(s.levels[k].blocks.size(), s.start_step(k));
    return reached.emplace(e, std::move(t)).first->second;
  };
  auto fail = [&](const StepRecord& r, const std::string& why) {
    if (rep.violations++ == 0)
      rep.first = "epoch " + std::to_string(r.epoch) + " level " + std::to_string(r.level) + " block " +
                  std::to_string(r.block) + " step " + std::to_string(r.step) + " at t=" + std::to_string(r.t) +
                  ": " + why;
  };
  for (const StepRecord& r : res.log) {
    auto& t = table(r.epoch);
    auto& lv = t.at(r.level);
    if (r.step != lv.at(r.block) + 1) fail(r, "previous step was " + std::to_string(lv[r.block]));
    lv[r.block] = r.step;
    const Structure& s = res.structures[r.epoch];
    const Block& b = s.levels[r.level].blocks[r.block];
    const Patch& p = s.levels[r.level].patches[b.patch];
    for (int nb : {r.block - 1, r.block + 1}) {
      if (nb < p.first_block || nb >= p.first_block + p.nblocks) continue;
      ++rep.checks;
      const long d = lv[nb] - r.step;
      if (d > 1 || d < -1) fail(r, "neighbour " + std::to_string(nb) + " at step " + std::to_string(lv[nb]));
    }
  }
  return rep;
}

bool flat_at_boundaries(const RunResult& res, int max_levels, std::string* why) {
  for (std::size_t n = 0; n < res.coarse_boundaries.size(); ++n) {
    auto rows = front_at(res, max_levels, res.coarse_boundaries[n]);
    long expect = -1;
    for (const auto& r : rows) {
      if (r.level != 0) continue;
      if (expect < 0) expect = r.step_finest;
      if (r.step_finest != expect) {
        if (why)
          *why = "boundary " + std::to_string(n) + ": r=" + std::to_string(r.r) + " at " +
                 std::to_string(r.step_finest) + ", expected " + std::to_string(expect);
        return false;
      }
    }
  }
  return true;
}

bool monotone(const std::vector<std::vector<FrontRow>>& snapshots) {
  std::map<std::pair<int, double>, long> last;
  for (const auto& snap : snapshots)
    for (const auto& r : snap) {
      auto [it, fresh] = last.try_emplace({r.level, r.r}, r.step_finest);
      if (!fresh) {
        if (r.step_finest < it->second) return false;
        it->second = r.step_finest;
      }
    }
  return true;
}

Apex apex(const std::vector<FrontRow>& front, const RunResult& res, int max_levels, double slack) {
  Apex a;
  bool any = false;
  for (const auto& r : front) {
    if (r.level != 0) continue;
    if (!any || r.step_finest < a.step_finest) {
      a.r = r.r;
      a.step_finest = r.step_finest;
      any = true;
    }
  }
  if (!any || res.structures.empty()) return a;
  // the hierarchy in force at the apex's coarse step
  const long coarse = a.step_finest >> max_levels;
  const Structure* s = &res.structures.front();
  for (const auto& st : res.structures)
    if (st.n_begin <= coarse) s = &st;
  const Level& fin = s->levels.back();
  const double lo = static_cast<double>(fin.patches.front().lo) * fin.dr - slack;
  const double hi = static_cast<double>(fin.patches.back().hi - 1) * fin.dr + slack;
  a.in_finest = a.r >= lo && a.r <= hi;
  return a;
}

}  // namespace mpx::amr
