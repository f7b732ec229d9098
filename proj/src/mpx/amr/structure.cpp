// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/amr/structure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mpx/common/error.hpp"

namespace mpx::amr {

std::vector<std::pair<long, long>> granularity_partition(long lo, long hi, int g) {
  if (g < 1) raise(ErrorCode::invalid_argument, "grain must be >= 1");
  std::vector<std::pair<long, long>> out;
  for (long a = lo; a < hi; a += g) out.emplace_back(a, std::min<long>(a + g, hi));
  return out;
}

int Structure::patch_at(int k, long i) const noexcept {
  if (k < 0 || k >= depth()) return -1;
  const auto& ps = levels[k].patches;
  auto it = std::upper_bound(ps.begin(), ps.end(), i, [](long v, const Patch& p) { return v < p.lo; });
  if (it == ps.begin()) return -1;
  --it;
  return i < it->hi ? static_cast<int>(it - ps.begin()) : -1;
}

int Structure::block_at(int k, long i) const noexcept {
  int p = patch_at(k, i);
  if (p < 0) return -1;
  const Patch& pa = levels[k].patches[p];
  return pa.first_block + static_cast<int>((i - pa.lo) / grain);
}

bool Structure::covered(int k, long i) const noexcept { return patch_at(k + 1, 2 * i) >= 0; }

int Structure::taper_patch(int k, long i, bool& left) const noexcept {
  if (k <= 0 || k >= depth()) return -1;
  const auto& ps = levels[k].patches;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    if (i < ps[p].lo && i >= ps[p].lo - taper_width) {
      left = true;
      return static_cast<int>(p);
    }
    if (i >= ps[p].hi && i < ps[p].hi + taper_width) {
      left = false;
      return static_cast<int>(p);
    }
  }
  return -1;
}

std::size_t Structure::block_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.blocks.size();
  return n;
}

void Structure::check_nesting() const {
  auto fail = [&](int k, const Patch& p, const char* why) {
    raise(ErrorCode::invariant_violation, "epoch " + std::to_string(epoch) + " level " + std::to_string(k) +
                                              " patch [" + std::to_string(p.lo) + "," + std::to_string(p.hi) +
                                              "): " + why);
  };
  if (levels.empty() || levels[0].patches.size() != 1 || levels[0].patches[0].lo != 0 ||
      levels[0].patches[0].hi != levels[0].npoints)
    raise(ErrorCode::invariant_violation, "base level must cover the whole domain");
  for (int k = 1; k < depth(); ++k) {
    const auto& ps = levels[k].patches;
    if (ps.empty()) fail(k, Patch{}, "empty level");
    for (std::size_t j = 0; j < ps.size(); ++j) {
      const Patch& p = ps[j];
      if (p.lo % 2 || p.hi % 2 || p.hi <= p.lo) fail(k, p, "not aligned with the parent grid");
      if (j > 0 && p.lo - ps[j - 1].hi < 2 * taper_width) fail(k, p, "tapers of neighbouring patches overlap");
      const long a = p.lo / 2, b = p.hi / 2;
      int parent = patch_at(k - 1, a);
      if (parent < 0 || patch_at(k - 1, b - 1) != parent) fail(k, p, "not inside a single parent patch");
      const Patch& q = levels[k - 1].patches[parent];
      const bool origin = p.lo == 0;
      if (!origin && (a - q.lo < nest_margin)) fail(k, p, "too close to parent's left edge");
      if (q.hi - b < nest_margin) fail(k, p, "too close to parent's right edge");
    }
  }
}

Blob Structure::encode() const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(epoch));
  w.u32(static_cast<std::uint32_t>(n_begin));
  w.u32(static_cast<std::uint32_t>(n_end));
  w.u32(static_cast<std::uint32_t>(grain));
  w.u32(static_cast<std::uint32_t>(depth()));
  for (const auto& l : levels) {
    w.u64(static_cast<std::uint64_t>(l.npoints));
    w.u32(static_cast<std::uint32_t>(l.patches.size()));
    for (const auto& p : l.patches) {
      w.u64(static_cast<std::uint64_t>(p.lo));
      w.u64(static_cast<std::uint64_t>(p.hi));
    }
  }
  return std::move(w).take();
}

namespace {

Structure layout(int epoch, int n_begin, int n_end, int grain, double dr0,
                 const std::vector<std::pair<long, std::vector<std::pair<long, long>>>>& lv) {
  Structure s;
  s.epoch = epoch;
  s.n_begin = n_begin;
  s.n_end = n_end;
  s.grain = grain;
  for (std::size_t k = 0; k < lv.size(); ++k) {
    if (lv[k].second.empty()) break;
    Level L;
    L.npoints = lv[k].first;
    L.dr = dr0 / static_cast<double>(1L << k);
    for (auto [lo, hi] : lv[k].second) {
      Patch p{lo, hi, static_cast<int>(L.blocks.size()), 0};
      for (auto [a, b] : granularity_partition(lo, hi, grain)) {
        Block bl;
        bl.level = static_cast<int>(k);
        bl.index = static_cast<int>(L.blocks.size());
        bl.patch = static_cast<int>(L.patches.size());
        bl.lo = a;
        bl.hi = b;
        bl.left_taper = k > 0 && a == lo && lo != 0;
        bl.right_taper = k > 0 && b == hi;
        L.blocks.push_back(bl);
      }
      p.nblocks = static_cast<int>(L.blocks.size()) - p.first_block;
      L.patches.push_back(p);
    }
    s.levels.push_back(std::move(L));
  }
  return s;
}

}  // namespace

Structure Structure::decode(ByteView b, double dr0) {
  ByteReader r(b);
  int epoch = static_cast<int>(r.u32());
  int n_begin = static_cast<int>(r.u32());
  int n_end = static_cast<int>(r.u32());
  int grain = static_cast<int>(r.u32());
  int depth = static_cast<int>(r.u32());
  std::vector<std::pair<long, std::vector<std::pair<long, long>>>> lv(depth);
  for (auto& [np, ps] : lv) {
    np = static_cast<long>(r.u64());
    std::uint32_t n = r.u32();
    for (std::uint32_t j = 0; j < n; ++j) {
      long lo = static_cast<long>(r.u64());
      long hi = static_cast<long>(r.u64());
      ps.emplace_back(lo, hi);
    }
  }
  return layout(epoch, n_begin, n_end, grain, dr0, lv);
}

std::string Structure::describe() const {
  std::ostringstream os;
  os << "epoch " << epoch << " steps [" << n_begin << "," << n_end << ")";
  for (int k = 0; k < depth(); ++k) {
    os << " L" << k << ":";
    for (const auto& p : levels[k].patches) os << "[" << p.lo << "," << p.hi << ")";
  }
  return os.str();
}

Structure assemble(const RunConfig& cfg, int epoch, int n_begin, int n_end,
                   const std::vector<std::vector<std::pair<long, long>>>& patches) {
  std::vector<std::pair<long, std::vector<std::pair<long, long>>>> lv;
  long np = cfg.base_points;
  for (std::size_t k = 0; k < patches.size(); ++k) {
    lv.emplace_back(np, patches[k]);
    np = 2 * (np - 1) + 1;
  }
  return layout(epoch, n_begin, n_end, cfg.grain, cfg.dr0(), lv);
}

Structure build_structure(const RunConfig& cfg, int epoch, int n_begin, int n_end,
                          const std::function<double(int, long)>& sample) {
  const long n0 = cfg.base_points;
  const double theta = cfg.effective_theta();
  const double horizon = cfg.regrid_interval > 0 ? 2.0 * cfg.regrid_interval : static_cast<double>(cfg.steps);
  std::vector<std::vector<std::pair<long, long>>> patches{{{0, n0}}};
  for (int k = 0; k < cfg.levels; ++k) {
    const auto& parents = patches[k];
    const long buffer = static_cast<long>(std::ceil(horizon * static_cast<double>(1L << k) * cfg.physics.cfl)) + 2;
    std::vector<std::pair<long, long>> fine;
    for (auto [plo, phi] : parents) {
      // flagged runs, grown by the buffer, clipped to the nesting margin
      std::vector<std::pair<long, long>> runs;
      long i = plo;
      while (i < phi) {
        if (!(std::fabs(sample(k, i)) > theta)) {
          ++i;
          continue;
        }
        long j = i;
        while (j < phi && std::fabs(sample(k, j)) > theta) ++j;
        long a = i - buffer, b = j + buffer;
        const long lo_lim = plo == 0 ? 0 : plo + nest_margin;
        if (plo == 0 && a < nest_margin) a = 0;
        a = std::max(a, lo_lim);
        b = std::min(b, phi - nest_margin);
        if (b - a >= 2) {
          if (!runs.empty() && a - runs.back().second < taper_width)
            runs.back().second = std::max(runs.back().second, b);
          else
            runs.emplace_back(a, b);
        }
        i = j;
      }
      for (auto [a, b] : runs) fine.emplace_back(2 * a, 2 * b);
    }
    if (fine.empty()) break;
    patches.push_back(std::move(fine));
  }
  Structure s = assemble(cfg, epoch, n_begin, n_end, patches);
  s.check_nesting();
  return s;
}

}  // namespace mpx::amr
