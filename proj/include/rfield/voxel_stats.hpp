#pragma once

#include "rfield/core.hpp"
#include "rfield/fibsphere.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace rfield {

/// Fixed-width bitset over lattice bins. The first 64 bits live inline so a
/// 64-bin lattice (the default) needs no heap allocation per voxel.
struct BinMask {
  uint64_t word0 = 0;
  std::vector<uint64_t> extra;  // words beyond the first, only when N > 64

  void resize_for(uint32_t n_bins) {
    if (n_bins > 64) extra.assign((n_bins + 63) / 64 - 1, 0);
  }
  void set(int k) {
    if (k < 64) {
      word0 |= uint64_t{1} << k;
    } else {
      extra[static_cast<size_t>(k / 64) - 1] |= uint64_t{1} << (k % 64);
    }
  }
  bool test(int k) const {
    if (k < 64) return (word0 >> k) & 1;
    return (extra[static_cast<size_t>(k / 64) - 1] >> (k % 64)) & 1;
  }
  int count() const {
    int c = std::popcount(word0);
    for (uint64_t w : extra) c += std::popcount(w);
    return c;
  }
  bool empty() const {
    if (word0) return false;
    for (uint64_t w : extra) {
      if (w) return false;
    }
    return true;
  }
  void or_with(const BinMask& o) {
    word0 |= o.word0;
    for (size_t i = 0; i < extra.size(); ++i) extra[i] |= o.extra[i];
  }
  /// Calls fn(bin_index) for every set bit, in ascending index order.
  template <class Fn>
  void for_each_set(Fn&& fn) const {
    uint64_t w = word0;
    while (w) {
      fn(std::countr_zero(w));
      w &= w - 1;
    }
    for (size_t i = 0; i < extra.size(); ++i) {
      uint64_t e = extra[i];
      while (e) {
        fn(static_cast<int>((i + 1) * 64) + std::countr_zero(e));
        e &= e - 1;
      }
    }
  }
};

/// Constant-size online observation statistics of one primitive: visited
/// direction bins, streaming RGB moments (count, mean, scatter), and the best
/// historical resolution. State size does not depend on the number of updates.
struct VoxelStats {
  BinMask mask;
  uint64_t n = 0;
  Vec3 mean = Vec3::Zero();
  // symmetric scatter accumulator, packed xx, yy, zz, xy, xz, yz
  std::array<double, 6> m2{};
  double rho_max = 0.0;  // max over observations of 1/depth [1/m]
  uint32_t n_bins = 0;

  VoxelStats() = default;
  explicit VoxelStats(uint32_t bins) : n_bins(bins) { mask.resize_for(bins); }

  double scatter_trace() const { return m2[0] + m2[1] + m2[2]; }

  /// One streaming update. Returns true when the RGB sample had to be clamped
  /// into [0,1]. Non-finite inputs are rejected with the state unchanged.
  bool update(const Lattice& lattice, const Vec3& dir, const Vec3& rgb, double depth) {
    if (!is_finite(rgb) || !std::isfinite(depth) || depth <= 0.0) {
      throw std::invalid_argument("VoxelStats::update: non-finite rgb or depth");
    }
    Vec3 z = rgb.cwiseMax(0.0).cwiseMin(1.0);
    bool clamped = z != rgb;
    mask.set(lattice.nearest_bin(dir));
    n += 1;
    Vec3 d_old = z - mean;
    mean += d_old / static_cast<double>(n);
    Vec3 d_new = z - mean;
    m2[0] += d_new.x() * d_old.x();
    m2[1] += d_new.y() * d_old.y();
    m2[2] += d_new.z() * d_old.z();
    m2[3] += 0.5 * (d_new.x() * d_old.y() + d_new.y() * d_old.x());
    m2[4] += 0.5 * (d_new.x() * d_old.z() + d_new.z() * d_old.x());
    m2[5] += 0.5 * (d_new.y() * d_old.z() + d_new.z() * d_old.y());
    rho_max = std::max(rho_max, 1.0 / depth);
    return clamped;
  }

  /// Appearance consistency score: 1 = perfectly consistent, 0 = maximally
  /// view-dependent. With fewer than two samples there is no scatter
  /// evidence, so delta = 1.
  double delta() const {
    if (n < 2) return 1.0;
    double trs = scatter_trace() / static_cast<double>(n - 1);
    double raw = 1.0 - std::sqrt(2.0 / 1.5) * std::sqrt(std::max(0.0, trs));
    return std::clamp(raw, 0.0, 1.0);
  }
};

/// Combine two stat accumulators over disjoint observation streams
/// (pairwise merge of streaming moments; masks OR; best resolution wins).
inline VoxelStats merge(const VoxelStats& a, const VoxelStats& b) {
  if (a.n_bins != b.n_bins) {
    throw std::invalid_argument("merge: lattice size mismatch");
  }
  if (a.n == 0) return b;
  if (b.n == 0) return a;
  VoxelStats out(a.n_bins);
  out.mask = a.mask;
  out.mask.or_with(b.mask);
  out.n = a.n + b.n;
  double na = static_cast<double>(a.n);
  double nb = static_cast<double>(b.n);
  double nn = na + nb;
  Vec3 d = b.mean - a.mean;
  out.mean = a.mean + d * (nb / nn);
  double w = na * nb / nn;
  out.m2[0] = a.m2[0] + b.m2[0] + w * d.x() * d.x();
  out.m2[1] = a.m2[1] + b.m2[1] + w * d.y() * d.y();
  out.m2[2] = a.m2[2] + b.m2[2] + w * d.z() * d.z();
  out.m2[3] = a.m2[3] + b.m2[3] + w * d.x() * d.y();
  out.m2[4] = a.m2[4] + b.m2[4] + w * d.x() * d.z();
  out.m2[5] = a.m2[5] + b.m2[5] + w * d.y() * d.z();
  out.rho_max = std::max(a.rho_max, b.rho_max);
  return out;
}

using StatsMap = std::unordered_map<GridIndex, VoxelStats, GridIndexHash>;

}  // namespace rfield
