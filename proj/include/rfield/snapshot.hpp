#pragma once

#include "rfield/world_map.hpp"

#include <cstring>
#include <fstream>
#include <string>

namespace rfield {

// Map snapshot, little-endian binary:
//   magic "RFMAP1\0\0"
//   bounds (6 f64), voxel_size, cell_size (f64), max_range (f64)
//   lattice N (u32), voxel record count (u64)
//   per voxel: index (3 i32), mask words (ceil(N/64) u64), n (u64),
//              mean (3 f64), m2 (6 f64), rho_max (f64)
//   occupancy: run-length pairs (count u32, state u8) covering the grid

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("snapshot: truncated file");
}

inline constexpr char kMagic[8] = {'R', 'F', 'M', 'A', 'P', '1', 0, 0};

}  // namespace detail

/// Fixed per-voxel record size for a given lattice size; independent of the
/// observation count.
inline size_t voxel_record_size(uint32_t n_bins) {
  size_t mask_words = (n_bins + 63) / 64;
  return 3 * sizeof(int32_t) + mask_words * sizeof(uint64_t) + sizeof(uint64_t) +
         10 * sizeof(double);
}

inline void save_snapshot(const WorldMap& map, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("snapshot: cannot open " + path + " for writing");
  os.write(detail::kMagic, sizeof(detail::kMagic));
  const Bounds& b = map.bounds();
  for (double v : {b.min.x(), b.min.y(), b.min.z(), b.max.x(), b.max.y(), b.max.z()})
    detail::write_pod(os, v);
  detail::write_pod(os, map.voxel_size());
  detail::write_pod(os, map.occupancy().cell_size());
  detail::write_pod(os, map.max_range());
  uint32_t n_bins = static_cast<uint32_t>(map.lattice().n_bins);
  detail::write_pod(os, n_bins);
  detail::write_pod(os, static_cast<uint64_t>(map.stats().size()));
  // deterministic record order
  std::vector<GridIndex> ids;
  ids.reserve(map.stats().size());
  for (const auto& [id, _] : map.stats()) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const GridIndex& id : ids) {
    const VoxelStats& s = map.stats().at(id);
    detail::write_pod(os, id.x);
    detail::write_pod(os, id.y);
    detail::write_pod(os, id.z);
    detail::write_pod(os, s.mask.word0);
    for (uint64_t w : s.mask.extra) detail::write_pod(os, w);
    detail::write_pod(os, s.n);
    for (int i = 0; i < 3; ++i) detail::write_pod(os, s.mean[i]);
    for (double v : s.m2) detail::write_pod(os, v);
    detail::write_pod(os, s.rho_max);
  }
  const auto& cells = map.occupancy().raw();
  size_t i = 0;
  while (i < cells.size()) {
    size_t j = i;
    while (j < cells.size() && cells[j] == cells[i] && j - i < 0xffffffffull) ++j;
    detail::write_pod(os, static_cast<uint32_t>(j - i));
    detail::write_pod(os, static_cast<uint8_t>(cells[i]));
    i = j;
  }
  if (!os) throw std::runtime_error("snapshot: write failed for " + path);
}

/// Load a snapshot. The caller supplies the lattice, which must match the
/// recorded bin count (lattices are rebuilt deterministically, not stored).
inline WorldMap load_snapshot(const std::string& path, const Lattice& lattice) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("snapshot: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, detail::kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("snapshot: bad magic in " + path);
  }
  Bounds b;
  for (double* v : {&b.min.x(), &b.min.y(), &b.min.z(), &b.max.x(), &b.max.y(),
                    &b.max.z()})
    detail::read_pod(is, *v);
  double voxel_size, cell_size, max_range;
  detail::read_pod(is, voxel_size);
  detail::read_pod(is, cell_size);
  detail::read_pod(is, max_range);
  uint32_t n_bins;
  detail::read_pod(is, n_bins);
  if (static_cast<int>(n_bins) != lattice.n_bins) {
    throw std::runtime_error("snapshot: lattice size mismatch (file " +
                             std::to_string(n_bins) + ", provided " +
                             std::to_string(lattice.n_bins) + ")");
  }
  uint64_t count;
  detail::read_pod(is, count);
  WorldMap map(b, voxel_size, cell_size, lattice, max_range);
  size_t mask_words = (n_bins + 63) / 64;
  for (uint64_t r = 0; r < count; ++r) {
    GridIndex id;
    detail::read_pod(is, id.x);
    detail::read_pod(is, id.y);
    detail::read_pod(is, id.z);
    VoxelStats s(n_bins);
    detail::read_pod(is, s.mask.word0);
    for (size_t w = 1; w < mask_words; ++w) detail::read_pod(is, s.mask.extra[w - 1]);
    detail::read_pod(is, s.n);
    for (int i = 0; i < 3; ++i) detail::read_pod(is, s.mean[i]);
    for (double& v : s.m2) detail::read_pod(is, v);
    detail::read_pod(is, s.rho_max);
    map.stats().emplace(id, std::move(s));
  }
  auto& cells = map.occupancy().raw();
  size_t i = 0;
  while (i < cells.size()) {
    uint32_t run;
    uint8_t state;
    detail::read_pod(is, run);
    detail::read_pod(is, state);
    if (i + run > cells.size()) throw std::runtime_error("snapshot: occupancy overrun");
    std::fill_n(cells.begin() + i, run, static_cast<CellState>(state));
    i += run;
  }
  return map;
}

}  // namespace rfield
