#pragma once

#include <cstdint>
#include <vector>

#include "lifegym/grid.hpp"
#include "lifegym/rules.hpp"

namespace lifegym::engine {

enum class Exec { serial, openmp };

/// Bit-parallel toroidal Life-like update.
///
/// Neighbour counts are formed with a carry-save adder over eight shifted
/// bit planes, so one 64-bit word advances 64 cells at once. Owns its
/// scratch buffers; reuse one instance across steps to avoid reallocation.
class Simulator {
 public:
  explicit Simulator(Exec exec = Exec::openmp) : exec_(exec) {}

  /// Applies `steps` synchronous updates in place.
  void advance(GridBatch& grid, const RuleSet& rule, int steps = 1);

  /// Per-cell toroidal Moore sums (self excluded), n*h*w bytes row-major.
  std::vector<std::uint8_t> moore_sums(const GridBatch& grid);

 private:
  void build_planes(const GridBatch& grid);

  Exec exec_;
  std::vector<GridBatch::Word> west_;
  std::vector<GridBatch::Word> east_;
  GridBatch next_;
};

std::vector<std::uint8_t> moore_sums(const GridBatch& grid);
GridBatch step(GridBatch grid, const RuleSet& rule, int steps = 1);

struct BenchResult {
  int height = 0;
  int width = 0;
  int batch = 1;
  std::uint64_t updates = 0;  // grid updates (steps x batch)
  double seconds = 0.0;
  double updates_per_second = 0.0;
  double cell_updates_per_second = 0.0;
};

/// Measures sustained grid updates per second on a random 50% soup.
/// Throws UsageError if seconds <= 0.
BenchResult benchmark(int height, int width, const RuleSet& rule, double seconds, int batch = 1,
                      Exec exec = Exec::serial, std::uint64_t seed = 1);

}  // namespace lifegym::engine

// Naive per-cell implementation. Kept as the oracle the packed kernel is
// tested and benchmarked against; never used on a hot path.
namespace lifegym::reference {

std::vector<std::uint8_t> moore_sums(const GridBatch& grid);
GridBatch step(const GridBatch& grid, const RuleSet& rule, int steps = 1);

}  // namespace lifegym::reference
