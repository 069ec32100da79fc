#include "lifegym/engine.hpp"

#include <chrono>
#include <random>

#include "lifegym/errors.hpp"

namespace lifegym::engine {

namespace {

using Word = GridBatch::Word;

// Below this many words the OpenMP fork/join costs more than the update.
constexpr std::size_t kParallelWords = 1u << 14;

// Four bit planes holding the 0..8 neighbour count of 64 cells.
struct Count {
  Word b0, b1, b2, b3;
};

inline Count add8(Word a, Word b, Word c, Word d, Word e, Word f, Word g, Word h) {
  const Word s1 = a ^ b ^ c;
  const Word c1 = (a & b) | (c & (a ^ b));
  const Word s2 = f ^ g ^ h;
  const Word c2 = (f & g) | (h & (f ^ g));
  const Word s3 = d ^ e;
  const Word c3 = d & e;
  const Word b0 = s1 ^ s2 ^ s3;
  const Word t = (s1 & s2) | (s3 & (s1 ^ s2));
  const Word x = c1 ^ c2 ^ c3;
  const Word y = (c1 & c2) | (c3 & (c1 ^ c2));
  const Word z = x & t;
  return {b0, x ^ t, y ^ z, y & z};
}

inline Word equals(const Count& n, int k) {
  return ((k & 1) ? n.b0 : ~n.b0) & ((k & 2) ? n.b1 : ~n.b1) & ((k & 4) ? n.b2 : ~n.b2) &
         ((k & 8) ? n.b3 : ~n.b3);
}

inline Word matches(const Count& n, std::uint16_t mask) {
  Word out = 0;
  for (int k = 0; k <= RuleSet::kMaxNeighbors; ++k) {
    if ((mask >> k) & 1u) out |= equals(n, k);
  }
  return out;
}

// out[c] = row[(c - 1) mod w]
void west_plane(const Word* row, Word* out, int words, int width, Word tail) {
  Word carry = (row[(width - 1) / 64] >> ((width - 1) % 64)) & 1u;
  for (int i = 0; i < words; ++i) {
    out[i] = (row[i] << 1) | carry;
    carry = row[i] >> 63;
  }
  out[words - 1] &= tail;
}

// out[c] = row[(c + 1) mod w]
void east_plane(const Word* row, Word* out, int words, int width, Word tail) {
  for (int i = 0; i < words; ++i) {
    const Word next = i + 1 < words ? row[i + 1] : 0;
    out[i] = (row[i] >> 1) | (next << 63);
  }
  out[words - 1] &= tail;
  out[(width - 1) / 64] |= (row[0] & 1u) << ((width - 1) % 64);
}

}  // namespace

void Simulator::build_planes(const GridBatch& grid) {
  const int n = grid.batch();
  const int h = grid.height();
  const int words = grid.words_per_row();
  const std::size_t total = static_cast<std::size_t>(n) * h * words;
  west_.resize(total);
  east_.resize(total);
  const int rows = n * h;
  const bool parallel = exec_ == Exec::openmp && total >= kParallelWords;
  const Word* src = grid.words().data();
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < rows; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * words;
    west_plane(src + off, west_.data() + off, words, grid.width(), grid.tail_mask());
    east_plane(src + off, east_.data() + off, words, grid.width(), grid.tail_mask());
  }
}

void Simulator::advance(GridBatch& grid, const RuleSet& rule, int steps) {
  const int n = grid.batch();
  const int h = grid.height();
  const int words = grid.words_per_row();
  const Word tail = grid.tail_mask();
  const std::uint16_t birth = rule.birth_mask();
  const std::uint16_t survival = rule.survival_mask();
  if (next_.batch() != n || next_.height() != h || next_.width() != grid.width()) {
    next_ = GridBatch(n, h, grid.width());
  }
  const int rows = n * h;
  const bool parallel =
      exec_ == Exec::openmp && static_cast<std::size_t>(rows) * words >= kParallelWords;

  for (int s = 0; s < steps; ++s) {
    build_planes(grid);
    const Word* cur = grid.words().data();
    Word* out = next_.words().data();
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < rows; ++i) {
      const int b = i / h;
      const int r = i % h;
      const std::size_t base = static_cast<std::size_t>(b) * h * words;
      const std::size_t up = base + static_cast<std::size_t>((r + h - 1) % h) * words;
      const std::size_t mid = base + static_cast<std::size_t>(r) * words;
      const std::size_t down = base + static_cast<std::size_t>((r + 1) % h) * words;
      for (int k = 0; k < words; ++k) {
        const Count count = add8(west_[up + k], cur[up + k], east_[up + k], west_[mid + k],
                                 east_[mid + k], west_[down + k], cur[down + k], east_[down + k]);
        const Word alive = cur[mid + k];
        Word next = (~alive & matches(count, birth)) | (alive & matches(count, survival));
        if (k == words - 1) next &= tail;
        out[mid + k] = next;
      }
    }
    grid.swap(next_);
  }
}

std::vector<std::uint8_t> Simulator::moore_sums(const GridBatch& grid) {
  const int n = grid.batch();
  const int h = grid.height();
  const int w = grid.width();
  const int words = grid.words_per_row();
  build_planes(grid);
  const Word* cur = grid.words().data();
  std::vector<std::uint8_t> sums(static_cast<std::size_t>(n) * h * w);
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * h * words;
    for (int r = 0; r < h; ++r) {
      const std::size_t up = base + static_cast<std::size_t>((r + h - 1) % h) * words;
      const std::size_t mid = base + static_cast<std::size_t>(r) * words;
      const std::size_t down = base + static_cast<std::size_t>((r + 1) % h) * words;
      for (int k = 0; k < words; ++k) {
        const Count count = add8(west_[up + k], cur[up + k], east_[up + k], west_[mid + k],
                                 east_[mid + k], west_[down + k], cur[down + k], east_[down + k]);
        for (int bit = 0; bit < 64 && k * 64 + bit < w; ++bit) {
          const int v = static_cast<int>(((count.b0 >> bit) & 1u) | (((count.b1 >> bit) & 1u) << 1) |
                                         (((count.b2 >> bit) & 1u) << 2) |
                                         (((count.b3 >> bit) & 1u) << 3));
          sums[(static_cast<std::size_t>(b) * h + r) * w + k * 64 + bit] = static_cast<std::uint8_t>(v);
        }
      }
    }
  }
  return sums;
}

std::vector<std::uint8_t> moore_sums(const GridBatch& grid) { return Simulator().moore_sums(grid); }

GridBatch step(GridBatch grid, const RuleSet& rule, int steps) {
  Simulator sim;
  sim.advance(grid, rule, steps);
  return grid;
}

BenchResult benchmark(int height, int width, const RuleSet& rule, double seconds, int batch, Exec exec,
                      std::uint64_t seed) {
  if (!(seconds > 0.0)) throw UsageError("benchmark duration must be positive");
  GridBatch grid(batch, height, width);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (int b = 0; b < batch; ++b) {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) grid.set(b, r, c, coin(rng));
    }
  }

  Simulator sim(exec);
  sim.advance(grid, rule, 1);  // warm the scratch buffers

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::uint64_t steps = 0;
  int chunk = 16;
  double elapsed = 0.0;
  do {
    sim.advance(grid, rule, chunk);
    steps += static_cast<std::uint64_t>(chunk);
    elapsed = std::chrono::duration<double>(clock::now() - start).count();
    if (chunk < 4096) chunk *= 2;
  } while (elapsed < seconds);

  BenchResult result;
  result.height = height;
  result.width = width;
  result.batch = batch;
  result.updates = steps * static_cast<std::uint64_t>(batch);
  result.seconds = elapsed;
  result.updates_per_second = static_cast<double>(result.updates) / elapsed;
  result.cell_updates_per_second = result.updates_per_second * height * width;
  return result;
}

}  // namespace lifegym::engine

namespace lifegym::reference {

std::vector<std::uint8_t> moore_sums(const GridBatch& grid) {
  const int n = grid.batch();
  const int h = grid.height();
  const int w = grid.width();
  std::vector<std::uint8_t> sums(static_cast<std::size_t>(n) * h * w);
  for (int b = 0; b < n; ++b) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        int total = 0;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            total += grid.get(b, (r + dr + h) % h, (c + dc + w) % w) ? 1 : 0;
          }
        }
        sums[(static_cast<std::size_t>(b) * h + r) * w + c] = static_cast<std::uint8_t>(total);
      }
    }
  }
  return sums;
}

GridBatch step(const GridBatch& grid, const RuleSet& rule, int steps) {
  GridBatch cur = grid;
  const int n = grid.batch();
  const int h = grid.height();
  const int w = grid.width();
  for (int s = 0; s < steps; ++s) {
    const auto sums = moore_sums(cur);
    GridBatch next(n, h, w);
    for (int b = 0; b < n; ++b) {
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          const int k = sums[(static_cast<std::size_t>(b) * h + r) * w + c];
          const bool alive = cur.get(b, r, c);
          next.set(b, r, c, alive ? rule.survives_on(k) : rule.births_on(k));
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace lifegym::reference
