#include "lifegym/grid.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

#include "lifegym/errors.hpp"

namespace lifegym {

GridBatch::GridBatch(int n, int h, int w) : n_(n), h_(h), w_(w) {
  if (n < 1 || h < 3 || w < 3) {
    throw ShapeMismatch("grid batch requires n>=1, h>=3, w>=3 (got " + std::to_string(n) + "x" +
                        std::to_string(h) + "x" + std::to_string(w) + ")");
  }
  words_ = (w + kWordBits - 1) / kWordBits;
  const int tail_bits = w - (words_ - 1) * kWordBits;
  tail_mask_ = tail_bits == kWordBits ? ~Word{0} : ((Word{1} << tail_bits) - 1);
  data_.assign(static_cast<std::size_t>(n) * h * words_, 0);
}

void GridBatch::clear() { std::fill(data_.begin(), data_.end(), Word{0}); }

void GridBatch::clear(int b) {
  auto cells = instance(b);
  std::fill(cells.begin(), cells.end(), Word{0});
}

std::size_t GridBatch::live_count(int b) const {
  std::size_t total = 0;
  for (Word word : instance(b)) total += static_cast<std::size_t>(std::popcount(word));
  return total;
}

std::size_t GridBatch::live_count() const {
  std::size_t total = 0;
  for (Word word : data_) total += static_cast<std::size_t>(std::popcount(word));
  return total;
}

GridBatch GridBatch::shifted(int dr, int dc) const {
  GridBatch out(n_, h_, w_);
  const int sr = ((dr % h_) + h_) % h_;
  const int sc = ((dc % w_) + w_) % w_;
  for (int b = 0; b < n_; ++b) {
    for (int r = 0; r < h_; ++r) {
      for (int c = 0; c < w_; ++c) {
        if (get(b, r, c)) out.set(b, (r + sr) % h_, (c + sc) % w_, true);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> GridBatch::to_bytes(int b) const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h_) * w_);
  for (int r = 0; r < h_; ++r) {
    for (int c = 0; c < w_; ++c) out[static_cast<std::size_t>(r) * w_ + c] = get(b, r, c) ? 1 : 0;
  }
  return out;
}

void GridBatch::from_bytes(int b, std::span<const std::uint8_t> cells) {
  if (cells.size() != static_cast<std::size_t>(h_) * w_) {
    throw ShapeMismatch("from_bytes: expected " + std::to_string(h_ * w_) + " cells");
  }
  clear(b);
  for (int r = 0; r < h_; ++r) {
    for (int c = 0; c < w_; ++c) {
      if (cells[static_cast<std::size_t>(r) * w_ + c]) set(b, r, c, true);
    }
  }
}

void GridBatch::swap(GridBatch& other) noexcept {
  std::swap(n_, other.n_);
  std::swap(h_, other.h_);
  std::swap(w_, other.w_);
  std::swap(words_, other.words_);
  std::swap(tail_mask_, other.tail_mask_);
  data_.swap(other.data_);
}

}  // namespace lifegym
