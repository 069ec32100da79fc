#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lifegym {

/// n x 1 x h x w binary cell states on a torus.
///
/// Each row is packed into ceil(w/64) words, column c at bit c%64 of word
/// c/64. Bits past column w-1 in the last word are always zero.
class GridBatch {
 public:
  using Word = std::uint64_t;
  static constexpr int kWordBits = 64;

  GridBatch() = default;
  /// Throws ShapeMismatch unless n >= 1, h >= 3, w >= 3.
  GridBatch(int n, int h, int w);

  int batch() const { return n_; }
  int height() const { return h_; }
  int width() const { return w_; }
  int words_per_row() const { return words_; }

  bool get(int b, int r, int c) const {
    return (data_[index(b, r) + c / kWordBits] >> (c % kWordBits)) & 1u;
  }
  void set(int b, int r, int c, bool alive) {
    Word& word = data_[index(b, r) + c / kWordBits];
    const Word bit = Word{1} << (c % kWordBits);
    word = alive ? (word | bit) : (word & ~bit);
  }
  void toggle(int b, int r, int c) { data_[index(b, r) + c / kWordBits] ^= Word{1} << (c % kWordBits); }

  std::span<Word> row(int b, int r) { return {data_.data() + index(b, r), static_cast<std::size_t>(words_)}; }
  std::span<const Word> row(int b, int r) const {
    return {data_.data() + index(b, r), static_cast<std::size_t>(words_)};
  }
  std::span<Word> instance(int b) { return {data_.data() + index(b, 0), instance_words()}; }
  std::span<const Word> instance(int b) const { return {data_.data() + index(b, 0), instance_words()}; }
  std::span<Word> words() { return data_; }
  std::span<const Word> words() const { return data_; }

  /// Mask selecting the valid bits of the last word in a row.
  Word tail_mask() const { return tail_mask_; }

  void clear();
  void clear(int b);
  std::size_t live_count(int b) const;
  std::size_t live_count() const;

  /// Cyclic translation of every instance by (dr, dc).
  GridBatch shifted(int dr, int dc) const;

  /// Row-major 0/1 bytes of one instance.
  std::vector<std::uint8_t> to_bytes(int b) const;
  void from_bytes(int b, std::span<const std::uint8_t> cells);

  void swap(GridBatch& other) noexcept;
  bool operator==(const GridBatch&) const = default;

 private:
  std::size_t instance_words() const { return static_cast<std::size_t>(h_) * words_; }
  std::size_t index(int b, int r) const {
    return (static_cast<std::size_t>(b) * h_ + r) * words_;
  }

  int n_ = 0;
  int h_ = 0;
  int w_ = 0;
  int words_ = 0;
  Word tail_mask_ = 0;
  std::vector<Word> data_;
};

}  // namespace lifegym
