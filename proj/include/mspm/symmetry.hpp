#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mspm {

// One symmetric factor S^exponent(R^dimension) of a partially symmetric
// tensor space.
struct Block {
  int exponent;   // d_i >= 1
  int dimension;  // m_i >= 2

  friend bool operator==(const Block&, const Block&) = default;
};

// The block structure (d_1,m_1),...,(d_l,m_l). An empty block list denotes
// the order-zero (scalar) space, which arises from full contractions.
class SymmetryType {
 public:
  SymmetryType() = default;

  explicit SymmetryType(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
    for (const Block& b : blocks_) {
      if (b.exponent < 1) throw std::invalid_argument("SymmetryType: block exponent must be >= 1");
      if (b.dimension < 2) throw std::invalid_argument("SymmetryType: block dimension must be >= 2");
    }
  }

  // Parses "d1:m1,d2:m2,...".
  static SymmetryType parse(const std::string& text) {
    std::vector<Block> blocks;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("SymmetryType: expected d:m entries, got '" + item + "'");
      blocks.push_back(Block{std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
    }
    if (blocks.empty()) throw std::invalid_argument("SymmetryType: empty description");
    return SymmetryType(std::move(blocks));
  }

  int block_count() const { return static_cast<int>(blocks_.size()); }
  const Block& block(int b) const { return blocks_.at(static_cast<std::size_t>(b)); }
  const std::vector<Block>& blocks() const { return blocks_; }
  bool is_scalar() const { return blocks_.empty(); }

  int order() const {
    int d = 0;
    for (const Block& b : blocks_) d += b.exponent;
    return d;
  }

  std::size_t entry_count() const {
    std::size_t n = 1;
    for (const Block& b : blocks_)
      for (int t = 0; t < b.exponent; ++t) {
        if (n > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(b.dimension))
          throw std::overflow_error("SymmetryType: entry count overflows");
        n *= static_cast<std::size_t>(b.dimension);
      }
    return n;
  }

  // Dense-storage guard used by tensor and file construction.
  bool dense_storable() const {
    try {
      return entry_count() <= (std::size_t{1} << 33);
    } catch (const std::overflow_error&) {
      return false;
    }
  }

  // Axes in the fixed order: block-major, row-major within a block.
  std::vector<int> axis_dims() const {
    std::vector<int> dims;
    dims.reserve(static_cast<std::size_t>(order()));
    for (const Block& b : blocks_)
      for (int t = 0; t < b.exponent; ++t) dims.push_back(b.dimension);
    return dims;
  }

  int axis_offset(int b) const {
    int off = 0;
    for (int i = 0; i < b; ++i) off += blocks_[static_cast<std::size_t>(i)].exponent;
    return off;
  }

  std::string str() const {
    if (blocks_.empty()) return "scalar";
    std::string s;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(blocks_[i].exponent) + ':' + std::to_string(blocks_[i].dimension);
    }
    return s;
  }

  friend bool operator==(const SymmetryType&, const SymmetryType&) = default;

 private:
  std::vector<Block> blocks_;
};

// A flattening tuple f, one entry per block, 0 <= f_i <= d_i.
using FlatteningTuple = std::vector<int>;

inline void check_flattening(const SymmetryType& sym, const FlatteningTuple& f) {
  if (static_cast<int>(f.size()) != sym.block_count())
    throw std::invalid_argument("flattening tuple length does not match block count");
  for (int b = 0; b < sym.block_count(); ++b)
    if (f[static_cast<std::size_t>(b)] < 0 || f[static_cast<std::size_t>(b)] > sym.block(b).exponent)
      throw std::invalid_argument("flattening tuple entry out of range");
}

inline bool is_zero_tuple(const FlatteningTuple& f) {
  for (int x : f)
    if (x != 0) return false;
  return true;
}

inline bool is_full_tuple(const SymmetryType& sym, const FlatteningTuple& f) {
  for (int b = 0; b < sym.block_count(); ++b)
    if (f[static_cast<std::size_t>(b)] != sym.block(b).exponent) return false;
  return true;
}

inline FlatteningTuple complement_tuple(const SymmetryType& sym, const FlatteningTuple& f) {
  FlatteningTuple g(f.size());
  for (int b = 0; b < sym.block_count(); ++b)
    g[static_cast<std::size_t>(b)] = sym.block(b).exponent - f[static_cast<std::size_t>(b)];
  return g;
}

// The symmetry type of the f-part, dropping blocks with f_i = 0.
inline SymmetryType part_type(const SymmetryType& sym, const FlatteningTuple& f) {
  check_flattening(sym, f);
  std::vector<Block> blocks;
  for (int b = 0; b < sym.block_count(); ++b)
    if (f[static_cast<std::size_t>(b)] > 0)
      blocks.push_back(Block{f[static_cast<std::size_t>(b)], sym.block(b).dimension});
  return SymmetryType(std::move(blocks));
}

inline std::string tuple_str(const FlatteningTuple& f) {
  std::string s;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(f[i]);
  }
  return s;
}

}  // namespace mspm
