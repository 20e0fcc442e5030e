#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mspm/tensor.hpp"

namespace mspm {

struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// PSTF tensor file: magic "PSTF", u16 LE version (= 1), u16 LE block count,
// then per block (u16 LE exponent, u32 LE dimension), then all entries as
// little-endian IEEE-754 doubles in the fixed axis order. A JSON mirror
// {"blocks":[[d,m],...],"values":[...]} is accepted for small tensors.
inline constexpr std::uint16_t kTensorFormatVersion = 1;
inline constexpr double kLoadSymmetryTol = 1e-10;

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw format_error("tensor file: truncated header");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

inline void check_loaded(const PSTensor& t) {
  if (!t.all_finite()) throw format_error("tensor file: non-finite entries");
  if (t.symmetry_violation() > kLoadSymmetryTol)
    throw format_error("tensor file: entries violate the declared block symmetry");
}

}  // namespace detail

inline std::string encode_tensor(const PSTensor& t) {
  const SymmetryType& sym = t.symmetry();
  if (sym.is_scalar()) throw std::invalid_argument("write_tensor: order-0 tensors are not serializable");
  std::string out;
  out.reserve(12 + 6 * static_cast<std::size_t>(sym.block_count()) + 8 * t.size());
  out += "PSTF";
  detail::put_le<std::uint16_t>(out, kTensorFormatVersion);
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(sym.block_count()));
  for (const Block& b : sym.blocks()) {
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(b.exponent));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.dimension));
  }
  for (double v : t.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    detail::put_le<std::uint64_t>(out, bits);
  }
  return out;
}

inline PSTensor decode_tensor(const std::string& in) {
  if (in.size() < 4 || in.compare(0, 4, "PSTF") != 0) throw format_error("tensor file: bad magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint16_t>(in, pos);
  if (version != kTensorFormatVersion) throw format_error("tensor file: unsupported version");
  const auto nblocks = detail::get_le<std::uint16_t>(in, pos);
  if (nblocks == 0) throw format_error("tensor file: no blocks");
  std::vector<Block> blocks;
  for (int b = 0; b < nblocks; ++b) {
    const auto d = detail::get_le<std::uint16_t>(in, pos);
    const auto m = detail::get_le<std::uint32_t>(in, pos);
    if (d == 0) throw format_error("tensor file: block exponent must be >= 1");
    if (m < 2) throw format_error("tensor file: block dimension must be >= 2");
    blocks.push_back(Block{static_cast<int>(d), static_cast<int>(m)});
  }
  SymmetryType sym(std::move(blocks));
  if (!sym.dense_storable()) throw format_error("tensor file: declared shape too large");
  const std::size_t n = sym.entry_count();
  if (in.size() - pos < 8 * n) throw format_error("tensor file: truncated payload");
  if (in.size() - pos > 8 * n) throw format_error("tensor file: trailing bytes");
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = detail::get_le<std::uint64_t>(in, pos);
    std::memcpy(&values[i], &bits, 8);
  }
  PSTensor t(std::move(sym), std::move(values));
  detail::check_loaded(t);
  return t;
}

inline nlohmann::json tensor_to_json(const PSTensor& t) {
  nlohmann::json j;
  j["blocks"] = nlohmann::json::array();
  for (const Block& b : t.symmetry().blocks()) j["blocks"].push_back({b.exponent, b.dimension});
  j["values"] = t.values();
  return j;
}

inline PSTensor tensor_from_json(const nlohmann::json& j) {
  try {
    std::vector<Block> blocks;
    for (const auto& jb : j.at("blocks")) {
      const int d = jb.at(0).get<int>();
      const int m = jb.at(1).get<int>();
      if (d == 0) throw format_error("tensor json: block exponent must be >= 1");
      blocks.push_back(Block{d, m});
    }
    SymmetryType sym(std::move(blocks));
    std::vector<double> values = j.at("values").get<std::vector<double>>();
    PSTensor t(std::move(sym), std::move(values));
    detail::check_loaded(t);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("tensor json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw format_error(std::string("tensor json: ") + e.what());
  }
}

// JSON output when the path ends in ".json", binary PSTF otherwise.
inline void write_tensor(const PSTensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot open for writing: " + path);
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    out << tensor_to_json(t).dump();
  } else {
    const std::string bytes = encode_tensor(t);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw format_error("write failed: " + path);
}

inline PSTensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 4 && bytes.compare(0, 4, "PSTF") == 0) return decode_tensor(bytes);
  nlohmann::json j = nlohmann::json::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw format_error("tensor file: neither PSTF nor JSON: " + path);
  return tensor_from_json(j);
}

}  // namespace mspm
