#include "demix/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

namespace demix {

namespace {

constexpr std::array<char, 4> kMagic{'D', 'M', 'X', '1'};
constexpr std::uint32_t kMaxDim = 1u << 24;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(b.data(), 8);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw CheckpointError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw CheckpointError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[static_cast<std::size_t>(i)];
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Parameters& params) {
  validate(params);
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const Layer& l : params.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.kind));
    put_u32(out, static_cast<std::uint32_t>(l.activation));
    put_u32(out, static_cast<std::uint32_t>(l.input.channels));
    put_u32(out, static_cast<std::uint32_t>(l.input.height));
    put_u32(out, static_cast<std::uint32_t>(l.input.width));
    put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
    put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
    put_u32(out, static_cast<std::uint32_t>(l.bias.size()));
  }
  for (const Layer& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_f64(out, l.weight(r, c));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) put_f64(out, l.bias[i]);
  }
  if (!out) throw CheckpointError("checkpoint write failed");
}

Parameters read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4)) throw CheckpointError("checkpoint truncated");
  if (magic != kMagic) throw CheckpointError("not a DMX1 checkpoint");
  const std::uint32_t count = get_u32(in);
  if (count == 0 || count > 64) throw CheckpointError("implausible layer count");
  Parameters params;
  params.layers.resize(count);
  for (Layer& l : params.layers) {
    const std::uint32_t kind = get_u32(in);
    const std::uint32_t act = get_u32(in);
    if (kind > 1 || act > 1) throw CheckpointError("unknown layer kind or activation");
    l.kind = static_cast<LayerKind>(kind);
    l.activation = static_cast<Activation>(act);
    std::array<std::uint32_t, 6> dims{};
    for (auto& d : dims) {
      d = get_u32(in);
      if (d > kMaxDim) throw CheckpointError("implausible layer dimension");
    }
    l.input = {static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
    l.weight.resize(dims[3], dims[4]);
    l.bias.resize(dims[5]);
  }
  for (Layer& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get_f64(in);
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = get_f64(in);
  }
  try {
    validate(params);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const Parameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string());
  write_checkpoint(out, params);
}

Parameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace demix
