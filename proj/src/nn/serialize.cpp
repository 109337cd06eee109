#include "nn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace bayesft::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) {
    throw FormatError(FormatError::Kind::truncated, "parameter file", std::string("truncated reading ") + what);
  }
  return v;
}

void put_record(std::ostream& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void write_parameters(std::ostream& out, const Network& net) {
  out.write("DOPT", 4);
  put_u32(out, kParamFileVersion);
  put_u32(out, static_cast<std::uint32_t>(net.params.size() + net.buffers.size()));
  for (const auto& [name, t] : net.params) put_record(out, name, t);
  for (const auto& [name, t] : net.buffers) put_record(out, name, t);
}

void save_parameters(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_parameters(out, net);
}

Network read_parameters(std::istream& in, const NetworkSpec& spec) {
  Network net = init_xavier(spec, 0);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DOPT", 4) != 0) {
    throw FormatError(FormatError::Kind::magic_mismatch, "parameter file", "missing DOPT magic");
  }
  const auto version = get_u32(in, "version");
  if (version != kParamFileVersion) {
    throw FormatError(FormatError::Kind::bad_header, "parameter file", "unsupported version " + std::to_string(version));
  }
  const auto count = get_u32(in, "record count");
  if (count != net.params.size() + net.buffers.size()) {
    throw FormatError(FormatError::Kind::count_mismatch, "parameter file",
                      std::to_string(count) + " records, spec needs " +
                          std::to_string(net.params.size() + net.buffers.size()));
  }
  std::size_t seen = 0;
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto len = get_u32(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError(FormatError::Kind::truncated, "parameter file", "truncated name");
    Tensor* target = nullptr;
    if (auto it = net.params.find(name); it != net.params.end()) target = &it->second;
    if (auto it = net.buffers.find(name); it != net.buffers.end()) target = &it->second;
    if (target == nullptr) throw FormatError(FormatError::Kind::bad_header, "parameter file", "unknown record " + name);
    const auto rank = get_u32(in, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(in, "dims");
    if (shape != target->shape) {
      throw ShapeError("record " + name + " has shape " + to_string(shape) + ", spec expects " +
                       to_string(target->shape));
    }
    if (!in.read(reinterpret_cast<char*>(target->values.data()),
                 static_cast<std::streamsize>(target->size() * sizeof(double)))) {
      throw FormatError(FormatError::Kind::truncated, "parameter file", "truncated values of " + name);
    }
    ++seen;
  }
  if (seen != net.params.size() + net.buffers.size()) {
    throw FormatError(FormatError::Kind::count_mismatch, "parameter file", "missing records");
  }
  return net;
}

Network load_parameters(const std::filesystem::path& path, const NetworkSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_parameters(in, spec);
}

}  // namespace bayesft::nn
