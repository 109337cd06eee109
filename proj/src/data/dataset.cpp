#include "data/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "common/rng.hpp"

namespace bayesft::data {

DatasetSplit DatasetSplit::subset(const std::vector<std::size_t>& indices, std::string new_name) const {
  const std::size_t per = sample_size();
  nn::Shape shape = inputs.shape;
  shape[0] = indices.size();
  DatasetSplit out;
  out.inputs = nn::Tensor(shape);
  out.labels.reserve(indices.size());
  out.name = std::move(new_name);
  out.num_classes = num_classes;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices.at(r);
    std::copy_n(inputs.values.begin() + static_cast<std::ptrdiff_t>(src * per), per,
                out.inputs.values.begin() + static_cast<std::ptrdiff_t>(r * per));
    out.labels.push_back(labels.at(src));
  }
  return out;
}

void check_split(const DatasetSplit& d) {
  if (d.labels.empty()) throw Error("dataset '" + d.name + "' is empty");
  if (d.inputs.rank() < 2 || d.inputs.dim(0) != d.labels.size()) {
    throw ShapeError("dataset '" + d.name + "' inputs " + nn::to_string(d.inputs.shape) + " do not match " +
                     std::to_string(d.labels.size()) + " labels");
  }
  for (int y : d.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= d.num_classes) {
      throw DomainError("dataset '" + d.name + "' has label " + std::to_string(y) + " outside [0, " +
                        std::to_string(d.num_classes) + ")");
    }
  }
  if (!d.inputs.all_finite()) throw NumericError(0, "dataset '" + d.name + "' has non-finite inputs");
}

std::uint64_t content_hash(const DatasetSplit& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : d.inputs.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix64(h ^ bits);
  }
  for (int y : d.labels) h = splitmix64(h ^ static_cast<std::uint64_t>(y));
  return h;
}

// ---- IDX ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

void expect_magic(const std::vector<std::uint8_t>& b, std::uint32_t magic, const std::filesystem::path& path) {
  if (b.size() < 4) throw FormatError(FormatError::Kind::truncated, path.string(), "file shorter than IDX magic");
  const std::uint32_t got = be32(b, 0);
  if (got != magic) {
    throw FormatError(FormatError::Kind::magic_mismatch, path.string(),
                      "magic " + hex(got) + ", expected " + hex(magic));
  }
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto b = read_file(path);
  expect_magic(b, kIdxImagesMagic, path);
  if (b.size() < 16) throw FormatError(FormatError::Kind::truncated, path.string(), "header truncated");
  IdxImages img;
  const std::uint64_t count = be32(b, 4);
  img.rows = be32(b, 8);
  img.cols = be32(b, 12);
  if (img.rows == 0 || img.cols == 0) {
    throw FormatError(FormatError::Kind::bad_header, path.string(), "zero image dimension");
  }
  const std::uint64_t expected = count * img.rows * img.cols;
  if (b.size() - 16 < expected) {
    throw FormatError(FormatError::Kind::truncated, path.string(),
                      "expected " + std::to_string(expected) + " pixel bytes, found " + std::to_string(b.size() - 16));
  }
  img.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto b = read_file(path);
  expect_magic(b, kIdxLabelsMagic, path);
  if (b.size() < 8) throw FormatError(FormatError::Kind::truncated, path.string(), "header truncated");
  const std::uint64_t count = be32(b, 4);
  if (b.size() - 8 < count) {
    throw FormatError(FormatError::Kind::truncated, path.string(),
                      "expected " + std::to_string(count) + " labels, found " + std::to_string(b.size() - 8));
  }
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t per = std::size_t{images.rows} * images.cols;
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(per ? images.pixels.size() / per : 0));
  put_be32(out, images.rows);
  put_be32(out, images.cols);
  out.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

DatasetSplit load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxImages img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  const std::size_t per = std::size_t{img.rows} * img.cols;
  const std::size_t count = img.pixels.size() / per;
  if (count != lab.size()) {
    throw FormatError(FormatError::Kind::count_mismatch, labels.string(),
                      std::to_string(lab.size()) + " labels for " + std::to_string(count) + " images in " +
                          images.string());
  }
  DatasetSplit d;
  d.name = images.filename().string();
  d.num_classes = 10;
  d.inputs = nn::Tensor({count, 1, img.rows, img.cols});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) d.inputs[i] = img.pixels[i] / 255.0;
  d.labels.reserve(count);
  for (auto y : lab) {
    if (y > 9) throw FormatError(FormatError::Kind::bad_header, labels.string(), "label " + std::to_string(y) + " > 9");
    d.labels.push_back(y);
  }
  return d;
}

// ---- synthetic -------------------------------------------------------------------

DatasetSplit make_synthetic(const SyntheticSpec& spec) {
  if (spec.n_samples == 0 || spec.n_samples % 2 != 0) throw ConfigError("n_samples must be positive and even");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
  Rng rng(spec.seed);
  DatasetSplit d;
  d.num_classes = 2;
  d.inputs = nn::Tensor({spec.n_samples, 2});
  d.labels.resize(spec.n_samples);

  if (spec.kind == SyntheticKind::two_moons) {
    const std::size_t half = spec.n_samples / 2;
    d.name = "two_moons";
    for (std::size_t i = 0; i < half; ++i) {
      const double t = half > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
      // Upper unit arc, then the lower arc shifted to interleave with it.
      d.inputs[2 * i] = std::cos(t);
      d.inputs[2 * i + 1] = std::sin(t);
      d.labels[i] = 0;
      const std::size_t j = half + i;
      d.inputs[2 * j] = 1.0 - std::cos(t);
      d.inputs[2 * j + 1] = 0.5 - std::sin(t);
      d.labels[j] = 1;
    }
    if (spec.noise_std > 0.0) {
      for (auto& v : d.inputs.values) v += spec.noise_std * rng.normal();
    }
    return d;
  }

  if (spec.centers.size() < 2) throw ConfigError("gaussian_blobs needs at least two centers");
  if (spec.n_samples % spec.centers.size() != 0) throw ConfigError("n_samples must divide evenly among centers");
  d.name = "gaussian_blobs";
  d.num_classes = spec.centers.size();
  const std::size_t per_class = spec.n_samples / spec.centers.size();
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const std::size_t cls = i / per_class;
    d.labels[i] = static_cast<int>(cls);
    d.inputs[2 * i] = spec.centers[cls][0] + spec.spread * rng.normal();
    d.inputs[2 * i + 1] = spec.centers[cls][1] + spec.spread * rng.normal();
  }
  return d;
}

void write_csv_2d(const std::filesystem::path& path, const DatasetSplit& d) {
  if (d.sample_size() != 2) throw ShapeError("CSV export needs a 2-D dataset");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x1,x2,label\n";
  char buf[96];
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", d.inputs[2 * i], d.inputs[2 * i + 1], d.labels[i]);
    out << buf;
  }
}

// ---- splitting -------------------------------------------------------------------------

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

Splits split(const DatasetSplit& data, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must all be positive");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const std::size_t n = data.size();
  const auto idx = shuffled_indices(n, seed);
  // A small epsilon keeps 0.8 * 100 from flooring to 79.
  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n) + 1e-9));
  const auto n_valid = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_valid == 0 || n_train + n_valid >= n) {
    throw ConfigError("dataset of " + std::to_string(n) + " samples too small for the requested split");
  }
  auto part = [&](std::size_t lo, std::size_t hi) {
    return std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                    idx.begin() + static_cast<std::ptrdiff_t>(hi));
  };
  return {data.subset(part(0, n_train), data.name + "/train"),
          data.subset(part(n_train, n_train + n_valid), data.name + "/valid"),
          data.subset(part(n_train + n_valid, n), data.name + "/test")};
}

}  // namespace bayesft::data
