#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nn/tensor.hpp"

namespace bayesft::data {

// Inputs are N x (feature dims); labels are class indices in [0, num_classes).
struct DatasetSplit {
  nn::Tensor inputs;
  std::vector<int> labels;
  std::string name;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return labels.empty() ? 0 : inputs.size() / labels.size(); }
  nn::Shape sample_shape() const { return nn::Shape(inputs.shape.begin() + 1, inputs.shape.end()); }

  // Rows `indices` gathered into a new split, in the given order.
  DatasetSplit subset(const std::vector<std::size_t>& indices, std::string new_name) const;
};

// Throws DataError-like bayesft::Error if the invariants do not hold.
void check_split(const DatasetSplit& d);

// 64-bit content hash of inputs and labels; used to version experiment inputs.
std::uint64_t content_hash(const DatasetSplit& d);

// ---- IDX --------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Decodes an images/labels pair. Pixels are scaled by 1/255; inputs have shape
// N x 1 x rows x cols. Errors are FormatError with the offending file.
DatasetSplit load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct IdxImages {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

// ---- synthetic ----------------------------------------------------------------

enum class SyntheticKind { two_moons, gaussian_blobs };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::two_moons;
  std::size_t n_samples = 1000;
  double noise_std = 0.1;  // two_moons
  std::vector<std::array<double, 2>> centers{{-1.0, 0.0}, {1.0, 0.0}};  // gaussian_blobs, one per class
  double spread = 0.5;  // gaussian_blobs
  std::uint64_t seed = 0;
};

DatasetSplit make_synthetic(const SyntheticSpec& spec);

// x1,x2,label rows for 2-D datasets.
void write_csv_2d(const std::filesystem::path& path, const DatasetSplit& d);

// ---- splitting ------------------------------------------------------------------

struct Splits {
  DatasetSplit train;
  DatasetSplit valid;
  DatasetSplit test;
};

// Deterministic shuffled partition. Sizes are floor(f * N) for train and valid,
// the remainder goes to test.
Splits split(const DatasetSplit& data, std::array<double, 3> fractions, std::uint64_t seed);

// The index permutation used by split(); exposed for partition checks.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace bayesft::data
