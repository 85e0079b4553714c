#pragma once

// FER2013 CSV ingestion, the synthetic 7-class stand-in, and minibatching.
//
// CSV layout (UTF-8, LF or CRLF):
//   emotion,pixels,Usage
//   3,<2304 space-separated integers 0-255>,Training

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbcnn/rng.hpp"
#include "pbcnn/tensor.hpp"

namespace pbcnn {

inline constexpr std::size_t kImageSide = 48;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr int kNumClasses = 7;

enum class Split { Training, PublicTest, PrivateTest };

std::string_view split_name(Split split);
std::optional<Split> parse_split(std::string_view name);

struct LabeledImage {
  std::vector<float> pixels;  // kImagePixels values in [0, 1]
  int label = 0;
  Split split = Split::Training;
};

struct Normalization {
  enum class Mode { UnitRange, Standardized };
  Mode mode = Mode::UnitRange;
  float mean = 0.0f;
  float std = 1.0f;

  float apply(float pixel) const { return mode == Mode::UnitRange ? pixel : (pixel - mean) / std; }
};

/// Label convention of the public FER2013 release.
const std::array<std::string, kNumClasses>& fer2013_class_names();

struct Dataset {
  std::vector<LabeledImage> images;
  std::array<std::string, kNumClasses> class_names = fer2013_class_names();
  Normalization normalization;

  std::size_t count(Split split) const;
  std::vector<std::size_t> indices(Split split) const;

  /// Switches to standardized normalization using Training-split pixel statistics.
  void standardize();
};

/// Row-at-a-time FER2013 reader. Errors carry the 1-based line number.
class Fer2013Reader {
 public:
  explicit Fer2013Reader(std::istream& in);
  std::optional<LabeledImage> next();
  std::size_t rows_read() const noexcept { return rows_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t rows_ = 0;
  std::string buffer_;
};

/// `max_rows` = 0 reads everything.
Dataset parse_fer2013(std::istream& in, std::size_t max_rows = 0);
Dataset load_fer2013(const std::filesystem::path& path, std::size_t max_rows = 0);

/// Writes the dataset in FER2013 CSV layout, pixels rounded to 0-255.
void write_fer2013(const Dataset& dataset, std::ostream& out);

/// Deterministic 7-class template image (oriented bars and blobs), values in [0,1].
std::vector<float> synthetic_template(int label);

/// Templates plus N(0, noise²) pixel noise, clipped to [0,1]; per class 80/10/10
/// Training/PublicTest/PrivateTest.
Dataset make_synthetic(std::size_t n_per_class, double noise, std::uint64_t seed);

struct Batch {
  Tensor images;  // N×1×48×48, normalized
  std::vector<int> labels;
};

struct BatchOptions {
  std::size_t batch_size = 32;
  std::optional<std::uint64_t> shuffle_seed;  // none keeps dataset order
  bool drop_last = false;
  bool horizontal_flip = false;  // random left-right flips (needs shuffle_seed)
};

/// Iterates one pass over a split.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, Split split, BatchOptions options);

  std::optional<Batch> next();
  std::size_t num_batches() const noexcept { return num_batches_; }
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  const Dataset& dataset_;
  BatchOptions options_;
  std::vector<std::size_t> order_;
  std::size_t num_batches_ = 0;
  std::size_t cursor_ = 0;
  Rng flip_rng_;
};

/// Training split: seeded shuffle and the final partial batch dropped.
/// Test splits: dataset order (or seeded shuffle) with the partial batch kept.
BatchIterator batches(const Dataset& dataset, Split split, std::size_t batch_size,
                      std::optional<std::uint64_t> shuffle_seed = std::nullopt);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace pbcnn
