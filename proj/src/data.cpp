#include "pbcnn/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace pbcnn {

namespace {

constexpr std::string_view kHeader = "emotion,pixels,Usage";

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Training:
      return "Training";
    case Split::PublicTest:
      return "PublicTest";
    case Split::PrivateTest:
      return "PrivateTest";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  for (Split s : {Split::Training, Split::PublicTest, Split::PrivateTest}) {
    if (split_name(s) == name) return s;
  }
  return std::nullopt;
}

const std::array<std::string, kNumClasses>& fer2013_class_names() {
  static const std::array<std::string, kNumClasses> names{"Angry", "Disgust", "Fear", "Happy",
                                                           "Sad",   "Surprise", "Neutral"};
  return names;
}

std::size_t Dataset::count(Split split) const {
  std::size_t n = 0;
  for (const auto& img : images) n += img.split == split ? 1 : 0;
  return n;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].split == split) out.push_back(i);
  }
  return out;
}

void Dataset::standardize() {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& img : images) {
    if (img.split != Split::Training) continue;
    for (float p : img.pixels) {
      sum += p;
      sq += static_cast<double>(p) * p;
    }
    n += img.pixels.size();
  }
  if (n == 0) throw ConfigError("normalization", "standardization needs a non-empty Training split");
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(sq / static_cast<double>(n) - mean * mean, 0.0);
  normalization.mode = Normalization::Mode::Standardized;
  normalization.mean = static_cast<float>(mean);
  normalization.std = static_cast<float>(var > 0.0 ? std::sqrt(var) : 1.0);
}

Fer2013Reader::Fer2013Reader(std::istream& in) : in_(in) {
  if (!std::getline(in_, buffer_)) throw ParseError(1, "missing header line");
  const auto header = trim_cr(buffer_);
  // Tolerate a UTF-8 byte-order mark.
  const auto unmarked = header.starts_with("\xEF\xBB\xBF") ? header.substr(3) : header;
  if (unmarked != kHeader) {
    throw ParseError(1, "expected header '" + std::string(kHeader) + "', got '" + std::string(unmarked) + "'");
  }
}

std::optional<LabeledImage> Fer2013Reader::next() {
  while (std::getline(in_, buffer_)) {
    ++line_;
    const std::string_view row = trim_cr(buffer_);
    if (row.empty()) continue;

    const std::size_t c1 = row.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : row.find(',', c1 + 1);
    if (c2 == std::string_view::npos || row.find(',', c2 + 1) != std::string_view::npos) {
      std::size_t commas = 0;
      for (char ch : row) commas += ch == ',' ? 1 : 0;
      throw ParseError(line_, "expected 3 columns, got " + std::to_string(commas + 1));
    }
    const std::string_view label_text = row.substr(0, c1);
    const std::string_view pixel_text = row.substr(c1 + 1, c2 - c1 - 1);
    const std::string_view usage_text = row.substr(c2 + 1);

    LabeledImage img;
    const auto [lp, lec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), img.label);
    if (lec != std::errc() || lp != label_text.data() + label_text.size()) {
      throw ParseError(line_, "emotion '" + std::string(label_text) + "' is not an integer");
    }
    if (img.label < 0 || img.label >= kNumClasses) {
      throw ParseError(line_, "emotion " + std::to_string(img.label) + " outside [0,7)");
    }

    img.pixels.reserve(kImagePixels);
    const char* p = pixel_text.data();
    const char* end = p + pixel_text.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      int value = 0;
      const auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc() || (next < end && *next != ' ')) {
        const char* stop = p;
        while (stop < end && *stop != ' ') ++stop;
        throw ParseError(line_, "pixel '" + std::string(p, stop) + "' is not an integer");
      }
      if (value < 0 || value > 255) throw ParseError(line_, "pixel value " + std::to_string(value) + " outside 0-255");
      img.pixels.push_back(static_cast<float>(value) / 255.0f);
      p = next;
    }
    if (img.pixels.size() != kImagePixels) {
      throw ParseError(line_, "expected " + std::to_string(kImagePixels) + " pixels, got " +
                                  std::to_string(img.pixels.size()));
    }

    const auto split = parse_split(usage_text);
    if (!split) throw ParseError(line_, "unknown Usage '" + std::string(usage_text) + "'");
    img.split = *split;
    ++rows_;
    return img;
  }
  return std::nullopt;
}

Dataset parse_fer2013(std::istream& in, std::size_t max_rows) {
  Fer2013Reader reader(in);
  Dataset dataset;
  while (max_rows == 0 || dataset.images.size() < max_rows) {
    auto img = reader.next();
    if (!img) break;
    dataset.images.push_back(std::move(*img));
  }
  return dataset;
}

Dataset load_fer2013(const std::filesystem::path& path, std::size_t max_rows) {
  std::ifstream in(path);
  if (!in) throw ConfigError("data", "cannot open " + path.string());
  return parse_fer2013(in, max_rows);
}

void write_fer2013(const Dataset& dataset, std::ostream& out) {
  out << kHeader << '\n';
  for (const auto& img : dataset.images) {
    out << img.label << ',';
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      if (i) out << ' ';
      out << static_cast<int>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
    }
    out << ',' << split_name(img.split) << '\n';
  }
}

std::vector<float> synthetic_template(int label) {
  constexpr float kBackground = 0.15f, kForeground = 0.85f;
  std::vector<float> img(kImagePixels, kBackground);
  auto set = [&](int r, int c) {
    if (r >= 0 && c >= 0 && r < static_cast<int>(kImageSide) && c < static_cast<int>(kImageSide)) {
      img[static_cast<std::size_t>(r) * kImageSide + static_cast<std::size_t>(c)] = kForeground;
    }
  };
  const int n = static_cast<int>(kImageSide);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double dc = c - 23.5, dr = r - 23.5;
      const double radius = std::sqrt(dr * dr + dc * dc);
      bool on = false;
      switch (label) {
        case 0:  // horizontal bar, upper third
          on = r >= 8 && r < 14 && c >= 6 && c < 42;
          break;
        case 1:  // vertical bar, left third
          on = c >= 8 && c < 14 && r >= 6 && r < 42;
          break;
        case 2:  // main diagonal
          on = std::abs(r - c) <= 3 && r >= 4 && r < 44;
          break;
        case 3:  // anti-diagonal
          on = std::abs(r + c - (n - 1)) <= 3 && r >= 4 && r < 44;
          break;
        case 4:  // central blob
          on = radius <= 9.0;
          break;
        case 5: {  // two off-centre blobs
          const double a = std::hypot(r - 12.0, c - 35.0), b = std::hypot(r - 35.0, c - 12.0);
          on = a <= 6.0 || b <= 6.0;
          break;
        }
        case 6:  // ring
          on = radius >= 15.0 && radius <= 19.0;
          break;
        default:
          throw ConfigError("label", "no synthetic template for class " + std::to_string(label));
      }
      if (on) set(r, c);
    }
  }
  return img;
}

Dataset make_synthetic(std::size_t n_per_class, double noise, std::uint64_t seed) {
  if (n_per_class == 0) throw ConfigError("n_per_class", "must be at least 1");
  if (!(noise >= 0.0)) throw ConfigError("noise", "must be non-negative");
  Rng rng = make_rng(seed, Stream::Synthetic);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t n_public = n_per_class / 10;
  const std::size_t n_private = n_per_class / 10;
  const std::size_t n_train = n_per_class - n_public - n_private;

  Dataset dataset;
  dataset.images.reserve(n_per_class * kNumClasses);
  for (int label = 0; label < kNumClasses; ++label) {
    const auto base = synthetic_template(label);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      LabeledImage img;
      img.label = label;
      img.split = i < n_train ? Split::Training : (i < n_train + n_public ? Split::PublicTest : Split::PrivateTest);
      img.pixels = base;
      if (noise > 0.0) {
        for (auto& p : img.pixels) {
          p = static_cast<float>(std::clamp(static_cast<double>(p) + noise * gauss(rng), 0.0, 1.0));
        }
      }
      dataset.images.push_back(std::move(img));
    }
  }
  return dataset;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  Batch batch;
  batch.images = Tensor({indices.size(), 1, kImageSide, kImageSide});
  batch.labels.reserve(indices.size());
  float* dst = batch.images.data();
  for (std::size_t idx : indices) {
    const auto& img = dataset.images.at(idx);
    for (float p : img.pixels) *dst++ = dataset.normalization.apply(p);
    batch.labels.push_back(img.label);
  }
  return batch;
}

BatchIterator::BatchIterator(const Dataset& dataset, Split split, BatchOptions options)
    : dataset_(dataset), options_(options) {
  if (options_.batch_size == 0) throw ConfigError("batch_size", "must be positive");
  order_ = dataset.indices(split);
  if (order_.empty()) throw ConfigError("split", "split " + std::string(split_name(split)) + " is empty");
  if (options_.shuffle_seed) {
    const auto perm = shuffled_indices(order_.size(), *options_.shuffle_seed);
    std::vector<std::size_t> shuffled(order_.size());
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = order_[perm[i]];
    order_ = std::move(shuffled);
    flip_rng_ = Rng(derive_seed(*options_.shuffle_seed, Stream::Augment));
  }
  num_batches_ = options_.drop_last ? order_.size() / options_.batch_size
                                    : (order_.size() + options_.batch_size - 1) / options_.batch_size;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= num_batches_) return std::nullopt;
  const std::size_t begin = cursor_ * options_.batch_size;
  const std::size_t end = std::min(begin + options_.batch_size, order_.size());
  ++cursor_;
  Batch batch = make_batch(dataset_, std::span<const std::size_t>(order_).subspan(begin, end - begin));
  if (options_.horizontal_flip) {
    std::bernoulli_distribution coin(0.5);
    for (std::size_t n = 0; n < batch.labels.size(); ++n) {
      if (!coin(flip_rng_)) continue;
      for (std::size_t r = 0; r < kImageSide; ++r) {
        float* row = batch.images.data() + n * kImagePixels + r * kImageSide;
        std::reverse(row, row + kImageSide);
      }
    }
  }
  return batch;
}

BatchIterator batches(const Dataset& dataset, Split split, std::size_t batch_size,
                      std::optional<std::uint64_t> shuffle_seed) {
  BatchOptions options;
  options.batch_size = batch_size;
  options.shuffle_seed = shuffle_seed;
  options.drop_last = split == Split::Training;
  if (split == Split::Training && batch_size < 2) {
    throw ConfigError("batch_size", "training batches need at least 2 images for batch normalization");
  }
  return BatchIterator(dataset, split, options);
}

}  // namespace pbcnn
