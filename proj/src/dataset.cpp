#include "demix/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

namespace demix {

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.shape = shape;
  out.num_classes = num_classes;
  out.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.inputs.col(static_cast<Eigen::Index>(i)) = inputs.col(indices[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw TruncatedFileError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  const std::uint32_t img_magic = read_be32(img, 0, images);
  if (img_magic != kIdxImageMagic) throw BadMagicError(images.string() + ": not an IDX image file");
  const std::uint32_t lab_magic = read_be32(lab, 0, labels);
  if (lab_magic != kIdxLabelMagic) throw BadMagicError(labels.string() + ": not an IDX label file");

  const std::uint32_t count = read_be32(img, 4, images);
  const std::uint32_t rows = read_be32(img, 8, images);
  const std::uint32_t cols = read_be32(img, 12, images);
  const std::uint32_t label_count = read_be32(lab, 4, labels);

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (img.size() < 16 + static_cast<std::size_t>(count) * pixels) {
    throw TruncatedFileError(images.string() + ": fewer pixels than the header declares");
  }
  if (lab.size() < 8 + static_cast<std::size_t>(label_count)) {
    throw TruncatedFileError(labels.string() + ": fewer labels than the header declares");
  }
  if (count != label_count) {
    throw CountMismatchError("IDX image count " + std::to_string(count) + " != label count " +
                             std::to_string(label_count));
  }

  Dataset data;
  data.shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
  data.inputs.resize(static_cast<Eigen::Index>(pixels), count);
  data.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      data.inputs(static_cast<Eigen::Index>(p), i) = img[16 + i * pixels + p] / 255.0;
    }
    data.labels[i] = lab[8 + i];
  }
  data.num_classes = count == 0 ? 0 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  if (data.shape.channels != 1) throw DatasetError("IDX writer supports single-channel images only");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw DatasetError("cannot open IDX output files");
  put_be32(img, kIdxImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(data.shape.height));
  put_be32(img, static_cast<std::uint32_t>(data.shape.width));
  for (Eigen::Index i = 0; i < data.inputs.cols(); ++i) {
    for (Eigen::Index p = 0; p < data.inputs.rows(); ++p) {
      const double v = std::clamp(data.inputs(p, i), 0.0, 1.0);
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(l)));
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> values;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (line_no == 1 && rows.empty()) continue;
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (values.size() < 2) throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": need label and features");
    const double label = values.front();
    if (label < 0 || label != std::floor(label)) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": label must be a nonnegative integer");
    }
    if (!rows.empty() && values.size() - 1 != rows.front().size()) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": inconsistent feature count");
    }
    labels.push_back(static_cast<int>(label));
    rows.emplace_back(values.begin() + 1, values.end());
  }
  if (rows.empty()) throw DatasetError(path.string() + ": no samples");
  Dataset data;
  const int features = static_cast<int>(rows.front().size());
  data.shape = {features, 1, 1};
  data.inputs.resize(features, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int f = 0; f < features; ++f) data.inputs(f, static_cast<Eigen::Index>(i)) = rows[i][static_cast<std::size_t>(f)];
  }
  data.labels = std::move(labels);
  data.num_classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

Dataset make_synthetic(SyntheticKind kind, int n, double noise, std::uint64_t seed, int classes) {
  if (n < 2) throw std::invalid_argument("synthetic dataset needs n >= 2");
  if (noise < 0.0) throw std::invalid_argument("noise must be nonnegative");
  if (kind == SyntheticKind::two_moons) classes = 2;
  if (classes < 2) throw std::invalid_argument("synthetic dataset needs at least two classes");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  Dataset data;
  data.shape = {2, 1, 1};
  data.num_classes = classes;
  data.inputs.resize(2, n);
  data.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % classes;
    double x = 0.0;
    double y = 0.0;
    if (kind == SyntheticKind::blobs) {
      const double theta = 2.0 * std::numbers::pi * label / classes;
      x = 2.0 * std::cos(theta);
      y = 2.0 * std::sin(theta);
    } else {
      const double t = angle(rng);
      if (label == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
    }
    if (noise > 0.0) {
      x += noise * gauss(rng);
      y += noise * gauss(rng);
    }
    data.inputs(0, i) = x;
    data.inputs(1, i) = y;
    data.labels[static_cast<std::size_t>(i)] = label;
  }
  return data;
}

Dataset take_first(const Dataset& data, std::size_t count) {
  std::vector<int> idx(std::min(count, data.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return data.subset(idx);
}

LabeledSplit split_labeled(const Dataset& data, int per_class, Rng& rng) {
  if (per_class < 1) throw std::invalid_argument("need at least one label per class");
  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> taken(static_cast<std::size_t>(data.num_classes), 0);
  std::vector<int> labeled;
  std::vector<int> unlabeled;
  for (int i : order) {
    int& t = taken[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])];
    if (t < per_class) {
      ++t;
      labeled.push_back(i);
    } else {
      unlabeled.push_back(i);
    }
  }
  for (int t : taken) {
    if (t < per_class) throw std::invalid_argument("not enough samples to label every class");
  }
  std::sort(labeled.begin(), labeled.end());
  std::sort(unlabeled.begin(), unlabeled.end());
  return {data.subset(labeled), data.subset(unlabeled)};
}

}  // namespace demix
