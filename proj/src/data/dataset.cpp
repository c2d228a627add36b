// Copyright 2026 The catkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "catkd/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "catkd/error.hpp"

namespace fs = std::filesystem;

namespace catkd::data {

const char* to_string(DatasetName n) {
  switch (n) {
    case DatasetName::cifar100: return "cifar100";
    case DatasetName::cifar10: return "cifar10";
    case DatasetName::stl10: return "stl10";
    case DatasetName::tiny_imagenet: return "tiny-imagenet";
    case DatasetName::synthetic_blobs: return "synthetic-blobs";
  }
  return "?";
}

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

const char* to_string(Augmentation a) {
  return a == Augmentation::standard_crop_flip ? "standard-crop-flip" : "none";
}

DatasetName dataset_name_from(const std::string& s) {
  if (s == "cifar100") return DatasetName::cifar100;
  if (s == "cifar10") return DatasetName::cifar10;
  if (s == "stl10") return DatasetName::stl10;
  if (s == "tiny-imagenet") return DatasetName::tiny_imagenet;
  if (s == "synthetic-blobs") return DatasetName::synthetic_blobs;
  fail(ErrorKind::Config, "unknown dataset name '" + s + "'");
}

Split split_from(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  fail(ErrorKind::Config, "unknown split '" + s + "'");
}

Augmentation augmentation_from(const std::string& s) {
  if (s == "standard-crop-flip") return Augmentation::standard_crop_flip;
  if (s == "none") return Augmentation::none;
  fail(ErrorKind::Config, "unknown augmentation '" + s + "'");
}

int declared_classes(DatasetName name) {
  switch (name) {
    case DatasetName::cifar100: return 100;
    case DatasetName::cifar10: return 10;
    case DatasetName::stl10: return 10;
    case DatasetName::tiny_imagenet: return 200;
    case DatasetName::synthetic_blobs: return 10;
  }
  return 0;
}

bool ClassSubset::keeps(int label) const {
  switch (kind) {
    case Kind::all: return true;
    case Kind::first_n: return label < n;
    case Kind::explicit_list:
      return std::find(list.begin(), list.end(), label) != list.end();
  }
  return false;
}

void DatasetSpec::validate() const {
  if (!(ratio > 0.0 && ratio <= 1.0))
    fail(ErrorKind::Config, "dataset ratio must be in (0,1], got " + std::to_string(ratio));
  if (synthetic_per_class < 1)
    fail(ErrorKind::Config, "synthetic_per_class must be >= 1");
  const int k = declared_classes(name);
  if (subset.kind == ClassSubset::Kind::first_n) {
    if (subset.n <= 0) fail(ErrorKind::Policy, "class subset: n must be positive");
    if (subset.n > k)
      fail(ErrorKind::Policy, "class subset: n=" + std::to_string(subset.n) + " exceeds the " +
                                  std::to_string(k) + " declared classes");
  }
  if (subset.kind == ClassSubset::Kind::explicit_list) {
    if (subset.list.empty()) fail(ErrorKind::Policy, "class subset: empty explicit list");
    for (int c : subset.list)
      if (c < 0 || c >= k)
        fail(ErrorKind::Policy, "class subset: class " + std::to_string(c) +
                                    " outside the declared range [0," + std::to_string(k) + ")");
  }
}

std::string DatasetSpec::id() const {
  std::ostringstream os;
  os << to_string(name) << "/" << to_string(split) << " ratio=" << ratio
     << " aug=" << to_string(augmentation) << " seed=" << seed;
  if (subset.kind == ClassSubset::Kind::first_n) os << " subset=first" << subset.n;
  if (subset.kind == ClassSubset::Kind::explicit_list) {
    os << " subset=[";
    for (std::size_t i = 0; i < subset.list.size(); ++i)
      os << (i ? "," : "") << subset.list[i];
    os << "]";
  }
  return os.str();
}

namespace {

// Interim representation shared by the byte-oriented loaders.
struct RawSet {
  std::vector<std::uint8_t> pixels;  // N x 3 x H x W, row-major planes
  std::vector<int> labels;
  int h = 32, w = 32;
};

struct PixelStats {
  float mean[3];
  float stddev[3];
};

// Fixed normalization constants of the standard pipelines for each dataset.
PixelStats stats_for(DatasetName name) {
  switch (name) {
    case DatasetName::cifar10:
      return {{0.4914f, 0.4822f, 0.4465f}, {0.2470f, 0.2435f, 0.2616f}};
    case DatasetName::cifar100:
      return {{0.5071f, 0.4865f, 0.4409f}, {0.2673f, 0.2564f, 0.2762f}};
    case DatasetName::stl10:
      return {{0.4467f, 0.4398f, 0.4066f}, {0.2603f, 0.2566f, 0.2713f}};
    case DatasetName::tiny_imagenet:
      return {{0.4802f, 0.4481f, 0.3975f}, {0.2770f, 0.2691f, 0.2821f}};
    case DatasetName::synthetic_blobs:
      return {{0.f, 0.f, 0.f}, {1.f, 1.f, 1.f}};
  }
  return {{0.f, 0.f, 0.f}, {1.f, 1.f, 1.f}};
}

[[noreturn]] void fetch_error(const DatasetSpec& spec, const std::string& missing,
                              const std::string& url, const std::string& hint) {
  fail(ErrorKind::FetchInstruction,
       std::string(to_string(spec.name)) + ": no local data at " + missing +
           ". Download " + url + " and extract it under '" + spec.root + "' " + hint +
           ". Nothing is downloaded automatically.");
}

void read_whole_file(const fs::path& p, std::vector<std::uint8_t>& out) {
  std::ifstream f(p, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + p.string());
  f.seekg(0, std::ios::end);
  const auto len = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  out.resize(len);
  f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(len));
  if (!f) fail(ErrorKind::Io, "short read on " + p.string());
}

// CIFAR binary records: [label bytes][3072 bytes of RGB planes, row-major].
void append_cifar_file(const fs::path& p, int label_bytes, RawSet& out) {
  std::vector<std::uint8_t> bytes;
  read_whole_file(p, bytes);
  const std::size_t rec = static_cast<std::size_t>(label_bytes) + 3072;
  if (bytes.empty() || bytes.size() % rec != 0)
    fail(ErrorKind::Schema, p.string() + ": size " + std::to_string(bytes.size()) +
                                " is not a multiple of the " + std::to_string(rec) +
                                "-byte record");
  const std::size_t count = bytes.size() / rec;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* r = bytes.data() + i * rec;
    // CIFAR-100 records carry [coarse][fine]; the fine label is the last one.
    out.labels.push_back(r[label_bytes - 1]);
    out.pixels.insert(out.pixels.end(), r + label_bytes, r + rec);
  }
}

RawSet load_cifar(const DatasetSpec& spec) {
  RawSet raw;
  if (spec.name == DatasetName::cifar10) {
    const fs::path dir = fs::path(spec.root) / "cifar-10-batches-bin";
    if (!fs::exists(dir))
      fetch_error(spec, dir.string(), "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
                  "(producing cifar-10-batches-bin/)");
    if (spec.split == Split::train) {
      for (int b = 1; b <= 5; ++b)
        append_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), 1, raw);
    } else {
      append_cifar_file(dir / "test_batch.bin", 1, raw);
    }
  } else {
    const fs::path dir = fs::path(spec.root) / "cifar-100-binary";
    if (!fs::exists(dir))
      fetch_error(spec, dir.string(), "https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz",
                  "(producing cifar-100-binary/)");
    append_cifar_file(dir / (spec.split == Split::train ? "train.bin" : "test.bin"), 2, raw);
  }
  return raw;
}

// STL-10 stores 96x96 planes in column-major order; transpose while reading,
// then area-resize to the 32x32 working resolution.
RawSet load_stl10(const DatasetSpec& spec) {
  const fs::path dir = fs::path(spec.root) / "stl10_binary";
  if (!fs::exists(dir))
    fetch_error(spec, dir.string(), "http://ai.stanford.edu/~acoates/stl10/stl10_binary.tar.gz",
                "(producing stl10_binary/)");
  const std::string stem = spec.split == Split::train ? "train" : "test";
  std::vector<std::uint8_t> x, y;
  read_whole_file(dir / (stem + "_X.bin"), x);
  read_whole_file(dir / (stem + "_y.bin"), y);
  const std::size_t rec = 3 * 96 * 96;
  if (x.size() % rec != 0 || x.size() / rec != y.size())
    fail(ErrorKind::Schema, "stl10: image/label file sizes disagree");

  RawSet raw;
  const std::size_t count = y.size();
  raw.pixels.resize(count * 3 * 32 * 32);
  cv::Mat plane96(96, 96, CV_8U), plane32;
  for (std::size_t i = 0; i < count; ++i) {
    if (y[i] < 1 || y[i] > 10) fail(ErrorKind::Schema, "stl10: label out of range");
    raw.labels.push_back(y[i] - 1);
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t* src = x.data() + i * rec + static_cast<std::size_t>(c) * 96 * 96;
      for (int row = 0; row < 96; ++row)
        for (int col = 0; col < 96; ++col)
          plane96.at<std::uint8_t>(row, col) = src[static_cast<std::size_t>(col) * 96 + row];
      cv::resize(plane96, plane32, cv::Size(32, 32), 0, 0, cv::INTER_AREA);
      std::uint8_t* dst = raw.pixels.data() + (i * 3 + c) * 32 * 32;
      for (int row = 0; row < 32; ++row)
        for (int col = 0; col < 32; ++col) *dst++ = plane32.at<std::uint8_t>(row, col);
    }
  }
  return raw;
}

void append_resized_jpeg(const fs::path& p, RawSet& out) {
  cv::Mat img = cv::imread(p.string(), cv::IMREAD_COLOR);  // BGR
  if (img.empty()) fail(ErrorKind::Io, "cannot decode " + p.string());
  cv::Mat small;
  cv::resize(img, small, cv::Size(32, 32), 0, 0, cv::INTER_AREA);
  const std::size_t base = out.pixels.size();
  out.pixels.resize(base + 3 * 32 * 32);
  for (int row = 0; row < 32; ++row)
    for (int col = 0; col < 32; ++col) {
      const cv::Vec3b px = small.at<cv::Vec3b>(row, col);
      // planes in RGB order
      out.pixels[base + 0 * 1024 + row * 32 + col] = px[2];
      out.pixels[base + 1 * 1024 + row * 32 + col] = px[1];
      out.pixels[base + 2 * 1024 + row * 32 + col] = px[0];
    }
}

RawSet load_tiny_imagenet(const DatasetSpec& spec) {
  const fs::path dir = fs::path(spec.root) / "tiny-imagenet-200";
  if (!fs::exists(dir))
    fetch_error(spec, dir.string(), "http://cs231n.stanford.edu/tiny-imagenet-200.zip",
                "(producing tiny-imagenet-200/)");

  // Class order is the wnids.txt file order.
  std::map<std::string, int> wnid_index;
  {
    std::ifstream f(dir / "wnids.txt");
    if (!f) fail(ErrorKind::Io, "cannot open tiny-imagenet wnids.txt");
    std::string line;
    int idx = 0;
    while (std::getline(f, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (!line.empty()) wnid_index[line] = idx++;
    }
  }

  RawSet raw;
  if (spec.split == Split::train) {
    std::vector<std::pair<int, fs::path>> ordered;
    for (const auto& [wnid, idx] : wnid_index) {
      const fs::path images = dir / "train" / wnid / "images";
      if (!fs::exists(images)) continue;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(images)) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (auto& f : files) ordered.emplace_back(idx, f);
    }
    std::sort(ordered.begin(), ordered.end());
    for (auto& [idx, f] : ordered) {
      raw.labels.push_back(idx);
      append_resized_jpeg(f, raw);
    }
  } else {
    std::ifstream ann(dir / "val" / "val_annotations.txt");
    if (!ann) fail(ErrorKind::Io, "cannot open tiny-imagenet val_annotations.txt");
    std::string line;
    std::vector<std::pair<std::string, int>> entries;
    while (std::getline(ann, line)) {
      std::istringstream is(line);
      std::string file, wnid;
      if (!(is >> file >> wnid)) continue;
      const auto it = wnid_index.find(wnid);
      if (it == wnid_index.end()) fail(ErrorKind::Schema, "tiny-imagenet: unknown wnid " + wnid);
      entries.emplace_back(file, it->second);
    }
    std::sort(entries.begin(), entries.end());
    for (auto& [file, idx] : entries) {
      raw.labels.push_back(idx);
      append_resized_jpeg(dir / "val" / "images" / file, raw);
    }
  }
  return raw;
}

// Per-class retention quota under a ratio, applied in file order.
std::vector<int> ratio_quota(const std::vector<int>& labels, int num_classes, double ratio) {
  std::vector<int> count(num_classes, 0);
  for (int l : labels) ++count[l];
  std::vector<int> quota(num_classes, 0);
  for (int c = 0; c < num_classes; ++c)
    if (count[c] > 0) quota[c] = std::max(1, static_cast<int>(std::lround(count[c] * ratio)));
  return quota;
}

Dataset materialize(const RawSet& raw, const DatasetSpec& spec) {
  const int k = declared_classes(spec.name);
  for (int l : raw.labels)
    if (l < 0 || l >= k) fail(ErrorKind::Schema, "label outside the declared class range");

  // First the class subset, then the ratio, both deterministic in file order.
  std::vector<int> kept;
  {
    std::vector<int> subset_labels;
    std::vector<int> first_pass;
    for (std::size_t i = 0; i < raw.labels.size(); ++i) {
      if (!spec.subset.keeps(raw.labels[i])) continue;
      first_pass.push_back(static_cast<int>(i));
      subset_labels.push_back(raw.labels[i]);
    }
    const std::vector<int> quota = ratio_quota(subset_labels, k, spec.ratio);
    std::vector<int> taken(k, 0);
    for (int i : first_pass) {
      const int l = raw.labels[i];
      if (taken[l] < quota[l]) {
        kept.push_back(i);
        ++taken[l];
      }
    }
  }

  const PixelStats st = stats_for(spec.name);
  const std::size_t plane = static_cast<std::size_t>(raw.h) * raw.w;
  Dataset d;
  d.images = Tensor(static_cast<int>(kept.size()), 3, raw.h, raw.w);
  d.labels.reserve(kept.size());
  d.num_classes = k;
  d.source = spec.id();
  for (std::size_t out = 0; out < kept.size(); ++out) {
    const std::size_t in = static_cast<std::size_t>(kept[out]);
    d.labels.push_back(raw.labels[in]);
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t* src = raw.pixels.data() + (in * 3 + c) * plane;
      float* dst = d.images.plane(static_cast<int>(out), c);
      for (std::size_t p = 0; p < plane; ++p)
        dst[p] = (static_cast<float>(src[p]) / 255.f - st.mean[c]) / st.stddev[c];
    }
  }
  return d;
}

// Synthetic 10-class task: a Gaussian bump whose position on a fixed ring
// encodes the class. Position is the only class cue, so localization is both
// necessary and sufficient — ideal for exercising attention transfer.
void render_blob(float* planes, int h, int w, int label, int num_classes, Rng rng) {
  const double angle = 2.0 * 3.14159265358979323846 * label / num_classes;
  const double cy = h / 2.0 + 11.0 * std::sin(angle) + rng.uniform(-0.75, 0.75);
  const double cx = w / 2.0 + 11.0 * std::cos(angle) + rng.uniform(-0.75, 0.75);
  const double sigma = 2.0 + rng.uniform(0.0, 0.4);
  const double amp = 0.8 + rng.uniform(0.0, 0.4);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      const double bump = amp * std::exp(-d2 / (2.0 * sigma * sigma));
      for (int c = 0; c < 3; ++c)
        planes[c * plane + y * w + x] =
            static_cast<float>(bump + rng.normal(0.0, 0.06));
    }
}

Dataset load_synthetic(const DatasetSpec& spec) {
  const int k = declared_classes(spec.name);
  const Rng base = Rng(spec.seed).derive(spec.split == Split::train ? "synthetic-train"
                                                                    : "synthetic-test");

  std::vector<int> retained_classes;
  for (int c = 0; c < k; ++c)
    if (spec.subset.keeps(c)) retained_classes.push_back(c);
  const int per_class =
      std::max(1, static_cast<int>(std::lround(spec.synthetic_per_class * spec.ratio)));

  Dataset d;
  d.images = Tensor(static_cast<int>(retained_classes.size()) * per_class, 3, 32, 32);
  d.num_classes = k;
  d.source = spec.id();
  int out = 0;
  // Interleaved order (sample i of each class in turn) keeps every prefix
  // balanced; each sample's content depends only on (seed, split, class, i).
  for (int i = 0; i < per_class; ++i)
    for (int c : retained_classes) {
      render_blob(d.images.plane(out, 0), 32, 32, c, k,
                  base.derive(static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)));
      d.labels.push_back(c);
      ++out;
    }
  return d;
}

}  // namespace

Dataset load(const DatasetSpec& spec) {
  spec.validate();
  switch (spec.name) {
    case DatasetName::synthetic_blobs:
      return load_synthetic(spec);
    case DatasetName::cifar10:
    case DatasetName::cifar100:
      return materialize(load_cifar(spec), spec);
    case DatasetName::stl10:
      return materialize(load_stl10(spec), spec);
    case DatasetName::tiny_imagenet:
      return materialize(load_tiny_imagenet(spec), spec);
  }
  fail(ErrorKind::Config, "unhandled dataset name");
}

DatasetSpec reduce_classes(DatasetSpec spec, int n) {
  const int k = declared_classes(spec.name);
  if (n <= 0) fail(ErrorKind::Policy, "reduce_classes: n must be positive");
  if (n > k)
    fail(ErrorKind::Policy, "reduce_classes: n=" + std::to_string(n) + " exceeds the " +
                                std::to_string(k) + " declared classes");
  spec.subset.kind = ClassSubset::Kind::first_n;
  spec.subset.n = n;
  spec.subset.list.clear();
  return spec;
}

DatasetSpec held_out_complement(DatasetSpec spec, int n) {
  const int k = declared_classes(spec.name);
  if (n <= 0 || n >= k)
    fail(ErrorKind::Policy, "held_out_complement: need 0 < n < " + std::to_string(k));
  spec.split = Split::test;
  spec.subset.kind = ClassSubset::Kind::explicit_list;
  spec.subset.n = 0;
  spec.subset.list.clear();
  for (int c = n; c < k; ++c) spec.subset.list.push_back(c);
  return spec;
}

Dataset poison_labels(Dataset d, std::uint64_t seed) {
  Rng rng = Rng(seed).derive("label-poison");
  for (std::size_t i = d.labels.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(d.labels[i - 1], d.labels[j]);
  }
  d.source += " label-poisoned";
  return d;
}

Tensor augment_crop_flip(const Tensor& images, Rng& rng) {
  const int n = images.n(), c = images.c(), h = images.h(), w = images.w();
  Tensor out(n, c, h, w);
  for (int in = 0; in < n; ++in) {
    const int dy = static_cast<int>(rng.uniform_int(0, 8)) - 4;
    const int dx = static_cast<int>(rng.uniform_int(0, 8)) - 4;
    const bool flip = rng.bernoulli(0.5);
    for (int ch = 0; ch < c; ++ch) {
      const float* src = images.plane(in, ch);
      float* dst = out.plane(in, ch);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = y + dy;
          const int sx = (flip ? w - 1 - x : x) + dx;
          dst[y * w + x] =
              (sy >= 0 && sy < h && sx >= 0 && sx < w) ? src[sy * w + sx] : 0.f;
        }
    }
  }
  return out;
}

std::vector<int> class_counts(const Dataset& d) {
  std::vector<int> counts(d.num_classes, 0);
  for (int l : d.labels) ++counts[l];
  return counts;
}

}  // namespace catkd::data
