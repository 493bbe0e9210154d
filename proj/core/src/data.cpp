#include "lsanet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "lsanet/npz.hpp"
#include "lsanet/rng.hpp"

namespace lsanet {

namespace {

std::vector<double> to_doubles(const NpyArray& arr, const std::string& member) {
  std::size_t n = arr.numel();
  std::vector<double> out(n);
  if (arr.descr == "|u1") {
    for (std::size_t i = 0; i < n; ++i) out[i] = arr.bytes[i];
  } else if (arr.descr == "|i1") {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = static_cast<std::int8_t>(arr.bytes[i]);
  } else if (arr.descr == "<i4") {
    for (std::size_t i = 0; i < n; ++i) {
      std::int32_t v;
      std::memcpy(&v, arr.bytes.data() + 4 * i, 4);
      out[i] = v;
    }
  } else if (arr.descr == "<i8") {
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t v;
      std::memcpy(&v, arr.bytes.data() + 8 * i, 8);
      out[i] = static_cast<double>(v);
    }
  } else if (arr.descr == "<f4") {
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, arr.bytes.data() + 4 * i, 4);
      out[i] = v;
    }
  } else if (arr.descr == "<f8") {
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(&out[i], arr.bytes.data() + 8 * i, 8);
    }
  } else {
    throw std::runtime_error("load_medmnist: unsupported dtype '" + arr.descr +
                             "' in member " + member);
  }
  return out;
}

const NpyArray& member(const std::map<std::string, NpyArray>& npz,
                       const std::string& name, const std::string& path) {
  auto it = npz.find(name);
  if (it == npz.end()) {
    throw std::runtime_error("load_medmnist: archive " + path +
                             " is missing member " + name);
  }
  return it->second;
}

Dataset build_split(const std::map<std::string, NpyArray>& npz,
                    const std::string& prefix, Split split,
                    const std::string& path) {
  const NpyArray& img = member(npz, prefix + "_images", path);
  const NpyArray& lbl = member(npz, prefix + "_labels", path);

  if (img.shape.size() != 3 && img.shape.size() != 4) {
    throw std::runtime_error("load_medmnist: member " + prefix +
                             "_images must be [N,H,W] or [N,H,W,C]");
  }
  std::size_t n = img.shape[0], h = img.shape[1], w = img.shape[2];
  std::size_t c = img.shape.size() == 4 ? img.shape[3] : 1;
  bool is_u8 = img.descr == "|u1";
  std::vector<double> raw = to_doubles(img, prefix + "_images");

  // HWC -> CHW, uint8 -> [0,1]
  std::vector<double> chw(n * c * h * w);
  // divide rather than multiply by a reciprocal so k/255 is reproduced to
  // the last bit on round-trips
  double scale = is_u8 ? 255.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch)
          chw[((i * c + ch) * h + y) * w + x] =
              raw[((i * h + y) * w + x) * c + ch] / scale;

  std::vector<double> lv = to_doubles(lbl, prefix + "_labels");
  std::size_t ln = lbl.shape.empty() ? lv.size() : lbl.shape[0];
  if (ln != n) {
    throw std::runtime_error("load_medmnist: member " + prefix + "_labels has " +
                             std::to_string(ln) + " entries for " +
                             std::to_string(n) + " images");
  }
  Dataset ds;
  ds.split = split;
  ds.images = Tensor::from_data({n, c, h, w}, std::move(chw));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // labels may be stored [N,1]
    double v = lv[i * (lv.size() / n)];
    if (v < 0 || v != std::floor(v)) {
      throw std::runtime_error("load_medmnist: non-integral label in member " +
                               prefix + "_labels");
    }
    ds.labels[i] = static_cast<std::size_t>(v);
  }
  return ds;
}

// 1-D DCT-like basis rows; outer products give zero-mean, mutually
// orthogonal 3x3 micro-patterns.
constexpr std::array<std::array<double, 3>, 3> kBasis{{
    {1.0, 1.0, 1.0},
    {1.0, 0.0, -1.0},
    {1.0, -2.0, 1.0},
}};

// (row basis, col basis) index pairs per class; (0,0) excluded (not
// zero-mean).
constexpr std::array<std::array<int, 2>, 8> kClassBasis{{
    {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}, {2, 2},
}};

std::array<std::array<double, 3>, 3> class_pattern(std::size_t cls) {
  auto [a, b] = kClassBasis[cls];
  std::array<std::array<double, 3>, 3> p{};
  double norm = 0.0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      p[y][x] = kBasis[a][y] * kBasis[b][x];
      norm += p[y][x] * p[y][x];
    }
  norm = std::sqrt(norm);
  for (auto& row : p)
    for (auto& v : row) v /= norm;
  return p;
}

Dataset make_synthetic_split(const SyntheticParams& params, std::size_t per_class,
                             Split split, std::uint64_t seed) {
  std::size_t h = params.height, w = params.width;
  std::size_t cells_y = h / 4, cells_x = w / 4;
  std::size_t cells = cells_y * cells_x;
  if (cells == 0) {
    throw std::invalid_argument("synthetic_dataset: extents " +
                                std::to_string(h) + "x" + std::to_string(w) +
                                " too small for any template cell");
  }
  std::size_t n_patches = std::max<std::size_t>(1, cells / 2);
  std::size_t n = params.num_classes * per_class;

  Rng rng(seed);
  std::vector<double> images(n * h * w, 0.5);
  std::vector<std::size_t> labels(n);
  const double amplitude = 0.8;

  std::vector<std::size_t> cell_ids(cells);
  std::iota(cell_ids.begin(), cell_ids.end(), 0);

  std::size_t idx = 0;
  for (std::size_t cls = 0; cls < params.num_classes; ++cls) {
    auto pattern = class_pattern(cls);
    for (std::size_t s = 0; s < per_class; ++s, ++idx) {
      labels[idx] = cls;
      double* img = images.data() + idx * h * w;
      // partial Fisher-Yates for n_patches distinct cells
      for (std::size_t i = 0; i < n_patches; ++i) {
        std::size_t j = i + rng.below(cells - i);
        std::swap(cell_ids[i], cell_ids[j]);
        std::size_t oy = (cell_ids[i] / cells_x) * 4;
        std::size_t ox = (cell_ids[i] % cells_x) * 4;
        for (int py = 0; py < 3; ++py)
          for (int px = 0; px < 3; ++px)
            img[(oy + py) * w + ox + px] += amplitude * pattern[py][px];
      }
      if (params.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < h * w; ++i)
          img[i] += params.noise_sigma * rng.normal();
      }
      for (std::size_t i = 0; i < h * w; ++i)
        img[i] = std::clamp(img[i], 0.0, 1.0);
    }
  }

  Dataset ds;
  ds.split = split;
  ds.images = Tensor::from_data({n, 1, h, w}, std::move(images));
  ds.labels = std::move(labels);
  ds.num_classes = params.num_classes;
  return ds;
}

}  // namespace

DatasetBundle load_medmnist(const std::string& path) {
  auto npz = read_npz(path);
  DatasetBundle bundle;
  bundle.train = build_split(npz, "train", Split::kTrain, path);
  bundle.val = build_split(npz, "val", Split::kVal, path);
  bundle.test = build_split(npz, "test", Split::kTest, path);

  std::size_t num_classes = 0;
  for (const Dataset* ds : {&bundle.train, &bundle.val, &bundle.test}) {
    for (auto l : ds->labels) num_classes = std::max(num_classes, l + 1);
  }
  bundle.train.num_classes = num_classes;
  bundle.val.num_classes = num_classes;
  bundle.test.num_classes = num_classes;
  return bundle;
}

SyntheticBundle synthetic_dataset(const SyntheticParams& params) {
  if (params.num_classes < 2) {
    throw std::invalid_argument("synthetic_dataset: need at least 2 classes");
  }
  if (params.num_classes > kClassBasis.size()) {
    throw std::invalid_argument("synthetic_dataset: at most " +
                                std::to_string(kClassBasis.size()) +
                                " template classes available");
  }
  SyntheticBundle bundle;
  bundle.train = make_synthetic_split(params, params.n_per_class, Split::kTrain,
                                      mix_seed(params.seed, 0));
  std::size_t test_per_class = std::max<std::size_t>(1, params.n_per_class / 4);
  bundle.test = make_synthetic_split(params, test_per_class, Split::kTest,
                                     mix_seed(params.seed, 1));
  return bundle;
}

std::vector<Batch> batches(const Dataset& dataset, const BatchPlan& plan,
                           std::size_t epoch) {
  if (plan.batch_size < 1) {
    throw std::invalid_argument("batches: batch_size must be >= 1");
  }
  std::size_t n = dataset.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(plan.seed, epoch));
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }

  const Shape& is = dataset.images.shape();
  std::size_t sample = is[1] * is[2] * is[3];
  std::vector<Batch> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    std::size_t end = std::min(n, start + plan.batch_size);
    if (plan.drop_last && end - start < plan.batch_size) break;
    Batch b;
    std::vector<double> data((end - start) * sample);
    for (std::size_t i = start; i < end; ++i) {
      std::size_t src = perm[i];
      std::copy(dataset.images.data().begin() + src * sample,
                dataset.images.data().begin() + (src + 1) * sample,
                data.begin() + (i - start) * sample);
      b.labels.push_back(dataset.labels[src]);
      b.indices.push_back(src);
    }
    b.images = Tensor::from_data({end - start, is[1], is[2], is[3]},
                                 std::move(data));
    out.push_back(std::move(b));
  }
  return out;
}

void write_medmnist(const std::string& path, const DatasetBundle& bundle) {
  std::map<std::string, NpyArray> entries;
  auto put = [&](const std::string& prefix, const Dataset& ds) {
    const Shape& s = ds.images.shape();
    std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
    std::vector<std::uint8_t> px(n * h * w * c);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) {
            double v = ds.images.data()[((i * c + ch) * h + y) * w + x];
            px[((i * h + y) * w + x) * c + ch] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
          }
    std::vector<std::size_t> ishape =
        c == 1 ? std::vector<std::size_t>{n, h, w}
               : std::vector<std::size_t>{n, h, w, c};
    entries[prefix + "_images"] = make_npy_u8(ishape, std::move(px));
    std::vector<std::uint8_t> lb(n);
    for (std::size_t i = 0; i < n; ++i)
      lb[i] = static_cast<std::uint8_t>(ds.labels[i]);
    entries[prefix + "_labels"] = make_npy_u8({n}, std::move(lb));
  };
  put("train", bundle.train);
  put("val", bundle.val);
  put("test", bundle.test);
  write_npz(path, entries);
}

}  // namespace lsanet
