#include "lsanet/nn.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "lsanet/rng.hpp"

namespace lsanet {

namespace {

constexpr char kMagic[8] = {'L', 'S', 'A', 'C', 'K', 'P', 'T', '\0'};

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  // relu-gain fan-in scaling; keeps activation variance stable through the
  // unnormalized conv stack
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

void BackboneSpec::validate() const {
  for (int s = 1; s < 4; ++s) {
    if (channels[s] < channels[s - 1]) {
      throw std::invalid_argument(
          "BackboneSpec: channel count must be non-decreasing, got " +
          std::to_string(channels[s - 1]) + " -> " + std::to_string(channels[s]) +
          " at stage " + std::to_string(s + 1));
    }
  }
  auto eh = stage_extents_h();
  auto ew = stage_extents_w();
  if (eh[3] == 0 || ew[3] == 0) {
    throw std::invalid_argument("BackboneSpec: input extent " +
                                std::to_string(input_h) + "x" +
                                std::to_string(input_w) +
                                " collapses to zero at stage 4");
  }
}

std::array<std::size_t, 4> BackboneSpec::stage_extents_h() const {
  std::array<std::size_t, 4> e{};
  std::size_t h = input_h;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) h = h >= 2 ? (h - 2) / 2 + 1 : 0;
    e[s] = h;
  }
  return e;
}

std::array<std::size_t, 4> BackboneSpec::stage_extents_w() const {
  std::array<std::size_t, 4> e{};
  std::size_t w = input_w;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) w = w >= 2 ? (w - 2) / 2 + 1 : 0;
    e[s] = w;
  }
  return e;
}

std::size_t BackboneSpec::param_count() const {
  std::size_t total = 0;
  std::size_t cin = in_channels;
  for (int s = 0; s < 4; ++s) {
    std::size_t c = channels[s];
    total += c * cin * 9 + c;  // conv_a
    total += c * c * 9 + c;    // conv_b
    cin = c;
  }
  return total;
}

std::vector<Tensor> Backbone::parameters() const {
  std::vector<Tensor> out;
  for (int s = 0; s < 4; ++s) {
    out.push_back(conv_a[s].kernel);
    out.push_back(conv_a[s].bias);
    out.push_back(conv_b[s].kernel);
    out.push_back(conv_b[s].bias);
  }
  return out;
}

std::pair<Backbone, std::vector<ClassifierHead>> build_backbone(
    const BackboneSpec& spec, std::size_t num_classes,
    const std::vector<std::size_t>& head_stages, std::uint64_t seed) {
  spec.validate();
  if (head_stages.empty() ||
      std::find(head_stages.begin(), head_stages.end(), 4) == head_stages.end()) {
    throw std::invalid_argument(
        "build_backbone: head subset must contain the final classifier (4)");
  }
  if (!std::is_sorted(head_stages.begin(), head_stages.end()) ||
      std::adjacent_find(head_stages.begin(), head_stages.end()) !=
          head_stages.end()) {
    throw std::invalid_argument(
        "build_backbone: head subset must be strictly ascending");
  }
  for (auto s : head_stages) {
    if (s < 1 || s > 4) {
      throw std::invalid_argument("build_backbone: head stage " +
                                  std::to_string(s) + " out of range 1..4");
    }
  }

  Rng rng(seed);
  Backbone net;
  net.spec = spec;
  std::size_t cin = spec.in_channels;
  for (int s = 0; s < 4; ++s) {
    std::size_t c = spec.channels[s];
    net.conv_a[s].kernel = init_uniform({c, cin, 3, 3}, cin * 9, rng);
    net.conv_a[s].bias = Tensor::zeros({c}, true);
    net.conv_b[s].kernel = init_uniform({c, c, 3, 3}, c * 9, rng);
    net.conv_b[s].bias = Tensor::zeros({c}, true);
    cin = c;
  }

  std::vector<ClassifierHead> heads;
  for (auto s : head_stages) {
    ClassifierHead head;
    head.stage = s;
    std::size_t cs = spec.channels[s - 1];
    // per-stage stream: a head's init does not depend on which other heads
    // exist, so head subsets share the final classifier bit-for-bit
    Rng head_rng(mix_seed(seed, 1000 + s));
    head.weight = init_uniform({cs, num_classes}, cs, head_rng);
    head.bias = Tensor::zeros({num_classes}, true);
    heads.push_back(head);
  }
  return {net, heads};
}

StageFeatures forward_with_taps(Graph& g, const Backbone& net,
                                const Tensor& batch) {
  if (batch.ndim() != 4 || batch.shape()[1] != net.spec.in_channels ||
      batch.shape()[2] != net.spec.input_h ||
      batch.shape()[3] != net.spec.input_w) {
    throw std::invalid_argument(
        "forward_with_taps: batch shape " + shape_str(batch.shape()) +
        " does not match spec input [N," + std::to_string(net.spec.in_channels) +
        "," + std::to_string(net.spec.input_h) + "," +
        std::to_string(net.spec.input_w) + "]");
  }
  StageFeatures feats;
  Tensor x = batch;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) x = g.maxpool2d(x, 2, 2);
    Tensor a = g.relu(g.conv2d(x, net.conv_a[s].kernel, net.conv_a[s].bias, 1, 1));
    Tensor b = g.conv2d(a, net.conv_b[s].kernel, net.conv_b[s].bias, 1, 1);
    if (net.spec.shortcut) b = g.add(b, a);
    x = g.relu(b);
    feats.maps[s] = x;
  }
  return feats;
}

Tensor classify(Graph& g, const ClassifierHead& head, const Tensor& feature) {
  if (feature.ndim() != 4 || feature.shape()[1] != head.weight.shape()[0]) {
    throw std::invalid_argument("classify: feature " + shape_str(feature.shape()) +
                                " incompatible with head weight " +
                                shape_str(head.weight.shape()));
  }
  Tensor pooled = g.global_avg_pool(feature);
  Tensor logits = g.dense(pooled, head.weight, head.bias);
  return g.softmax(logits, 1);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = 1;
  header["spec"] = {{"channels", ckpt.spec.channels},
                    {"in_channels", ckpt.spec.in_channels},
                    {"input_h", ckpt.spec.input_h},
                    {"input_w", ckpt.spec.input_w},
                    {"shortcut", ckpt.spec.shortcut}};
  header["head_stages"] = ckpt.head_stages;
  header["num_classes"] = ckpt.num_classes;
  header["seed"] = ckpt.seed;
  header["epoch"] = ckpt.epoch;
  std::vector<std::vector<std::size_t>> shapes;
  for (const auto& p : ckpt.params) shapes.push_back(p.shape());
  header["shapes"] = shapes;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : ckpt.params) {
    f.write(reinterpret_cast<const char*>(p.data().data()),
            static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  Checkpoint ckpt;
  const auto& sp = header.at("spec");
  auto ch = sp.at("channels").get<std::vector<std::size_t>>();
  std::copy_n(ch.begin(), 4, ckpt.spec.channels.begin());
  ckpt.spec.in_channels = sp.at("in_channels").get<std::size_t>();
  ckpt.spec.input_h = sp.at("input_h").get<std::size_t>();
  ckpt.spec.input_w = sp.at("input_w").get<std::size_t>();
  ckpt.spec.shortcut = sp.at("shortcut").get<bool>();
  ckpt.head_stages = header.at("head_stages").get<std::vector<std::size_t>>();
  ckpt.num_classes = header.at("num_classes").get<std::size_t>();
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.epoch = header.at("epoch").get<std::size_t>();

  for (const auto& js : header.at("shapes")) {
    Shape shape = js.get<Shape>();
    std::vector<double> data(numel(shape));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated data in " + path);
    ckpt.params.push_back(Tensor::from_data(std::move(shape), std::move(data), true));
  }
  return ckpt;
}

}  // namespace lsanet
