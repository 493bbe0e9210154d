#include "lsanet/tensor.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace lsanet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

void check_finite(const Tensor& t, const char* op) {
#ifndef NDEBUG
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(op) +
                               ": non-finite value in forward output");
    }
  }
#else
  (void)t;
  (void)op;
#endif
}

void accumulate(const Tensor& t, const std::vector<double>& g) {
  auto& dst = t.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (numel(shape) != data.size()) {
    shape_error("Tensor::from_data", "shape " + shape_str(shape) +
                                         " does not match data length " +
                                         std::to_string(data.size()));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
}

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor is not scalar, shape " +
                                shape_str(impl_->shape));
  }
  return impl_->data[0];
}

Tensor Graph::make(Shape shape, std::vector<double> data, bool requires_grad) {
  Tensor t = Tensor::from_data(std::move(shape), std::move(data), requires_grad);
  t.set_node_id(static_cast<std::int64_t>(tape_.size()));
  return t;
}

void Graph::record(std::function<void()> backward_fn) {
  tape_.push_back(std::move(backward_fn));
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error("add", "shapes differ: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make(a.shape(), std::move(out), rg);
  check_finite(y, "add");
  if (rg) {
    record([a, b, y]() mutable {
      if (a.requires_grad()) accumulate(a, y.grad());
      if (b.requires_grad()) accumulate(b, y.grad());
    });
  }
  return y;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error("mul", "shapes differ: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make(a.shape(), std::move(out), rg);
  check_finite(y, "mul");
  if (rg) {
    record([a, b, y]() mutable {
      const auto& gy = y.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * a.data()[i];
      }
    });
  }
  return y;
}

Tensor Graph::scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  bool rg = a.requires_grad();
  Tensor y = make(a.shape(), std::move(out), rg);
  check_finite(y, "scale");
  if (rg) {
    record([a, y, c]() mutable {
      auto& ga = a.grad();
      const auto& gy = y.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * c;
    });
  }
  return y;
}

Tensor Graph::relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  bool rg = x.requires_grad();
  Tensor y = make(x.shape(), std::move(out), rg);
  if (rg) {
    // subgradient at 0 is 0
    record([x, y]() mutable {
      auto& gx = x.grad();
      const auto& gy = y.grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (x.data()[i] > 0.0) gx[i] += gy[i];
    });
  }
  return y;
}

Tensor Graph::sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  bool rg = x.requires_grad();
  Tensor y = make(x.shape(), std::move(out), rg);
  check_finite(y, "sigmoid");
  if (rg) {
    record([x, y]() mutable {
      auto& gx = x.grad();
      const auto& gy = y.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        double s = y.data()[i];
        gx[i] += gy[i] * s * (1.0 - s);
      }
    });
  }
  return y;
}

Tensor Graph::softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.ndim()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " invalid for shape " + shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t axis_len = s[axis];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  std::size_t outer = x.size() / (axis_len * inner);

  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * axis_len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < axis_len; ++j)
        mx = std::max(mx, x.data()[base + j * inner]);
      double sum = 0.0;
      for (std::size_t j = 0; j < axis_len; ++j) {
        double e = std::exp(x.data()[base + j * inner] - mx);
        out[base + j * inner] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < axis_len; ++j) out[base + j * inner] /= sum;
    }
  }
  bool rg = x.requires_grad();
  Tensor y = make(x.shape(), std::move(out), rg);
  check_finite(y, "softmax");
  if (rg) {
    record([x, y, axis_len, inner, outer]() mutable {
      auto& gx = x.grad();
      const auto& gy = y.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          std::size_t base = o * axis_len * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < axis_len; ++j) {
            std::size_t idx = base + j * inner;
            dot += gy[idx] * y.data()[idx];
          }
          for (std::size_t j = 0; j < axis_len; ++j) {
            std::size_t idx = base + j * inner;
            gx[idx] += y.data()[idx] * (gy[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor Graph::dense(const Tensor& input, const Tensor& weight,
                    const Tensor& bias) {
  if (input.ndim() != 2 || weight.ndim() != 2 || bias.ndim() != 1 ||
      input.shape()[1] != weight.shape()[0] ||
      weight.shape()[1] != bias.shape()[0]) {
    shape_error("dense", "input " + shape_str(input.shape()) + ", weight " +
                             shape_str(weight.shape()) + ", bias " +
                             shape_str(bias.shape()));
  }
  std::size_t n = input.shape()[0], d = input.shape()[1], k = weight.shape()[1];
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = bias.data()[j];
    for (std::size_t m = 0; m < d; ++m) {
      double xv = input.data()[i * d + m];
      for (std::size_t j = 0; j < k; ++j)
        out[i * k + j] += xv * weight.data()[m * k + j];
    }
  }
  bool rg = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
  Tensor y = make({n, k}, std::move(out), rg);
  check_finite(y, "dense");
  if (rg) {
    record([input, weight, bias, y, n, d, k]() mutable {
      const auto& gy = y.grad();
      if (input.requires_grad()) {
        auto& gx = input.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t m = 0; m < d; ++m) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j)
              acc += gy[i * k + j] * weight.data()[m * k + j];
            gx[i * d + m] += acc;
          }
      }
      if (weight.requires_grad()) {
        auto& gw = weight.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t m = 0; m < d; ++m) {
            double xv = input.data()[i * d + m];
            for (std::size_t j = 0; j < k; ++j)
              gw[m * k + j] += xv * gy[i * k + j];
          }
      }
      if (bias.requires_grad()) {
        auto& gb = bias.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j) gb[j] += gy[i * k + j];
      }
    });
  }
  return y;
}

Tensor Graph::linear_nt(const Tensor& input, const Tensor& weight) {
  if (input.ndim() != 2 || weight.ndim() != 2 ||
      input.shape()[1] != weight.shape()[1]) {
    shape_error("linear_nt", "input " + shape_str(input.shape()) +
                                 ", weight " + shape_str(weight.shape()));
  }
  std::size_t n = input.shape()[0], d = input.shape()[1], k = weight.shape()[0];
  std::vector<double> out(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < d; ++m)
        acc += input.data()[i * d + m] * weight.data()[j * d + m];
      out[i * k + j] = acc;
    }
  bool rg = input.requires_grad() || weight.requires_grad();
  Tensor y = make({n, k}, std::move(out), rg);
  check_finite(y, "linear_nt");
  if (rg) {
    record([input, weight, y, n, d, k]() mutable {
      const auto& gy = y.grad();
      if (input.requires_grad()) {
        auto& gx = input.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t m = 0; m < d; ++m) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j)
              acc += gy[i * k + j] * weight.data()[j * d + m];
            gx[i * d + m] += acc;
          }
      }
      if (weight.requires_grad()) {
        auto& gw = weight.grad();
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t m = 0; m < d; ++m) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
              acc += gy[i * k + j] * input.data()[i * d + m];
            gw[j * d + m] += acc;
          }
      }
    });
  }
  return y;
}

Tensor Graph::conv2d(const Tensor& input, const Tensor& kernel,
                     const Tensor& bias, std::size_t stride,
                     std::size_t padding) {
  if (input.ndim() != 4 || kernel.ndim() != 4 || bias.ndim() != 1) {
    shape_error("conv2d", "expected input [N,C,H,W], kernel [O,C,k,k], bias "
                          "[O]; got input " +
                              shape_str(input.shape()) + ", kernel " +
                              shape_str(kernel.shape()));
  }
  std::size_t n = input.shape()[0], c = input.shape()[1], h = input.shape()[2],
              w = input.shape()[3];
  std::size_t co = kernel.shape()[0], ck = kernel.shape()[1],
              kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (ck != c) {
    shape_error("conv2d", "kernel input channels " + std::to_string(ck) +
                              " != input channels " + std::to_string(c));
  }
  if (kh != kw) shape_error("conv2d", "only square kernels supported");
  if (bias.shape()[0] != co) {
    shape_error("conv2d", "bias length " + std::to_string(bias.shape()[0]) +
                              " != output channels " + std::to_string(co));
  }
  if (stride == 0) shape_error("conv2d", "stride must be positive");
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    shape_error("conv2d", "kernel " + std::to_string(kh) +
                              " exceeds padded extent " +
                              std::to_string(h + 2 * padding) + "x" +
                              std::to_string(w + 2 * padding));
  }
  std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  if (ho == 0 || wo == 0) {
    throw std::invalid_argument("conv2d: empty output extent " +
                                std::to_string(ho) + "x" + std::to_string(wo));
  }

  std::vector<double> out(n * co * ho * wo);
  const auto& xd = input.data();
  const auto& kd = kernel.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < co; ++o) {
      double bv = bias.data()[o];
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = bv;
          std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * stride) -
                               static_cast<std::ptrdiff_t>(padding);
          std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * stride) -
                               static_cast<std::ptrdiff_t>(padding);
          for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += xd[((b * c + ci) * h + iy) * w + ix] *
                       kd[((o * c + ci) * kh + ky) * kw + kx];
              }
            }
          }
          out[((b * co + o) * ho + oy) * wo + ox] = acc;
        }
      }
    }
  }
  bool rg = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  Tensor y = make({n, co, ho, wo}, std::move(out), rg);
  check_finite(y, "conv2d");
  if (rg) {
    record([input, kernel, bias, y, n, c, h, w, co, kh, kw, ho, wo, stride,
            padding]() mutable {
      const auto& gy = y.grad();
      const auto& xd = input.data();
      const auto& kd = kernel.data();
      bool gx_on = input.requires_grad();
      bool gk_on = kernel.requires_grad();
      std::vector<double>* gx = gx_on ? &input.grad() : nullptr;
      std::vector<double>* gk = gk_on ? &kernel.grad() : nullptr;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t o = 0; o < co; ++o) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
              double g = gy[((b * co + o) * ho + oy) * wo + ox];
              if (g == 0.0) continue;
              std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                   static_cast<std::ptrdiff_t>(padding);
              std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                   static_cast<std::ptrdiff_t>(padding);
              for (std::size_t ci = 0; ci < c; ++ci) {
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    std::size_t xi = ((b * c + ci) * h + iy) * w + ix;
                    std::size_t ki = ((o * c + ci) * kh + ky) * kw + kx;
                    if (gx_on) (*gx)[xi] += g * kd[ki];
                    if (gk_on) (*gk)[ki] += g * xd[xi];
                  }
                }
              }
            }
          }
        }
      }
      if (bias.requires_grad()) {
        auto& gb = bias.grad();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t s = 0; s < ho * wo; ++s)
              gb[o] += gy[(b * co + o) * ho * wo + s];
      }
    });
  }
  return y;
}

Tensor Graph::maxpool2d(const Tensor& input, std::size_t k, std::size_t stride) {
  if (input.ndim() != 4) {
    shape_error("maxpool2d", "expected [N,C,H,W], got " +
                                 shape_str(input.shape()));
  }
  std::size_t n = input.shape()[0], c = input.shape()[1], h = input.shape()[2],
              w = input.shape()[3];
  if (k == 0 || stride == 0) shape_error("maxpool2d", "k and stride must be positive");
  if (k > h || k > w) {
    shape_error("maxpool2d", "window " + std::to_string(k) +
                                 " exceeds extent " + std::to_string(h) + "x" +
                                 std::to_string(w));
  }
  std::size_t ho = (h - k) / stride + 1;
  std::size_t wo = (w - k) / stride + 1;
  std::vector<double> out(n * c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xd = input.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              std::size_t xi =
                  ((b * c + ci) * h + oy * stride + ky) * w + ox * stride + kx;
              // ties broken by lowest flat index
              if (xd[xi] > best) {
                best = xd[xi];
                best_idx = xi;
              }
            }
          std::size_t yi = ((b * c + ci) * ho + oy) * wo + ox;
          out[yi] = best;
          (*argmax)[yi] = best_idx;
        }
  bool rg = input.requires_grad();
  Tensor y = make({n, c, ho, wo}, std::move(out), rg);
  if (rg) {
    record([input, y, argmax]() mutable {
      auto& gx = input.grad();
      const auto& gy = y.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[(*argmax)[i]] += gy[i];
    });
  }
  return y;
}

Tensor Graph::global_avg_pool(const Tensor& input) {
  if (input.ndim() != 4) {
    shape_error("global_avg_pool", "expected [N,C,H,W], got " +
                                       shape_str(input.shape()));
  }
  std::size_t n = input.shape()[0], c = input.shape()[1], h = input.shape()[2],
              w = input.shape()[3];
  if (h == 0 || w == 0) {
    throw std::invalid_argument("global_avg_pool: empty spatial extent " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  std::size_t plane = h * w;
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < plane; ++s) acc += input.data()[i * plane + s];
    out[i] = acc / static_cast<double>(plane);
  }
  bool rg = input.requires_grad();
  Tensor y = make({n, c}, std::move(out), rg);
  check_finite(y, "global_avg_pool");
  if (rg) {
    record([input, y, plane]() mutable {
      auto& gx = input.grad();
      const auto& gy = y.grad();
      double inv = 1.0 / static_cast<double>(plane);
      for (std::size_t i = 0; i < gy.size(); ++i)
        for (std::size_t s = 0; s < plane; ++s) gx[i * plane + s] += gy[i] * inv;
    });
  }
  return y;
}

Tensor Graph::sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  bool rg = x.requires_grad();
  Tensor y = make({}, {acc}, rg);
  if (rg) {
    record([x, y]() mutable {
      auto& gx = x.grad();
      double g = y.grad()[0];
      for (auto& v : gx) v += g;
    });
  }
  return y;
}

Tensor Graph::mean_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  double inv = 1.0 / static_cast<double>(x.size());
  bool rg = x.requires_grad();
  Tensor y = make({}, {acc * inv}, rg);
  if (rg) {
    record([x, y, inv]() mutable {
      auto& gx = x.grad();
      double g = y.grad()[0] * inv;
      for (auto& v : gx) v += g;
    });
  }
  return y;
}

Tensor Graph::concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) shape_error("concat_channels", "no inputs");
  std::size_t n = xs[0].shape()[0], h = xs[0].shape()[2], w = xs[0].shape()[3];
  std::size_t ctotal = 0;
  for (const auto& x : xs) {
    if (x.ndim() != 4 || x.shape()[0] != n || x.shape()[2] != h ||
        x.shape()[3] != w) {
      shape_error("concat_channels", "incompatible input " +
                                         shape_str(x.shape()) + " vs " +
                                         shape_str(xs[0].shape()));
    }
    ctotal += x.shape()[1];
  }
  std::size_t plane = h * w;
  std::vector<double> out(n * ctotal * plane);
  std::size_t coff = 0;
  for (const auto& x : xs) {
    std::size_t c = x.shape()[1];
    for (std::size_t b = 0; b < n; ++b) {
      std::copy(x.data().begin() + b * c * plane,
                x.data().begin() + (b + 1) * c * plane,
                out.begin() + (b * ctotal + coff) * plane);
    }
    coff += c;
  }
  bool rg = false;
  for (const auto& x : xs) rg = rg || x.requires_grad();
  Tensor y = make({n, ctotal, h, w}, std::move(out), rg);
  if (rg) {
    std::vector<Tensor> inputs(xs.begin(), xs.end());
    record([inputs, y, n, ctotal, plane]() mutable {
      const auto& gy = y.grad();
      std::size_t coff = 0;
      for (auto& x : inputs) {
        std::size_t c = x.shape()[1];
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < c * plane; ++i)
              gx[b * c * plane + i] += gy[(b * ctotal + coff) * plane + i];
        }
        coff += c;
      }
    });
  }
  return y;
}

Tensor Graph::slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.ndim() != 2 || begin >= end || end > x.shape()[1]) {
    shape_error("slice_cols", "range [" + std::to_string(begin) + "," +
                                  std::to_string(end) + ") invalid for " +
                                  shape_str(x.shape()));
  }
  std::size_t n = x.shape()[0], d = x.shape()[1], k = end - begin;
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = x.data()[i * d + begin + j];
  bool rg = x.requires_grad();
  Tensor y = make({n, k}, std::move(out), rg);
  if (rg) {
    record([x, y, n, d, k, begin]() mutable {
      auto& gx = x.grad();
      const auto& gy = y.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) gx[i * d + begin + j] += gy[i * k + j];
    });
  }
  return y;
}

Tensor Graph::stack_scalars(std::span<const Tensor> xs) {
  if (xs.empty()) shape_error("stack_scalars", "no inputs");
  std::vector<double> out(xs.size());
  bool rg = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = xs[i].item();
    rg = rg || xs[i].requires_grad();
  }
  Tensor y = make({xs.size()}, std::move(out), rg);
  if (rg) {
    std::vector<Tensor> inputs(xs.begin(), xs.end());
    record([inputs, y]() mutable {
      const auto& gy = y.grad();
      for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i].requires_grad()) inputs[i].grad()[0] += gy[i];
    });
  }
  return y;
}

Tensor Graph::index(const Tensor& x, std::size_t i) {
  if (x.ndim() != 1 || i >= x.shape()[0]) {
    shape_error("index", "index " + std::to_string(i) + " invalid for " +
                             shape_str(x.shape()));
  }
  bool rg = x.requires_grad();
  Tensor y = make({}, {x.data()[i]}, rg);
  if (rg) {
    record([x, y, i]() mutable { x.grad()[i] += y.grad()[0]; });
  }
  return y;
}

Tensor Graph::detach(const Tensor& x) {
  return make(x.shape(), x.data(), false);
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  Tensor l = loss;
  l.grad()[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  tape_.clear();
}

}  // namespace lsanet
