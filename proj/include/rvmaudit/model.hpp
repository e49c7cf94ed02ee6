#pragma once

// Compact convolutional binary classifier.
//
// Each block is conv(k x k, same padding) + bias -> ReLU -> mean-pool(p x p,
// stride p). The last block is followed by a global spatial mean and a single
// logistic unit. All arithmetic is float64; reductions run in a fixed order,
// so results are reproducible bit-for-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rvmaudit/image.hpp"
#include "rvmaudit/rng.hpp"

namespace rvm {

class ShapeError : public Error {
public:
  using Error::Error;
};

struct ArchDescriptor {
  int input_size = 224;
  std::vector<int> channels = {8, 16, 32, 64};
  int kernel = 3;
  int pool = 2;

  void validate() const {
    if (channels.empty()) throw ShapeError("architecture needs at least one conv block");
    for (int c : channels)
      if (c < 1) throw ShapeError("channel widths must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ShapeError("kernel size must be odd and positive");
    if (pool < 1) throw ShapeError("pool size must be positive");
    int s = input_size;
    for (std::size_t i = 0; i < channels.size(); ++i) s /= pool;
    if (input_size < 1 || s < 1)
      throw ShapeError("input size " + std::to_string(input_size) + " is too small for " +
                       std::to_string(channels.size()) + " pooling stages");
  }

  /// Spatial side length entering block `i` (i == size() gives the final map).
  [[nodiscard]] int side(std::size_t i) const {
    int s = input_size;
    for (std::size_t k = 0; k < i; ++k) s /= pool;
    return s;
  }

  [[nodiscard]] std::string to_text() const {
    std::ostringstream os;
    os << "cnn/v1 input=" << input_size << " kernel=" << kernel << " pool=" << pool
       << " channels=";
    for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
    return os.str();
  }

  static ArchDescriptor parse(const std::string& text) {
    std::istringstream is(text);
    std::string tok;
    is >> tok;
    if (tok != "cnn/v1") throw ShapeError("unknown architecture tag '" + tok + "'");
    ArchDescriptor d;
    d.channels.clear();
    bool have_channels = false;
    while (is >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw ShapeError("malformed descriptor token '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      try {
        if (key == "input") {
          d.input_size = std::stoi(val);
        } else if (key == "kernel") {
          d.kernel = std::stoi(val);
        } else if (key == "pool") {
          d.pool = std::stoi(val);
        } else if (key == "channels") {
          std::istringstream cs(val);
          std::string c;
          while (std::getline(cs, c, ',')) d.channels.push_back(std::stoi(c));
          have_channels = true;
        } else {
          throw ShapeError("unknown descriptor key '" + key + "'");
        }
      } catch (const std::logic_error&) {
        throw ShapeError("bad value in descriptor token '" + tok + "'");
      }
    }
    if (!have_channels) throw ShapeError("descriptor lacks channels");
    d.validate();
    return d;
  }

  friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

struct TensorSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Parameter tensors in storage order: conv{i}.weight [out][in][k][k],
/// conv{i}.bias [out], ..., fc.weight [C_last], fc.bias [1].
inline std::vector<TensorSlice> parameter_layout(const ArchDescriptor& arch) {
  std::vector<TensorSlice> out;
  std::size_t off = 0;
  int in_c = 1;
  const auto k2 = static_cast<std::size_t>(arch.kernel) * arch.kernel;
  for (std::size_t i = 0; i < arch.channels.size(); ++i) {
    const auto oc = static_cast<std::size_t>(arch.channels[i]);
    out.push_back({"conv" + std::to_string(i) + ".weight", off, oc * in_c * k2});
    off += out.back().size;
    out.push_back({"conv" + std::to_string(i) + ".bias", off, oc});
    off += oc;
    in_c = arch.channels[i];
  }
  out.push_back({"fc.weight", off, static_cast<std::size_t>(in_c)});
  off += in_c;
  out.push_back({"fc.bias", off, 1});
  return out;
}

inline std::size_t parameter_count(const ArchDescriptor& arch) {
  const auto l = parameter_layout(arch);
  return l.back().offset + l.back().size;
}

struct ClassifierParams {
  ArchDescriptor arch;
  std::vector<double> values;

  [[nodiscard]] ClassifierParams zeros_like() const {
    return {arch, std::vector<double>(values.size(), 0.0)};
  }

  [[nodiscard]] bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

/// He-style symmetric uniform initialization: weights drawn from
/// U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)); biases start at zero.
inline ClassifierParams build_model(const ArchDescriptor& arch, std::uint64_t seed) {
  arch.validate();
  ClassifierParams p{arch, std::vector<double>(parameter_count(arch), 0.0)};
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  int in_c = 1;
  const auto layout = parameter_layout(arch);
  for (std::size_t i = 0; i <= arch.channels.size(); ++i) {
    const auto& w = layout[2 * i];
    const double fan_in = i < arch.channels.size()
                              ? static_cast<double>(in_c) * arch.kernel * arch.kernel
                              : static_cast<double>(in_c);
    const double bound = std::sqrt(6.0 / fan_in);
    for (std::size_t j = 0; j < w.size; ++j) p.values[w.offset + j] = rng.uniform(-bound, bound);
    if (i < arch.channels.size()) in_c = arch.channels[i];
  }
  return p;
}

/// Network input: side x side intensities, row-major, typically PIV/255.
using Sample = std::vector<double>;

inline Sample to_sample(const GrayImage& img) {
  Sample s(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) s[i] = img.pixels[i] / 255.0;
  return s;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

namespace model_detail {

// Activations kept for the backward pass.
struct Workspace {
  std::vector<std::vector<double>> inputs;   // input of each block
  std::vector<std::vector<double>> preacts;  // conv output + bias, per block
  std::vector<double> pooled;                // global mean features
  std::vector<double> grad_a;
  std::vector<double> grad_z;
  std::vector<double> grad_in;
};

inline void conv_forward(const double* in, int in_c, int side, const double* w, const double* b,
                         int out_c, int k, double* out) {
  const int r = k / 2;
  const auto plane = static_cast<std::size_t>(side) * side;
  for (int co = 0; co < out_c; ++co) {
    double* o = out + co * plane;
    std::fill(o, o + plane, b[co]);
    for (int ci = 0; ci < in_c; ++ci) {
      const double* src = in + ci * plane;
      const double* wk = w + (static_cast<std::size_t>(co) * in_c + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - r;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(side, side - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - r;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(side, side - dx);
          const double wv = wk[ky * k + kx];
          for (int y = y0; y < y1; ++y) {
            double* orow = o + static_cast<std::size_t>(y) * side;
            const double* irow = src + static_cast<std::size_t>(y + dy) * side + dx;
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// grad_w/grad_b accumulate; grad_in (if non-null) is overwritten.
inline void conv_backward(const double* in, int in_c, int side, const double* w, int out_c, int k,
                          const double* grad_out, double* grad_w, double* grad_b, double* grad_in) {
  const int r = k / 2;
  const auto plane = static_cast<std::size_t>(side) * side;
  if (grad_in) std::fill(grad_in, grad_in + plane * in_c, 0.0);
  for (int co = 0; co < out_c; ++co) {
    const double* g = grad_out + co * plane;
    double gb = 0.0;
    for (std::size_t i = 0; i < plane; ++i) gb += g[i];
    grad_b[co] += gb;
    for (int ci = 0; ci < in_c; ++ci) {
      const double* src = in + ci * plane;
      double* gin = grad_in ? grad_in + ci * plane : nullptr;
      const std::size_t widx = (static_cast<std::size_t>(co) * in_c + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - r;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(side, side - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - r;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(side, side - dx);
          const double wv = w[widx + ky * k + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * side;
            const double* irow = src + static_cast<std::size_t>(y + dy) * side + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (gin) {
              double* girow = gin + static_cast<std::size_t>(y + dy) * side + dx;
              for (int x = x0; x < x1; ++x) girow[x] += wv * grow[x];
            }
          }
          grad_w[widx + ky * k + kx] += acc;
        }
      }
    }
  }
}

inline void relu_pool_forward(const double* z, int c, int side, int pool, double* out) {
  const int os = side / pool;
  const double inv = 1.0 / (pool * pool);
  const auto plane = static_cast<std::size_t>(side) * side;
  const auto oplane = static_cast<std::size_t>(os) * os;
  for (int ch = 0; ch < c; ++ch) {
    const double* zc = z + ch * plane;
    double* oc = out + ch * oplane;
    for (int oy = 0; oy < os; ++oy)
      for (int ox = 0; ox < os; ++ox) {
        double s = 0.0;
        for (int py = 0; py < pool; ++py)
          for (int px = 0; px < pool; ++px)
            s += std::max(0.0, zc[static_cast<std::size_t>(oy * pool + py) * side + ox * pool + px]);
        oc[static_cast<std::size_t>(oy) * os + ox] = s * inv;
      }
  }
}

inline void relu_pool_backward(const double* z, int c, int side, int pool, const double* grad_out,
                               double* grad_z) {
  const int os = side / pool;
  const double inv = 1.0 / (pool * pool);
  const auto plane = static_cast<std::size_t>(side) * side;
  const auto oplane = static_cast<std::size_t>(os) * os;
  std::fill(grad_z, grad_z + plane * c, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* zc = z + ch * plane;
    const double* gc = grad_out + ch * oplane;
    double* gz = grad_z + ch * plane;
    for (int oy = 0; oy < os; ++oy)
      for (int ox = 0; ox < os; ++ox) {
        const double g = gc[static_cast<std::size_t>(oy) * os + ox] * inv;
        for (int py = 0; py < pool; ++py)
          for (int px = 0; px < pool; ++px) {
            const auto idx = static_cast<std::size_t>(oy * pool + py) * side + ox * pool + px;
            if (zc[idx] > 0.0) gz[idx] = g;
          }
      }
  }
}

inline double forward_one(const ClassifierParams& p, const std::vector<TensorSlice>& layout,
                          const Sample& input, Workspace& ws) {
  const auto& arch = p.arch;
  const std::size_t blocks = arch.channels.size();
  ws.inputs.resize(blocks + 1);
  ws.preacts.resize(blocks);
  ws.inputs[0] = input;
  int in_c = 1;
  for (std::size_t i = 0; i < blocks; ++i) {
    const int side = arch.side(i);
    const int oc = arch.channels[i];
    const auto plane = static_cast<std::size_t>(side) * side;
    ws.preacts[i].resize(plane * oc);
    conv_forward(ws.inputs[i].data(), in_c, side, p.values.data() + layout[2 * i].offset,
                 p.values.data() + layout[2 * i + 1].offset, oc, arch.kernel,
                 ws.preacts[i].data());
    const int os = arch.side(i + 1);
    ws.inputs[i + 1].resize(static_cast<std::size_t>(os) * os * oc);
    relu_pool_forward(ws.preacts[i].data(), oc, side, arch.pool, ws.inputs[i + 1].data());
    in_c = oc;
  }
  const int fs = arch.side(blocks);
  const auto fplane = static_cast<std::size_t>(fs) * fs;
  ws.pooled.assign(static_cast<std::size_t>(in_c), 0.0);
  const double* fw = p.values.data() + layout[2 * blocks].offset;
  double logit = p.values[layout[2 * blocks + 1].offset];
  for (int c = 0; c < in_c; ++c) {
    double s = 0.0;
    const double* a = ws.inputs[blocks].data() + c * fplane;
    for (std::size_t i = 0; i < fplane; ++i) s += a[i];
    ws.pooled[c] = s / static_cast<double>(fplane);
    logit += fw[c] * ws.pooled[c];
  }
  return logit;
}

// Accumulates dLoss/dparams given dLoss/dlogit for the sample last run
// through forward_one with this workspace.
inline void backward_one(const ClassifierParams& p, const std::vector<TensorSlice>& layout,
                         Workspace& ws, double grad_logit, std::vector<double>& grad) {
  const auto& arch = p.arch;
  const std::size_t blocks = arch.channels.size();
  const int last_c = arch.channels.back();
  const int fs = arch.side(blocks);
  const auto fplane = static_cast<std::size_t>(fs) * fs;
  const double* fw = p.values.data() + layout[2 * blocks].offset;
  double* gfw = grad.data() + layout[2 * blocks].offset;
  grad[layout[2 * blocks + 1].offset] += grad_logit;

  ws.grad_a.assign(fplane * last_c, 0.0);
  for (int c = 0; c < last_c; ++c) {
    gfw[c] += grad_logit * ws.pooled[c];
    const double g = grad_logit * fw[c] / static_cast<double>(fplane);
    std::fill(ws.grad_a.begin() + c * fplane, ws.grad_a.begin() + (c + 1) * fplane, g);
  }

  for (std::size_t bi = blocks; bi-- > 0;) {
    const int side = arch.side(bi);
    const int oc = arch.channels[bi];
    const int in_c = bi == 0 ? 1 : arch.channels[bi - 1];
    const auto plane = static_cast<std::size_t>(side) * side;
    ws.grad_z.resize(plane * oc);
    relu_pool_backward(ws.preacts[bi].data(), oc, side, arch.pool, ws.grad_a.data(),
                       ws.grad_z.data());
    double* gin = nullptr;
    if (bi > 0) {
      ws.grad_in.resize(plane * in_c);
      gin = ws.grad_in.data();
    }
    conv_backward(ws.inputs[bi].data(), in_c, side, p.values.data() + layout[2 * bi].offset, oc,
                  arch.kernel, ws.grad_z.data(), grad.data() + layout[2 * bi].offset,
                  grad.data() + layout[2 * bi + 1].offset, gin);
    if (bi > 0) std::swap(ws.grad_a, ws.grad_in);
  }
}

inline void check_batch(const ArchDescriptor& arch, std::span<const Sample> batch) {
  const auto expect = static_cast<std::size_t>(arch.input_size) * arch.input_size;
  for (const auto& s : batch)
    if (s.size() != expect)
      throw ShapeError("sample has " + std::to_string(s.size()) + " values, model expects " +
                       std::to_string(arch.input_size) + "x" + std::to_string(arch.input_size));
}

}  // namespace model_detail

/// Raw logits for a batch.
inline std::vector<double> logits(const ClassifierParams& params, std::span<const Sample> batch) {
  model_detail::check_batch(params.arch, batch);
  const auto layout = parameter_layout(params.arch);
  model_detail::Workspace ws;
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(model_detail::forward_one(params, layout, s, ws));
  return out;
}

/// Positive-class probability for each sample.
inline std::vector<double> forward(const ClassifierParams& params, std::span<const Sample> batch) {
  auto z = logits(params, batch);
  for (double& v : z) v = sigmoid(v);
  return z;
}

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

struct LossAndGrad {
  double loss = 0.0;
  ClassifierParams grad;
};

/// Mean class-weighted binary cross-entropy over the batch and its gradient
/// by reverse-mode accumulation. The mean divides by the batch size, so the
/// result is linear in the class weights.
inline LossAndGrad loss_and_grad(const ClassifierParams& params, std::span<const Sample> batch,
                                 std::span<const int> labels, ClassWeights weights = {}) {
  if (batch.size() != labels.size())
    throw ShapeError("batch has " + std::to_string(batch.size()) + " samples but " +
                     std::to_string(labels.size()) + " labels");
  if (batch.empty()) throw ShapeError("empty batch");
  for (int y : labels)
    if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
  model_detail::check_batch(params.arch, batch);

  const auto layout = parameter_layout(params.arch);
  model_detail::Workspace ws;
  LossAndGrad r{0.0, params.zeros_like()};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double z = model_detail::forward_one(params, layout, batch[i], ws);
    const double w = labels[i] ? weights.positive : weights.negative;
    // -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
    r.loss += w * (softplus(z) - labels[i] * z);
    const double dz = w * (sigmoid(z) - labels[i]) * inv_n;
    model_detail::backward_one(params, layout, ws, dz, r.grad.values);
  }
  r.loss *= inv_n;
  return r;
}

}  // namespace rvm
