#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coildraw/rng.hpp"

namespace coildraw {

/// Shape of the action-value network. Two image channels (occupancy and head
/// position) pass through two strided convolutions, are flattened, joined
/// with the non-spatial inputs (heading one-hot, optionally target features),
/// and mapped through one hidden layer to one output per action.
struct NetArch {
  int image_h = 40;
  int image_w = 40;
  int in_channels = 2;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int kernel = 3;
  int stride = 2;
  int extra_inputs = 8;
  int hidden = 128;
  int outputs = 5;

  bool operator==(const NetArch&) const = default;

  int conv1_h() const { return (image_h - kernel) / stride + 1; }
  int conv1_w() const { return (image_w - kernel) / stride + 1; }
  int conv2_h() const { return (conv1_h() - kernel) / stride + 1; }
  int conv2_w() const { return (conv1_w() - kernel) / stride + 1; }
  int flat_size() const { return conv2_channels * conv2_h() * conv2_w(); }
  int fc1_inputs() const { return flat_size() + extra_inputs; }

  void validate() const {
    if (image_h <= 0 || image_w <= 0) throw std::invalid_argument("NetArch: image dims must be positive");
    if (in_channels <= 0) throw std::invalid_argument("NetArch: in_channels must be positive");
    if (conv1_channels <= 0 || conv2_channels <= 0) throw std::invalid_argument("NetArch: channel counts must be positive");
    if (kernel <= 0 || stride <= 0) throw std::invalid_argument("NetArch: kernel and stride must be positive");
    if (image_h < kernel || image_w < kernel) throw std::invalid_argument("NetArch: image smaller than kernel");
    if (conv1_h() < kernel || conv1_w() < kernel) throw std::invalid_argument("NetArch: conv1 output smaller than kernel");
    if (conv2_h() < 1 || conv2_w() < 1) throw std::invalid_argument("NetArch: conv2 output is empty");
    if (extra_inputs < 0) throw std::invalid_argument("NetArch: extra_inputs must be non-negative");
    if (hidden <= 0 || outputs <= 0) throw std::invalid_argument("NetArch: hidden and outputs must be positive");
  }
};

/// Action-value network with explicit forward and backward passes. The
/// scalar type is a template parameter so the same code runs in float for
/// training and in double for finite-difference verification. All
/// parameters live in one flat vector; block offsets are derived from the
/// architecture, which makes checkpointing and parameter probing direct.
template <typename T>
class QNetwork {
 public:
  /// Per-sample buffers for one forward/backward pass. Reused across calls
  /// to avoid churn in the training loop.
  struct Activations {
    std::vector<T> input;      // in_channels * image_h * image_w
    std::vector<T> conv1;      // post-ReLU
    std::vector<T> conv2;      // post-ReLU
    std::vector<T> fc1_in;     // flattened conv2 followed by extras
    std::vector<T> hidden;     // post-ReLU
    std::vector<T> out;        // linear
    std::vector<T> d_hidden;
    std::vector<T> d_fc1_in;
    std::vector<T> d_conv1;
  };

  explicit QNetwork(const NetArch& arch) : arch_(arch) {
    arch_.validate();
    compute_offsets();
    params_.assign(total_params_, T(0));
  }

  QNetwork(const NetArch& arch, Rng& rng) : QNetwork(arch) { he_init(rng); }

  const NetArch& arch() const { return arch_; }
  std::size_t parameter_count() const { return total_params_; }
  std::vector<T>& parameters() { return params_; }
  const std::vector<T>& parameters() const { return params_; }

  Activations make_activations() const {
    Activations a;
    a.input.assign(static_cast<std::size_t>(arch_.in_channels) * arch_.image_h * arch_.image_w, T(0));
    a.conv1.assign(static_cast<std::size_t>(arch_.conv1_channels) * arch_.conv1_h() * arch_.conv1_w(), T(0));
    a.conv2.assign(static_cast<std::size_t>(arch_.conv2_channels) * arch_.conv2_h() * arch_.conv2_w(), T(0));
    a.fc1_in.assign(static_cast<std::size_t>(arch_.fc1_inputs()), T(0));
    a.hidden.assign(static_cast<std::size_t>(arch_.hidden), T(0));
    a.out.assign(static_cast<std::size_t>(arch_.outputs), T(0));
    a.d_hidden.assign(a.hidden.size(), T(0));
    a.d_fc1_in.assign(a.fc1_in.size(), T(0));
    a.d_conv1.assign(a.conv1.size(), T(0));
    return a;
  }

  /// Forward pass. `act.input` must already hold the image channels and
  /// `extras` the non-spatial inputs (size arch().extra_inputs).
  void forward(const std::vector<T>& extras, Activations& act) const {
    if (static_cast<int>(extras.size()) != arch_.extra_inputs)
      throw std::invalid_argument("QNetwork::forward: extras size mismatch");
    conv_forward(act.input.data(), arch_.in_channels, arch_.image_h, arch_.image_w,
                 params_.data() + conv1_w_, params_.data() + conv1_b_,
                 arch_.conv1_channels, act.conv1.data());
    conv_forward(act.conv1.data(), arch_.conv1_channels, arch_.conv1_h(), arch_.conv1_w(),
                 params_.data() + conv2_w_, params_.data() + conv2_b_,
                 arch_.conv2_channels, act.conv2.data());
    std::copy(act.conv2.begin(), act.conv2.end(), act.fc1_in.begin());
    std::copy(extras.begin(), extras.end(), act.fc1_in.begin() + act.conv2.size());
    const T* w1 = params_.data() + fc1_w_;
    const T* b1 = params_.data() + fc1_b_;
    const int n_in = arch_.fc1_inputs();
    for (int j = 0; j < arch_.hidden; ++j) {
      T s = b1[j];
      const T* row = w1 + static_cast<std::size_t>(j) * n_in;
      for (int c = 0; c < n_in; ++c) s += row[c] * act.fc1_in[c];
      act.hidden[j] = s > T(0) ? s : T(0);
    }
    const T* w2 = params_.data() + fc2_w_;
    const T* b2 = params_.data() + fc2_b_;
    for (int o = 0; o < arch_.outputs; ++o) {
      T s = b2[o];
      const T* row = w2 + static_cast<std::size_t>(o) * arch_.hidden;
      for (int j = 0; j < arch_.hidden; ++j) s += row[j] * act.hidden[j];
      act.out[o] = s;
    }
  }

  /// Backward pass for the sample last run through `forward` with `act`.
  /// Accumulates parameter gradients into `grad` (same layout and length as
  /// `parameters()`); the caller zeroes `grad` to start a fresh batch.
  /// Gradients with respect to the network inputs are not produced.
  void backward(Activations& act, const std::vector<T>& d_out, std::vector<T>& grad) const {
    if (d_out.size() != static_cast<std::size_t>(arch_.outputs))
      throw std::invalid_argument("QNetwork::backward: d_out size mismatch");
    if (grad.size() != total_params_)
      throw std::invalid_argument("QNetwork::backward: grad size mismatch");
    Activations& a = act;
    std::fill(a.d_hidden.begin(), a.d_hidden.end(), T(0));
    std::fill(a.d_fc1_in.begin(), a.d_fc1_in.end(), T(0));
    std::fill(a.d_conv1.begin(), a.d_conv1.end(), T(0));

    const T* w2 = params_.data() + fc2_w_;
    for (int o = 0; o < arch_.outputs; ++o) {
      const T g = d_out[o];
      if (g == T(0)) continue;
      grad[fc2_b_ + o] += g;
      T* gw = grad.data() + fc2_w_ + static_cast<std::size_t>(o) * arch_.hidden;
      const T* row = w2 + static_cast<std::size_t>(o) * arch_.hidden;
      for (int j = 0; j < arch_.hidden; ++j) {
        gw[j] += g * act.hidden[j];
        a.d_hidden[j] += g * row[j];
      }
    }
    for (int j = 0; j < arch_.hidden; ++j)
      if (!(act.hidden[j] > T(0))) a.d_hidden[j] = T(0);

    const T* w1 = params_.data() + fc1_w_;
    const int n_in = arch_.fc1_inputs();
    for (int j = 0; j < arch_.hidden; ++j) {
      const T g = a.d_hidden[j];
      if (g == T(0)) continue;
      grad[fc1_b_ + j] += g;
      T* gw = grad.data() + fc1_w_ + static_cast<std::size_t>(j) * n_in;
      const T* row = w1 + static_cast<std::size_t>(j) * n_in;
      for (int c = 0; c < n_in; ++c) {
        gw[c] += g * act.fc1_in[c];
        a.d_fc1_in[c] += g * row[c];
      }
    }

    // d_fc1_in prefix is the gradient at conv2 output; apply its ReLU mask.
    const std::size_t flat = act.conv2.size();
    for (std::size_t i = 0; i < flat; ++i)
      if (!(act.conv2[i] > T(0))) a.d_fc1_in[i] = T(0);

    conv_backward(act.conv1.data(), arch_.conv1_channels, arch_.conv1_h(), arch_.conv1_w(),
                  params_.data() + conv2_w_, arch_.conv2_channels,
                  a.d_fc1_in.data(), grad.data() + conv2_w_, grad.data() + conv2_b_,
                  a.d_conv1.data());
    for (std::size_t i = 0; i < act.conv1.size(); ++i)
      if (!(act.conv1[i] > T(0))) a.d_conv1[i] = T(0);
    conv_backward(act.input.data(), arch_.in_channels, arch_.image_h, arch_.image_w,
                  params_.data() + conv1_w_, arch_.conv1_channels,
                  a.d_conv1.data(), grad.data() + conv1_w_, grad.data() + conv1_b_,
                  nullptr);
  }

  /// Convenience inference entry point; allocates its own workspace.
  std::vector<T> predict(const std::vector<T>& image, const std::vector<T>& extras) const {
    Activations act = make_activations();
    if (image.size() != act.input.size())
      throw std::invalid_argument("QNetwork::predict: image size mismatch");
    std::copy(image.begin(), image.end(), act.input.begin());
    forward(extras, act);
    return act.out;
  }

 private:
  void compute_offsets() {
    const std::size_t k2 = static_cast<std::size_t>(arch_.kernel) * arch_.kernel;
    conv1_w_ = 0;
    conv1_b_ = conv1_w_ + static_cast<std::size_t>(arch_.conv1_channels) * arch_.in_channels * k2;
    conv2_w_ = conv1_b_ + arch_.conv1_channels;
    conv2_b_ = conv2_w_ + static_cast<std::size_t>(arch_.conv2_channels) * arch_.conv1_channels * k2;
    fc1_w_ = conv2_b_ + arch_.conv2_channels;
    fc1_b_ = fc1_w_ + static_cast<std::size_t>(arch_.hidden) * arch_.fc1_inputs();
    fc2_w_ = fc1_b_ + arch_.hidden;
    fc2_b_ = fc2_w_ + static_cast<std::size_t>(arch_.outputs) * arch_.hidden;
    total_params_ = fc2_b_ + arch_.outputs;
  }

  /// He-normal weights; biases uniform in +-1/sqrt(fan_in). Non-zero biases
  /// keep the initial network away from the ReLU kink, where the loss is not
  /// differentiable and finite-difference checks would be ill-posed.
  void he_init(Rng& rng) {
    const std::size_t k2 = static_cast<std::size_t>(arch_.kernel) * arch_.kernel;
    const double fan1 = static_cast<double>(arch_.in_channels) * k2;
    const double fan2 = static_cast<double>(arch_.conv1_channels) * k2;
    const double fan3 = arch_.fc1_inputs();
    const double fan4 = arch_.hidden;
    fill_normal(rng, conv1_w_, conv1_b_ - conv1_w_, std::sqrt(2.0 / fan1));
    fill_uniform(rng, conv1_b_, conv2_w_ - conv1_b_, 1.0 / std::sqrt(fan1));
    fill_normal(rng, conv2_w_, conv2_b_ - conv2_w_, std::sqrt(2.0 / fan2));
    fill_uniform(rng, conv2_b_, fc1_w_ - conv2_b_, 1.0 / std::sqrt(fan2));
    fill_normal(rng, fc1_w_, fc1_b_ - fc1_w_, std::sqrt(2.0 / fan3));
    fill_uniform(rng, fc1_b_, fc2_w_ - fc1_b_, 1.0 / std::sqrt(fan3));
    fill_normal(rng, fc2_w_, fc2_b_ - fc2_w_, std::sqrt(2.0 / fan4));
    fill_uniform(rng, fc2_b_, total_params_ - fc2_b_, 1.0 / std::sqrt(fan4));
  }

  void fill_normal(Rng& rng, std::size_t offset, std::size_t count, double stddev) {
    for (std::size_t i = 0; i < count; ++i)
      params_[offset + i] = static_cast<T>(rng.normal() * stddev);
  }

  void fill_uniform(Rng& rng, std::size_t offset, std::size_t count, double bound) {
    for (std::size_t i = 0; i < count; ++i)
      params_[offset + i] = static_cast<T>(rng.uniform(-bound, bound));
  }

  void conv_forward(const T* in, int ic_count, int ih, int iw,
                    const T* w, const T* b, int oc_count, T* out) const {
    const int k = arch_.kernel;
    const int s = arch_.stride;
    const int oh = (ih - k) / s + 1;
    const int ow = (iw - k) / s + 1;
    for (int oc = 0; oc < oc_count; ++oc) {
      const T* woc = w + static_cast<std::size_t>(oc) * ic_count * k * k;
      T* ooc = out + static_cast<std::size_t>(oc) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T s_acc = b[oc];
          for (int ic = 0; ic < ic_count; ++ic) {
            const T* plane = in + static_cast<std::size_t>(ic) * ih * iw;
            const T* wk = woc + static_cast<std::size_t>(ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const T* rowp = plane + static_cast<std::size_t>(oy * s + ky) * iw + ox * s;
              const T* wrow = wk + static_cast<std::size_t>(ky) * k;
              for (int kx = 0; kx < k; ++kx) s_acc += wrow[kx] * rowp[kx];
            }
          }
          const T v = s_acc;
          ooc[static_cast<std::size_t>(oy) * ow + ox] = v > T(0) ? v : T(0);
        }
      }
    }
  }

  void conv_backward(const T* in, int ic_count, int ih, int iw,
                     const T* w, int oc_count,
                     const T* d_out, T* g_w, T* g_b, T* d_in) const {
    const int k = arch_.kernel;
    const int s = arch_.stride;
    const int oh = (ih - k) / s + 1;
    const int ow = (iw - k) / s + 1;
    for (int oc = 0; oc < oc_count; ++oc) {
      const T* woc = w + static_cast<std::size_t>(oc) * ic_count * k * k;
      T* gwoc = g_w + static_cast<std::size_t>(oc) * ic_count * k * k;
      const T* doc = d_out + static_cast<std::size_t>(oc) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const T g = doc[static_cast<std::size_t>(oy) * ow + ox];
          if (g == T(0)) continue;
          g_b[oc] += g;
          for (int ic = 0; ic < ic_count; ++ic) {
            const T* plane = in + static_cast<std::size_t>(ic) * ih * iw;
            T* dplane = d_in ? d_in + static_cast<std::size_t>(ic) * ih * iw : nullptr;
            const T* wk = woc + static_cast<std::size_t>(ic) * k * k;
            T* gwk = gwoc + static_cast<std::size_t>(ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const std::size_t row = static_cast<std::size_t>(oy * s + ky) * iw + ox * s;
              for (int kx = 0; kx < k; ++kx) {
                gwk[static_cast<std::size_t>(ky) * k + kx] += g * plane[row + kx];
                if (dplane) dplane[row + kx] += g * wk[static_cast<std::size_t>(ky) * k + kx];
              }
            }
          }
        }
      }
    }
  }

  NetArch arch_;
  std::vector<T> params_;
  std::size_t conv1_w_ = 0, conv1_b_ = 0, conv2_w_ = 0, conv2_b_ = 0;
  std::size_t fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0;
  std::size_t total_params_ = 0;
};

/// Adam optimizer over a flat parameter vector.
template <typename T>
class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon),
        m_(n, T(0)), v_(n, T(0)) {}

  void step(std::vector<T>& params, const std::vector<T>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw std::invalid_argument("Adam::step: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double m = beta1_ * static_cast<double>(m_[i]) + (1.0 - beta1_) * g;
      const double v = beta2_ * static_cast<double>(v_[i]) + (1.0 - beta2_) * g * g;
      m_[i] = static_cast<T>(m);
      v_[i] = static_cast<T>(v);
      params[i] -= static_cast<T>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
    }
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<T> m_, v_;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'I', 'L', 'D', 'Q', 'N', '1'};

/// Writes the network architecture and parameters as little-endian binary.
inline void save_checkpoint(const QNetwork<float>& net, const std::string& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const NetArch& a = net.arch();
  const std::int32_t fields[10] = {a.image_h, a.image_w, a.in_channels, a.conv1_channels,
                                   a.conv2_channels, a.kernel, a.stride, a.extra_inputs,
                                   a.hidden, a.outputs};
  out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
  const std::uint64_t n = net.parameter_count();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(net.parameters().data()),
            static_cast<std::streamsize>(n * sizeof(float)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

/// Loads a checkpoint written by `save_checkpoint`. Throws on any mismatch
/// between the stored architecture and `expected`.
inline QNetwork<float> load_checkpoint(const std::string& path, const NetArch& expected) {
  static_assert(std::endian::native == std::endian::little);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::int32_t fields[10];
  in.read(reinterpret_cast<char*>(fields), sizeof(fields));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  NetArch a;
  a.image_h = fields[0];
  a.image_w = fields[1];
  a.in_channels = fields[2];
  a.conv1_channels = fields[3];
  a.conv2_channels = fields[4];
  a.kernel = fields[5];
  a.stride = fields[6];
  a.extra_inputs = fields[7];
  a.hidden = fields[8];
  a.outputs = fields[9];
  if (!(a == expected))
    throw std::runtime_error("load_checkpoint: architecture mismatch in " + path);
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  QNetwork<float> net(a);
  if (!in || n != net.parameter_count())
    throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
  in.read(reinterpret_cast<char*>(net.parameters().data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw std::runtime_error("load_checkpoint: truncated parameters in " + path);
  char probe;
  if (in.read(&probe, 1))
    throw std::runtime_error("load_checkpoint: trailing bytes in " + path);
  return net;
}

}  // namespace coildraw
