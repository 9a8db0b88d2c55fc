#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bisim/environments.hpp"
#include "bisim/errors.hpp"
#include "bisim/mdp.hpp"
#include "bisim/sampled_metrics.hpp"

namespace bisim {

// ---------------------------------------------------------------------------
// State representations
// ---------------------------------------------------------------------------

/// Maps a state id to a k-dimensional feature vector.
///
/// kXy uses min-max normalized cell coordinates, kXyNoisy adds fresh
/// clipped Gaussian noise on every call that supplies an Rng, and kOneHot is
/// the indicator vector of the state.
class Representation {
 public:
  enum class Type { kXy, kXyNoisy, kOneHot };

  static Representation xy(const DeterministicMdp& mdp) {
    Representation r;
    r.type_ = Type::kXy;
    r.dim_ = 2;
    for (const auto& p : normalized_coordinates(mdp.coordinates)) r.table_.insert(r.table_.end(), p.begin(), p.end());
    r.num_states_ = mdp.num_states;
    return r;
  }

  static Representation xy_noisy(const DeterministicMdp& mdp, NoiseModel noise) {
    Representation r = xy(mdp);
    r.type_ = Type::kXyNoisy;
    r.noise_ = noise;
    return r;
  }

  static Representation onehot(std::size_t num_states) {
    Representation r;
    r.type_ = Type::kOneHot;
    r.dim_ = num_states;
    r.num_states_ = num_states;
    return r;
  }

  Type type() const { return type_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_states() const { return num_states_; }
  const NoiseModel& noise() const { return noise_; }

  // Writes exactly dim() values to `out`.
  void embed(StateId s, std::span<double> out, Rng* rng = nullptr) const {
    if (s >= num_states_) throw InputError("representation: state out of range");
    if (type_ == Type::kOneHot) {
      std::fill(out.begin(), out.end(), 0.0);
      out[s] = 1.0;
      return;
    }
    out[0] = table_[2 * s];
    out[1] = table_[2 * s + 1];
    if (type_ == Type::kXyNoisy && rng) {
      out[0] += noise_.sample(*rng);
      out[1] += noise_.sample(*rng);
    }
  }

  std::vector<double> embed(StateId s, Rng* rng = nullptr) const {
    std::vector<double> v(dim_);
    embed(s, v, rng);
    return v;
  }

 private:
  Type type_ = Type::kXy;
  std::size_t dim_ = 0;
  std::size_t num_states_ = 0;
  std::vector<double> table_;
  NoiseModel noise_;
};

// ---------------------------------------------------------------------------
// Multi-layer perceptron with flat parameter storage
// ---------------------------------------------------------------------------

/// Layer sizes [in, h1, ..., 1]; rectifier on hidden layers, identity output.
/// Parameters live in one flat vector: per layer, weights (out x in,
/// row-major) followed by biases.
class MlpShape {
 public:
  MlpShape() = default;
  explicit MlpShape(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw InputError("network needs at least an input and an output layer");
    for (auto s : sizes_)
      if (s == 0) throw InputError("layer sizes must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += sizes_[l] * sizes_[l + 1];
      b_off_.push_back(off);
      off += sizes_[l + 1];
    }
    num_params_ = off;
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  std::size_t in(std::size_t l) const { return sizes_[l]; }
  std::size_t out(std::size_t l) const { return sizes_[l + 1]; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t w_offset(std::size_t l) const { return w_off_[l]; }
  std::size_t b_offset(std::size_t l) const { return b_off_[l]; }
  std::size_t num_params() const { return num_params_; }
  std::size_t max_width() const { return *std::max_element(sizes_.begin(), sizes_.end()); }

  friend bool operator==(const MlpShape&, const MlpShape&) = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t num_params_ = 0;
};

namespace detail {

// Fixed-order dot product with 32 independent partial sums.
inline double dot(const double* a, const double* b, std::size_t n) {
  constexpr std::size_t kLanes = 32;
  if (n < kLanes) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
  }
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += a[i + j] * b[i + j];
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
  for (std::size_t w = kLanes / 2; w > 0; w /= 2)
    for (std::size_t j = 0; j < w; ++j) acc[j] += acc[j + w];
  return acc[0];
}

inline void relu_inplace(double* z, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = z[i] > 0.0 ? z[i] : 0.0;
}

constexpr std::size_t kSumLanes = 8;
constexpr std::size_t kUnitBlock = 32;

// out[k] = w . relu(a + c_{js[k]}), with unit o summed into lane o % 8 and
// the lanes then added in a fixed tree.
inline void hidden_block_forward(const double* __restrict a, const double* __restrict c,
                                 const double* __restrict w, std::span<const std::uint32_t> js,
                                 std::size_t h, double* __restrict lanes, double* out) {
  constexpr std::size_t L = kSumLanes, B = kUnitBlock;
  const std::size_t n = js.size();
  std::fill(lanes, lanes + n * L, 0.0);
  std::size_t o0 = 0;
  for (; o0 + B <= h; o0 += B) {
    double av[B], wv[B];
    for (std::size_t q = 0; q < B; ++q) {
      av[q] = a[o0 + q];
      wv[q] = w[o0 + q];
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double* __restrict cj = c + js[k] * h + o0;
      double* __restrict acc = lanes + k * L;
      double v[L];
      for (std::size_t q = 0; q < L; ++q) v[q] = acc[q];
      for (std::size_t u = 0; u < B; u += L)
        for (std::size_t q = 0; q < L; ++q) v[q] += wv[u + q] * std::max(av[u + q] + cj[u + q], 0.0);
      for (std::size_t q = 0; q < L; ++q) acc[q] = v[q];
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double* cj = c + js[k] * h;
    double* acc = lanes + k * L;
    for (std::size_t o = o0; o < h; ++o) acc[o % L] += w[o] * std::max(a[o] + cj[o], 0.0);
    out[k] = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  }
}

// For z = a + c_{js[k]}: gw += dy[k] relu(z), and sa, sc_{js[k]} += dy[k] [z > 0].
inline void hidden_block_backward(const double* __restrict a, const double* __restrict c,
                                  std::span<const std::uint32_t> js, const double* dy, std::size_t h,
                                  double* __restrict gw, double* __restrict sa, double* __restrict sc) {
  constexpr std::size_t B = kUnitBlock;
  const std::size_t n = js.size();
  std::size_t o0 = 0;
  for (; o0 + B <= h; o0 += B) {
    double g[B], s[B], av[B];
    for (std::size_t q = 0; q < B; ++q) {
      g[q] = gw[o0 + q];
      s[q] = sa[o0 + q];
      av[q] = a[o0 + q];
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double* __restrict cj = c + js[k] * h + o0;
      double* __restrict scj = sc + js[k] * h + o0;
      const double d = dy[k];
      for (std::size_t q = 0; q < B; ++q) {
        const double z = av[q] + cj[q];
        g[q] += d * std::max(z, 0.0);
        const double m = z > 0.0 ? d : 0.0;
        s[q] += m;
        scj[q] += m;
      }
    }
    for (std::size_t q = 0; q < B; ++q) {
      gw[o0 + q] = g[q];
      sa[o0 + q] = s[q];
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double* cj = c + js[k] * h;
    double* scj = sc + js[k] * h;
    const double d = dy[k];
    for (std::size_t o = o0; o < h; ++o) {
      const double z = a[o] + cj[o];
      gw[o] += d * std::max(z, 0.0);
      const double m = z > 0.0 ? d : 0.0;
      sa[o] += m;
      scj[o] += m;
    }
  }
}

}  // namespace detail

/// Single-example forward pass.
inline double mlp_forward(const MlpShape& shape, std::span<const double> params,
                          std::span<const double> x) {
  if (x.size() != shape.input_dim()) throw InputError("network input has the wrong length");
  const std::size_t width = shape.max_width();
  std::vector<double> cur(x.begin(), x.end()), nxt(width);
  for (std::size_t l = 0; l < shape.num_layers(); ++l) {
    const std::size_t in = shape.in(l), out = shape.out(l);
    const double* w = params.data() + shape.w_offset(l);
    const double* b = params.data() + shape.b_offset(l);
    for (std::size_t o = 0; o < out; ++o) nxt[o] = detail::dot(w + o * in, cur.data(), in) + b[o];
    if (l + 1 < shape.num_layers()) detail::relu_inplace(nxt.data(), out);
    cur.assign(nxt.begin(), nxt.begin() + static_cast<std::ptrdiff_t>(out));
  }
  return cur[0];
}

inline std::vector<double> init_params(const MlpShape& shape, Rng& rng) {
  std::vector<double> p(shape.num_params(), 0.0);
  for (std::size_t l = 0; l < shape.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.in(l)));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t end = shape.b_offset(l) + shape.out(l);
    for (std::size_t k = shape.w_offset(l); k < end; ++k) p[k] = u(rng);
  }
  return p;
}

/// Online and target parameter sets over one shape.
struct ApproxNet {
  enum class Params { kOnline, kTarget };

  MlpShape shape;
  std::vector<double> online;
  std::vector<double> target;

  static ApproxNet create(std::vector<std::size_t> sizes, Rng& rng) {
    ApproxNet net;
    net.shape = MlpShape(std::move(sizes));
    net.online = init_params(net.shape, rng);
    net.target = net.online;
    return net;
  }

  static ApproxNet zeros(std::vector<std::size_t> sizes) {
    ApproxNet net;
    net.shape = MlpShape(std::move(sizes));
    net.online.assign(net.shape.num_params(), 0.0);
    net.target = net.online;
    return net;
  }

  const std::vector<double>& params(Params which) const {
    return which == Params::kOnline ? online : target;
  }

  double forward(Params which, std::span<const double> x) const {
    return mlp_forward(shape, params(which), x);
  }

  void sync_target() { target = online; }
};

// ---------------------------------------------------------------------------
// Pair-structured batch evaluation
// ---------------------------------------------------------------------------

namespace detail {

/// Evaluates psi([left_i, right_j]) for many (i, j) rows sharing b left and
/// b right feature vectors. The first affine layer splits into
/// W_left * left_i + b1 and W_right * right_j, both computed once per
/// sample, so each row costs one vector add before the rectifier.
/// Buffers a PairNet can borrow so repeated batches reuse their storage.
struct PairScratch {
  std::vector<double> a, c, grad_a, grad_c, lanes, wt, gt, gbias;
};

class PairNet {
 public:
  PairNet(const MlpShape& shape, std::span<const double> params, std::span<const double> left,
          std::span<const double> right, std::size_t b, std::size_t k, PairScratch* scratch = nullptr)
      : shape_(shape), params_(params), left_(left), right_(right), b_(b), k_(k),
        ws_(scratch ? *scratch : own_), a_(ws_.a), c_(ws_.c), grad_a_(ws_.grad_a), grad_c_(ws_.grad_c),
        lanes_(ws_.lanes) {
    if (shape.input_dim() != 2 * k) throw InputError("network input does not match 2k");
    const std::size_t h = shape.out(0);
    const double* w = params.data() + shape.w_offset(0);
    const double* bias = params.data() + shape.b_offset(0);
    // wt[q * h + o] = W1[o][q], so the inner loops run over contiguous units.
    std::vector<double>& wt = ws_.wt;
    wt.resize(2 * k * h);
    for (std::size_t o = 0; o < h; ++o)
      for (std::size_t q = 0; q < 2 * k; ++q) wt[q * h + o] = w[o * 2 * k + q];
    a_.resize(b * h);
    c_.resize(b * h);
    for (std::size_t i = 0; i < b; ++i) {
      double* ai = a_.data() + i * h;
      double* ci = c_.data() + i * h;
      std::copy(bias, bias + h, ai);
      std::fill(ci, ci + h, 0.0);
      for (std::size_t q = 0; q < k; ++q) {
        const double xl = left[i * k + q], xr = right[i * k + q];
        const double* wl = wt.data() + q * h;
        const double* wr = wt.data() + (k + q) * h;
        for (std::size_t o = 0; o < h; ++o) {
          ai[o] += wl[o] * xl;
          ci[o] += wr[o] * xr;
        }
      }
    }
    std::size_t total = 0;
    for (std::size_t l = 0; l < shape.num_layers(); ++l) {
      act_off_.push_back(total);
      total += shape.out(l);
    }
    acts_.assign(total, 0.0);
    delta_.assign(shape.max_width(), 0.0);
    delta_prev_.assign(shape.max_width(), 0.0);
  }

  // Forward pass for row (i, j); keeps activations for backward().
  double forward(std::size_t i, std::size_t j) {
    const std::size_t h = shape_.out(0);
    const double* ai = a_.data() + i * h;
    const double* cj = c_.data() + j * h;
    if (shape_.num_layers() == 2) {
      const std::uint32_t jj = static_cast<std::uint32_t>(j);
      double y = 0.0;
      forward_block(i, std::span(&jj, 1), std::span(&y, 1));
      return y;
    }
    double* z = acts_.data();
    for (std::size_t o = 0; o < h; ++o) z[o] = ai[o] + cj[o];
    if (shape_.num_layers() > 1) relu_inplace(z, h);
    for (std::size_t l = 1; l < shape_.num_layers(); ++l) {
      const std::size_t in = shape_.in(l), out = shape_.out(l);
      const double* w = params_.data() + shape_.w_offset(l);
      const double* bias = params_.data() + shape_.b_offset(l);
      const double* prev = acts_.data() + act_off_[l - 1];
      double* cur = acts_.data() + act_off_[l];
      for (std::size_t o = 0; o < out; ++o) cur[o] = dot(w + o * in, prev, in) + bias[o];
      if (l + 1 < shape_.num_layers()) relu_inplace(cur, out);
    }
    return acts_[act_off_.back()];
  }

  // Accumulates d(loss)/d(params) for the row last passed to forward(),
  // given d(loss)/d(output) = dy. First-layer terms are staged per sample
  // and folded in by finish().
  void backward(std::size_t i, std::size_t j, double dy, std::span<double> grad) {
    if (shape_.num_layers() == 2) {
      const std::uint32_t jj = static_cast<std::uint32_t>(j);
      backward_block(i, std::span(&jj, 1), std::span(&dy, 1), grad);
      return;
    }
    stage_first_layer();
    delta_[0] = dy;
    for (std::size_t l = shape_.num_layers() - 1; l >= 1; --l) {
      const std::size_t in = shape_.in(l), out = shape_.out(l);
      const double* w = params_.data() + shape_.w_offset(l);
      double* gw = grad.data() + shape_.w_offset(l);
      double* gb = grad.data() + shape_.b_offset(l);
      const double* prev = acts_.data() + act_off_[l - 1];
      std::fill(delta_prev_.begin(), delta_prev_.begin() + static_cast<std::ptrdiff_t>(in), 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta_[o];
        gb[o] += d;
        if (d == 0.0) continue;
        double* gwo = gw + o * in;
        const double* wo = w + o * in;
        for (std::size_t q = 0; q < in; ++q) {
          gwo[q] += d * prev[q];
          delta_prev_[q] += d * wo[q];
        }
      }
      // Rectifier derivative of layer l-1 (all layers below the output are hidden).
      for (std::size_t q = 0; q < in; ++q) delta_[q] = prev[q] > 0.0 ? delta_prev_[q] : 0.0;
    }
    const std::size_t h = shape_.out(0);
    double* ga = grad_a_.data() + i * h;
    double* gc = grad_c_.data() + j * h;
    if (shape_.num_layers() == 1) delta_[0] = dy;
    for (std::size_t o = 0; o < h; ++o) {
      ga[o] += delta_[o];
      gc[o] += delta_[o];
    }
  }

  // out[k] = psi(i, js[k]).
  void forward_block(std::size_t i, std::span<const std::uint32_t> js, std::span<double> out) {
    if (shape_.num_layers() != 2) {
      for (std::size_t k = 0; k < js.size(); ++k) out[k] = forward(i, js[k]);
      return;
    }
    const std::size_t h = shape_.out(0);
    lanes_.resize(js.size() * kSumLanes);
    hidden_block_forward(a_.data() + i * h, c_.data(), params_.data() + shape_.w_offset(1), js, h,
                         lanes_.data(), out.data());
    const double b2 = params_[shape_.b_offset(1)];
    for (double& y : out.first(js.size())) y += b2;
  }

  // Gradient of sum_k dy[k] psi(i, js[k]). With one hidden layer the
  // per-sample terms are staged as sum dy [h > 0] and scaled by w2 in
  // finish(); deeper nets rerun forward() for each row.
  void backward_block(std::size_t i, std::span<const std::uint32_t> js, std::span<const double> dy,
                      std::span<double> grad) {
    if (shape_.num_layers() != 2) {
      for (std::size_t k = 0; k < js.size(); ++k) {
        forward(i, js[k]);
        backward(i, js[k], dy[k], grad);
      }
      return;
    }
    stage_first_layer();
    const std::size_t h = shape_.out(0);
    for (std::size_t k = 0; k < js.size(); ++k) grad[shape_.b_offset(1)] += dy[k];
    hidden_block_backward(a_.data() + i * h, c_.data(), js, dy.data(), h, grad.data() + shape_.w_offset(1),
                          grad_a_.data() + i * h, grad_c_.data());
  }

  void stage_first_layer() {
    if (!staged_) {
      grad_a_.assign(b_ * shape_.out(0), 0.0);
      grad_c_.assign(b_ * shape_.out(0), 0.0);
      staged_ = true;
    }
  }

  void finish(std::span<double> grad) {
    if (!staged_) return;
    const std::size_t h = shape_.out(0), k = k_;
    double* gw = grad.data() + shape_.w_offset(0);
    double* gb = grad.data() + shape_.b_offset(0);
    if (shape_.num_layers() == 2) {
      const double* w2 = params_.data() + shape_.w_offset(1);
      for (std::size_t i = 0; i < b_; ++i)
        for (std::size_t o = 0; o < h; ++o) {
          grad_a_[i * h + o] *= w2[o];
          grad_c_[i * h + o] *= w2[o];
        }
    }
    std::vector<double>& gt = ws_.gt;
    std::vector<double>& gbias = ws_.gbias;
    gt.assign(2 * k * h, 0.0);
    gbias.assign(h, 0.0);
    for (std::size_t i = 0; i < b_; ++i) {
      const double* da = grad_a_.data() + i * h;
      const double* dc = grad_c_.data() + i * h;
      for (std::size_t o = 0; o < h; ++o) gbias[o] += da[o];
      for (std::size_t q = 0; q < k; ++q) {
        const double xl = left_[i * k + q], xr = right_[i * k + q];
        double* gl = gt.data() + q * h;
        double* gr = gt.data() + (k + q) * h;
        for (std::size_t o = 0; o < h; ++o) {
          gl[o] += da[o] * xl;
          gr[o] += dc[o] * xr;
        }
      }
    }
    for (std::size_t o = 0; o < h; ++o) {
      gb[o] += gbias[o];
      for (std::size_t q = 0; q < 2 * k; ++q) gw[o * 2 * k + q] += gt[q * h + o];
    }
    staged_ = false;
  }

 private:
  const MlpShape& shape_;
  std::span<const double> params_, left_, right_;
  std::size_t b_, k_;
  PairScratch own_;
  PairScratch& ws_;
  std::vector<double>& a_;
  std::vector<double>& c_;
  std::vector<double> acts_;
  std::vector<std::size_t> act_off_;
  std::vector<double> delta_, delta_prev_;
  std::vector<double>& grad_a_;
  std::vector<double>& grad_c_;
  std::vector<double>& lanes_;
  bool staged_ = false;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Training batches, targets and loss
// ---------------------------------------------------------------------------

/// b sampled transitions expanded to b^2 ordered pairs. Row r = i*b + j
/// pairs sample i (left) with sample j (right).
struct TrainBatch {
  std::size_t b = 0;
  std::size_t k = 0;
  std::vector<double> states;       // b x k, embed(s_i)
  std::vector<double> next_states;  // b x k, embed(N(s_i, a_i))
  std::vector<double> R2;           // b^2, |r_i - r_j|
  std::vector<double> W;            // b^2, 1 iff a_i == a_j
  std::vector<double> diag_mask;    // b^2, 0 on i == j rows, else 1
  std::vector<ActionId> actions;

  std::size_t rows() const { return b * b; }

  // [embed(s_i), embed(s_j)] for row r.
  std::vector<double> s2_row(std::size_t r) const { return concat(states, r); }
  // [embed(ns_i), embed(ns_j)] for row r.
  std::vector<double> n2_row(std::size_t r) const { return concat(next_states, r); }

 private:
  std::vector<double> concat(const std::vector<double>& m, std::size_t r) const {
    const std::size_t i = r / b, j = r % b;
    std::vector<double> v(m.begin() + static_cast<std::ptrdiff_t>(i * k),
                          m.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    v.insert(v.end(), m.begin() + static_cast<std::ptrdiff_t>(j * k),
             m.begin() + static_cast<std::ptrdiff_t>((j + 1) * k));
    return v;
  }
};

/// Expands b transitions. Noisy representations draw fresh noise for every
/// state and next-state embedding from `rng`.
inline TrainBatch build_batch(std::span<const Transition> samples, const Representation& rep,
                              SampleMode mode, Rng* rng = nullptr) {
  const std::size_t b = samples.size();
  if (b < 2) throw InputError("batch size must be at least 2");
  TrainBatch batch;
  batch.b = b;
  batch.k = rep.dim();
  batch.states.assign(b * batch.k, 0.0);
  batch.next_states.assign(b * batch.k, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    rep.embed(samples[i].state, std::span(batch.states).subspan(i * batch.k, batch.k), rng);
    rep.embed(samples[i].next, std::span(batch.next_states).subspan(i * batch.k, batch.k), rng);
    batch.actions.push_back(samples[i].action);
  }
  batch.R2.resize(b * b);
  batch.W.resize(b * b);
  batch.diag_mask.resize(b * b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t r = i * b + j;
      batch.R2[r] = i == j ? 0.0 : std::abs(samples[i].reward - samples[j].reward);
      batch.W[r] = (mode == SampleMode::kOnPolicy || samples[i].action == samples[j].action) ? 1.0 : 0.0;
      batch.diag_mask[r] = i == j ? 0.0 : 1.0;
    }
  return batch;
}

/// Rows that carry loss weight: W != 0 off-policy, every row on-policy.
inline std::vector<std::uint32_t> loss_rows(const TrainBatch& batch, SampleMode mode) {
  std::vector<std::uint32_t> rows;
  rows.reserve(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r)
    if (mode == SampleMode::kOnPolicy || batch.W[r] != 0.0) rows.push_back(static_cast<std::uint32_t>(r));
  return rows;
}

/// Storage reused across training steps.
struct TrainScratch {
  detail::PairScratch online, next, current;
};

/// Bootstrapped targets for the listed rows (others are left at 0):
///   off-policy  T = (1 - I) max(R2 + gamma beta psi-(N2), beta psi-(S2))
///   on-policy   T = (1 - I) (R2 + gamma beta psi-(N2))
/// Only the target parameters are read.
inline std::vector<double> compute_target_rows(const TrainBatch& batch, const ApproxNet& net,
                                               double gamma, double beta, SampleMode mode,
                                               std::span<const std::uint32_t> rows,
                                               TrainScratch* scratch = nullptr) {
  std::vector<double> t(batch.rows(), 0.0);
  const bool bootstrap = beta != 0.0;
  std::optional<detail::PairNet> on_next, on_cur;
  if (bootstrap) {
    on_next.emplace(net.shape, net.target, batch.next_states, batch.next_states, batch.b, batch.k,
                    scratch ? &scratch->next : nullptr);
    if (mode == SampleMode::kOffPolicy)
      on_cur.emplace(net.shape, net.target, batch.states, batch.states, batch.b, batch.k,
                     scratch ? &scratch->current : nullptr);
  }
  std::vector<std::uint32_t> js, rs;
  std::vector<double> psi_next, psi_cur;
  for (std::size_t p = 0; p < rows.size();) {
    const std::size_t i = rows[p] / batch.b;
    js.clear();
    rs.clear();
    for (; p < rows.size() && rows[p] / batch.b == i; ++p)
      if (rows[p] % batch.b != i) {
        rs.push_back(rows[p]);
        js.push_back(static_cast<std::uint32_t>(rows[p] % batch.b));
      }
    if (bootstrap) {
      psi_next.resize(js.size());
      on_next->forward_block(i, js, psi_next);
      if (mode == SampleMode::kOffPolicy) {
        psi_cur.resize(js.size());
        on_cur->forward_block(i, js, psi_cur);
      }
    }
    for (std::size_t k = 0; k < rs.size(); ++k) {
      double v = batch.R2[rs[k]];
      if (bootstrap) {
        v += gamma * beta * psi_next[k];
        if (mode == SampleMode::kOffPolicy) v = std::max(v, beta * psi_cur[k]);
      }
      t[rs[k]] = v;
    }
  }
  return t;
}

inline std::vector<double> compute_target(const TrainBatch& batch, const ApproxNet& net, double gamma,
                                          double beta, SampleMode mode) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must lie in [0, 1]");
  std::vector<std::uint32_t> all(batch.rows());
  for (std::size_t r = 0; r < all.size(); ++r) all[r] = static_cast<std::uint32_t>(r);
  return compute_target_rows(batch, net, gamma, beta, mode, all);
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean over the b^2 rows of mask * (psi_theta(S2) - T)^2, with mask = W
/// off-policy and 1 on-policy, and its exact gradient in the online
/// parameters. Diagonal rows stay in the loss with their zero target.
inline LossAndGradient loss_and_gradient(const TrainBatch& batch, std::span<const double> target,
                                         const ApproxNet& net, SampleMode mode,
                                         TrainScratch* scratch = nullptr) {
  if (target.size() != batch.rows()) throw InputError("target length does not match batch");
  const auto rows = loss_rows(batch, mode);
  LossAndGradient out;
  out.grad.assign(net.shape.num_params(), 0.0);
  detail::PairNet pn(net.shape, net.online, batch.states, batch.states, batch.b, batch.k,
                     scratch ? &scratch->online : nullptr);
  const double scale = 1.0 / static_cast<double>(batch.rows());
  double total = 0.0;
  std::vector<std::uint32_t> js;
  std::vector<double> y, dy;
  for (std::size_t p = 0; p < rows.size();) {
    const std::size_t i = rows[p] / batch.b, first = p;
    js.clear();
    for (; p < rows.size() && rows[p] / batch.b == i; ++p)
      js.push_back(static_cast<std::uint32_t>(rows[p] % batch.b));
    y.resize(js.size());
    dy.resize(js.size());
    pn.forward_block(i, js, y);
    for (std::size_t k = 0; k < js.size(); ++k) {
      const std::uint32_t r = rows[first + k];
      const double resid = y[k] - target[r];
      const double w = mode == SampleMode::kOnPolicy ? 1.0 : batch.W[r];
      total += w * resid * resid;
      dy[k] = 2.0 * w * resid * scale;
    }
    pn.backward_block(i, js, dy, out.grad);
  }
  pn.finish(out.grad);
  out.loss = total * scale;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer and training loop
// ---------------------------------------------------------------------------

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * grad[k];
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * grad[k] * grad[k];
      params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct RepresentationConfig {
  std::string type = "xy";  // xy | xy_noisy | onehot
  double noise_sigma = 0.1;
  double noise_clip = 0.3;
  ClipMode clip_mode = ClipMode::kTruncate;
};

struct TrainConfig {
  double gamma = 0.99;
  std::size_t batch_size = 256;
  std::size_t target_update_period = 500;
  double beta_gap_factor = 0.9;
  double learning_rate = 0.01;
  std::size_t total_steps = 2500;
  std::vector<std::size_t> hidden_layers{729};
  RepresentationConfig representation;
  SampleMode mode = SampleMode::kOffPolicy;
  std::uint64_t seed = 0;
  // Evaluation callback period in steps (0 = only at the start and end).
  std::size_t eval_every = 100;
};

inline void require_valid(const TrainConfig& c) {
  if (!(c.beta_gap_factor > 0.0 && c.beta_gap_factor < 1.0))
    throw InputError("beta_gap_factor must lie in (0, 1)");
  if (c.target_update_period < 1) throw InputError("target_update_period must be >= 1");
  if (c.batch_size < 2) throw InputError("batch_size must be >= 2");
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw InputError("gamma must lie in [0, 1)");
  if (!(c.learning_rate > 0.0)) throw InputError("learning_rate must be positive");
}

/// beta <- 1 - f (1 - beta): the gap to 1 shrinks by f at every target sync.
inline double next_beta(double beta, double gap_factor) { return 1.0 - gap_factor * (1.0 - beta); }

inline Representation make_representation(const RepresentationConfig& rc, const DeterministicMdp& mdp) {
  if (rc.type == "xy") return Representation::xy(mdp);
  if (rc.type == "xy_noisy")
    return Representation::xy_noisy(mdp, NoiseModel{rc.noise_sigma, rc.noise_clip, rc.clip_mode});
  if (rc.type == "onehot") return Representation::onehot(mdp.num_states);
  throw InputError("unknown representation type '" + rc.type + "'");
}

using TransitionSource = std::function<Transition(Rng&)>;

/// Uniform states; uniform actions off-policy, pi(s) on-policy.
inline TransitionSource uniform_transitions(const DeterministicMdp& mdp, SampleMode mode,
                                            std::optional<DeterministicPolicy> policy = std::nullopt) {
  if (mode == SampleMode::kOnPolicy && !policy) throw InputError("on-policy training requires a policy");
  return [&mdp, mode, policy](Rng& rng) {
    std::uniform_int_distribution<StateId> ps(0, mdp.num_states - 1);
    const StateId s = ps(rng);
    ActionId a;
    if (mode == SampleMode::kOnPolicy) {
      a = (*policy)(s);
    } else {
      std::uniform_int_distribution<ActionId> pa(0, mdp.num_actions - 1);
      a = pa(rng);
    }
    return transition_of(mdp, s, a);
  };
}

/// Draws uniformly from a stored set of transitions.
inline TransitionSource replay_transitions(std::vector<Transition> buffer) {
  if (buffer.empty()) throw InputError("replay buffer is empty");
  return [buffer = std::move(buffer)](Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
    return buffer[pick(rng)];
  };
}

struct TrainLogRow {
  std::size_t step;
  double loss;
  double beta;
};

struct TrainResult {
  ApproxNet net;
  std::vector<TrainLogRow> log;
};

/// Target-network training loop. Each step samples b transitions, builds the
/// b^2 batch, computes targets from the target parameters, and takes one
/// Adam step on the online parameters. Every C steps the target parameters
/// are replaced by the online ones and beta moves toward 1.
///
/// `evaluate(step, net)` is called before the first step and then every
/// config.eval_every steps (and after the last step).
inline TrainResult train(TransitionSource source, const Representation& rep, const TrainConfig& config,
                         const std::function<void(std::size_t, const ApproxNet&)>& evaluate = {}) {
  require_valid(config);
  Rng rng(config.seed);
  std::vector<std::size_t> sizes{2 * rep.dim()};
  sizes.insert(sizes.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  sizes.push_back(1);
  TrainResult res{ApproxNet::create(sizes, rng), {}};
  ApproxNet& net = res.net;
  Adam opt(net.shape.num_params(), config.learning_rate);
  double beta = 0.0;
  TrainScratch scratch;

  if (evaluate) evaluate(0, net);
  std::vector<Transition> samples(config.batch_size);
  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    for (auto& tr : samples) tr = source(rng);
    const TrainBatch batch = build_batch(samples, rep, config.mode, &rng);
    const auto rows = loss_rows(batch, config.mode);
    const auto target = compute_target_rows(batch, net, config.gamma, beta, config.mode, rows, &scratch);
    const auto lg = loss_and_gradient(batch, target, net, config.mode, &scratch);
    opt.step(net.online, lg.grad);
    res.log.push_back({step, lg.loss, beta});
    if (step % config.target_update_period == 0) {
      net.sync_target();
      beta = next_beta(beta, config.beta_gap_factor);
    }
    if (evaluate && ((config.eval_every > 0 && step % config.eval_every == 0) || step == config.total_steps))
      evaluate(step, net);
  }
  return res;
}

/// psi(s, t) on noise-free embeddings. No symmetry or zero-diagonal
/// correction is applied.
inline double evaluate_psi(const ApproxNet& net, const Representation& rep, StateId s, StateId t) {
  std::vector<double> x = rep.embed(s);
  const auto y = rep.embed(t);
  x.insert(x.end(), y.begin(), y.end());
  return net.forward(ApproxNet::Params::kOnline, x);
}

}  // namespace bisim
