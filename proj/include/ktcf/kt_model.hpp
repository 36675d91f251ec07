#pragma once

// DKT-style knowledge-tracing model: a single-layer LSTM over one-hot
// (KC, response) interactions with a per-KC sigmoid output head.
//
// Relaxed responses r in [0,1] enter the network through
//   x = (1 - r) * onehot(kc) + r * onehot(K + kc),
// which is exact at binary responses and linear in r, so the prediction is
// differentiable with respect to every response in the history.

#include "ktcf/error.hpp"
#include "ktcf/random.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ktcf {

using Kc = std::size_t;
using RelaxedResponses = std::vector<double>;

// A student's interaction history. The last step is the prediction target.
struct LearningHistory {
  std::vector<Kc> kcs;
  std::vector<int> responses;

  std::size_t size() const noexcept { return kcs.size(); }
  Kc target_kc() const { return kcs.back(); }
  RelaxedResponses relaxed() const {
    return RelaxedResponses(responses.begin(), responses.end());
  }

  bool operator==(const LearningHistory &) const = default;
};

// Throws InputError when the history breaks any LearningHistory invariant.
inline void validate_history(const LearningHistory &h, std::size_t num_kcs) {
  if (h.kcs.size() != h.responses.size()) {
    throw InputError("history: kcs and responses differ in length");
  }
  if (h.kcs.size() < 2) {
    throw InputError("history: at least two interactions are required");
  }
  for (std::size_t t = 0; t < h.kcs.size(); ++t) {
    if (h.kcs[t] >= num_kcs) {
      throw InputError("history: kc " + std::to_string(h.kcs[t]) +
                       " out of range for K=" + std::to_string(num_kcs));
    }
    if (h.responses[t] != 0 && h.responses[t] != 1) {
      throw InputError("history: responses must be 0 or 1");
    }
  }
}

// Dense row-major matrix used for model weights.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Matrix &) const = default;
};

inline std::vector<double> encode_interaction(Kc kc, double r, std::size_t num_kcs) {
  if (kc >= num_kcs) {
    throw InputError("encode_interaction: kc " + std::to_string(kc) +
                     " out of range for K=" + std::to_string(num_kcs));
  }
  std::vector<double> x(2 * num_kcs, 0.0);
  x[kc] = 1.0 - r;
  x[kc + num_kcs] = r;
  return x;
}

struct WeightBlock {
  std::string_view name;
  std::size_t rows;
  std::size_t cols;
  std::span<double> values;
};

struct ConstWeightBlock {
  std::string_view name;
  std::size_t rows;
  std::size_t cols;
  std::span<const double> values;
};

// LSTM gate rows are stacked in the order input, forget, candidate, output.
class KtModel {
public:
  KtModel() = default;
  KtModel(std::size_t num_kcs, std::size_t hidden)
      : num_kcs_(num_kcs), hidden_(hidden), w_ih(4 * hidden, 2 * num_kcs),
        w_hh(4 * hidden, hidden), b(4 * hidden, 0.0), w_out(num_kcs, hidden),
        b_out(num_kcs, 0.0) {
    if (num_kcs == 0 || hidden == 0) {
      throw InputError("KtModel: K and H must be positive");
    }
  }

  // Weights drawn i.i.d. uniform on [-scale, scale].
  static KtModel random(std::size_t num_kcs, std::size_t hidden, Rng &rng,
                        double scale) {
    KtModel m(num_kcs, hidden);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto &blk : m.blocks()) {
      for (double &w : blk.values) {
        w = u(rng);
      }
    }
    return m;
  }

  std::size_t num_kcs() const noexcept { return num_kcs_; }
  std::size_t hidden() const noexcept { return hidden_; }

  std::array<WeightBlock, 5> blocks() {
    return {{{"w_ih", w_ih.rows, w_ih.cols, w_ih.data},
             {"w_hh", w_hh.rows, w_hh.cols, w_hh.data},
             {"b", 1, b.size(), b},
             {"w_out", w_out.rows, w_out.cols, w_out.data},
             {"b_out", 1, b_out.size(), b_out}}};
  }
  std::array<ConstWeightBlock, 5> blocks() const {
    return {{{"w_ih", w_ih.rows, w_ih.cols, w_ih.data},
             {"w_hh", w_hh.rows, w_hh.cols, w_hh.data},
             {"b", 1, b.size(), b},
             {"w_out", w_out.rows, w_out.cols, w_out.data},
             {"b_out", 1, b_out.size(), b_out}}};
  }

  std::size_t parameter_count() const noexcept {
    return w_ih.data.size() + w_hh.data.size() + b.size() + w_out.data.size() +
           b_out.size();
  }

  bool operator==(const KtModel &) const = default;

private:
  std::size_t num_kcs_ = 0;
  std::size_t hidden_ = 0;

public:
  Matrix w_ih;
  Matrix w_hh;
  std::vector<double> b;
  Matrix w_out;
  std::vector<double> b_out;
};

namespace detail {

// Activations recorded by a forward pass, kept for backpropagation.
struct LstmTape {
  std::size_t hidden = 0;
  std::size_t steps = 0;
  std::vector<double> gates;  // steps x 4H, post-activation
  std::vector<double> cell;   // steps x H
  std::vector<double> tanh_c; // steps x H
  std::vector<double> hid;    // steps x H

  void reset(std::size_t h, std::size_t n) {
    hidden = h;
    steps = n;
    gates.assign(n * 4 * h, 0.0);
    cell.assign(n * h, 0.0);
    tanh_c.assign(n * h, 0.0);
    hid.assign(n * h, 0.0);
  }
  std::span<const double> h_at(std::size_t t) const {
    return {hid.data() + t * hidden, hidden};
  }
};

inline void check_inputs(const KtModel &m, std::span<const Kc> kcs,
                         std::size_t n_responses) {
  if (kcs.size() != n_responses) {
    throw InputError("kcs and responses differ in length");
  }
  if (kcs.size() < 2) {
    throw InputError("forward: sequences shorter than 2 have no prediction");
  }
  for (Kc kc : kcs) {
    if (kc >= m.num_kcs()) {
      throw InputError("kc " + std::to_string(kc) + " out of range for K=" +
                       std::to_string(m.num_kcs()));
    }
  }
}

// Shared recurrence. `add_input(t, a)` accumulates W_ih x_t into the 4H
// pre-activation buffer `a`, which already holds the bias.
template <class AddInput>
void run_lstm(const KtModel &m, std::size_t steps, LstmTape &tape,
              AddInput &&add_input) {
  const std::size_t H = m.hidden();
  tape.reset(H, steps);
  std::vector<double> a(4 * H);
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy(m.b.begin(), m.b.end(), a.begin());
    add_input(t, a);
    if (t > 0) {
      const double *h_prev = tape.hid.data() + (t - 1) * H;
      for (std::size_t j = 0; j < 4 * H; ++j) {
        const double *w = m.w_hh.data.data() + j * H;
        double acc = 0.0;
        for (std::size_t k = 0; k < H; ++k) {
          acc += w[k] * h_prev[k];
        }
        a[j] += acc;
      }
    }
    double *g = tape.gates.data() + t * 4 * H;
    double *c = tape.cell.data() + t * H;
    double *tc = tape.tanh_c.data() + t * H;
    double *h = tape.hid.data() + t * H;
    const double *c_prev = t > 0 ? tape.cell.data() + (t - 1) * H : nullptr;
    for (std::size_t k = 0; k < H; ++k) {
      const double gi = sigmoid(a[k]);
      const double gf = sigmoid(a[H + k]);
      const double gg = std::tanh(a[2 * H + k]);
      const double go = sigmoid(a[3 * H + k]);
      g[k] = gi;
      g[H + k] = gf;
      g[2 * H + k] = gg;
      g[3 * H + k] = go;
      c[k] = (c_prev ? gf * c_prev[k] : 0.0) + gi * gg;
      tc[k] = std::tanh(c[k]);
      h[k] = go * tc[k];
    }
  }
}

inline void run_lstm_relaxed(const KtModel &m, std::span<const Kc> kcs,
                             std::span<const double> r, std::size_t steps,
                             LstmTape &tape) {
  const std::size_t K = m.num_kcs();
  const std::size_t twoK = 2 * K;
  run_lstm(m, steps, tape, [&](std::size_t t, std::vector<double> &a) {
    const double *w = m.w_ih.data.data();
    const std::size_t lo = kcs[t];
    const std::size_t hi = kcs[t] + K;
    const double r_t = r[t];
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] += w[j * twoK + lo] * (1.0 - r_t) + w[j * twoK + hi] * r_t;
    }
  });
}

inline double output_logit(const KtModel &m, std::span<const double> h, Kc kc) {
  const double *w = m.w_out.data.data() + kc * m.hidden();
  double z = m.b_out[kc];
  for (std::size_t k = 0; k < h.size(); ++k) {
    z += w[k] * h[k];
  }
  return z;
}

// Backpropagates dL/dh over steps [0, steps) of `tape`. `dh_out(t)` returns
// the external gradient injected into h_t (may be empty for none);
// `on_preact(t, da)` receives dL/da_t for the 4H gate pre-activations.
template <class ExternalDh, class OnPreact>
void backprop_lstm(const KtModel &m, const LstmTape &tape, ExternalDh &&dh_out,
                   OnPreact &&on_preact) {
  const std::size_t H = m.hidden();
  std::vector<double> dh(H, 0.0), dc(H, 0.0), da(4 * H, 0.0), dh_prev(H, 0.0);
  for (std::size_t step = tape.steps; step-- > 0;) {
    dh_out(step, std::span<double>(dh));
    const double *g = tape.gates.data() + step * 4 * H;
    const double *tc = tape.tanh_c.data() + step * H;
    const double *c_prev = step > 0 ? tape.cell.data() + (step - 1) * H : nullptr;
    for (std::size_t k = 0; k < H; ++k) {
      const double gi = g[k], gf = g[H + k], gg = g[2 * H + k], go = g[3 * H + k];
      const double d_o = dh[k] * tc[k];
      dc[k] += dh[k] * go * (1.0 - tc[k] * tc[k]);
      const double d_i = dc[k] * gg;
      const double d_g = dc[k] * gi;
      const double d_f = c_prev ? dc[k] * c_prev[k] : 0.0;
      da[k] = d_i * gi * (1.0 - gi);
      da[H + k] = d_f * gf * (1.0 - gf);
      da[2 * H + k] = d_g * (1.0 - gg * gg);
      da[3 * H + k] = d_o * go * (1.0 - go);
      dc[k] *= gf;
    }
    on_preact(step, std::span<const double>(da));
    if (step == 0) {
      break;
    }
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (std::size_t j = 0; j < 4 * H; ++j) {
      const double d = da[j];
      if (d == 0.0) {
        continue;
      }
      const double *w = m.w_hh.data.data() + j * H;
      for (std::size_t k = 0; k < H; ++k) {
        dh_prev[k] += w[k] * d;
      }
    }
    std::swap(dh, dh_prev);
  }
}

} // namespace detail

// Per-step correctness probabilities. Element t-1 is the probability that the
// response at step t is correct given steps 0..t-1; the last element is the
// target prediction f(X).
inline std::vector<double> forward(const KtModel &m, std::span<const Kc> kcs,
                                   std::span<const double> r) {
  detail::check_inputs(m, kcs, r.size());
  const std::size_t T = kcs.size();
  detail::LstmTape tape;
  detail::run_lstm_relaxed(m, kcs, r, T - 1, tape);
  std::vector<double> p(T - 1);
  for (std::size_t t = 1; t < T; ++t) {
    p[t - 1] = sigmoid(detail::output_logit(m, tape.h_at(t - 1), kcs[t]));
  }
  return p;
}

// Same as forward, but each step's network input is given explicitly as a
// 2K-dimensional interaction vector.
inline std::vector<double>
forward_interactions(const KtModel &m, std::span<const Kc> kcs,
                     std::span<const std::vector<double>> interactions) {
  detail::check_inputs(m, kcs, interactions.size());
  const std::size_t twoK = 2 * m.num_kcs();
  for (const auto &x : interactions) {
    if (x.size() != twoK) {
      throw InputError("forward_interactions: interaction vectors must have length 2K");
    }
  }
  const std::size_t T = kcs.size();
  detail::LstmTape tape;
  detail::run_lstm(m, T - 1, tape, [&](std::size_t t, std::vector<double> &a) {
    const auto &x = interactions[t];
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double *w = m.w_ih.data.data() + j * twoK;
      for (std::size_t i = 0; i < twoK; ++i) {
        a[j] += w[i] * x[i];
      }
    }
  });
  std::vector<double> p(T - 1);
  for (std::size_t t = 1; t < T; ++t) {
    p[t - 1] = sigmoid(detail::output_logit(m, tape.h_at(t - 1), kcs[t]));
  }
  return p;
}

// Target prediction f(X): probability that the last response is correct.
inline double predict_target(const KtModel &m, std::span<const Kc> kcs,
                             std::span<const double> r) {
  detail::check_inputs(m, kcs, r.size());
  const std::size_t T = kcs.size();
  detail::LstmTape tape;
  detail::run_lstm_relaxed(m, kcs, r, T - 1, tape);
  return sigmoid(detail::output_logit(m, tape.h_at(T - 2), kcs[T - 1]));
}

inline double predict_target(const KtModel &m, const LearningHistory &h) {
  const auto r = h.relaxed();
  return predict_target(m, h.kcs, r);
}

// Value and derivative of a scalar loss of the target prediction.
struct ScalarLoss {
  double value = 0.0;
  double derivative = 0.0;
};

struct ResponseGradient {
  double prediction = 0.0;
  double loss = 0.0;
  std::vector<double> grad; // dloss/dr_t, length T
};

// Reverse-mode gradient of loss(f(X)) with respect to every relaxed response.
// `loss` maps the target probability to a ScalarLoss.
template <class LossFn>
ResponseGradient grad_responses(const KtModel &m, std::span<const Kc> kcs,
                                std::span<const double> r, LossFn &&loss) {
  detail::check_inputs(m, kcs, r.size());
  const std::size_t T = kcs.size();
  const std::size_t K = m.num_kcs();
  const std::size_t twoK = 2 * K;
  detail::LstmTape tape;
  detail::run_lstm_relaxed(m, kcs, r, T - 1, tape);

  ResponseGradient out;
  const Kc target = kcs[T - 1];
  out.prediction = sigmoid(detail::output_logit(m, tape.h_at(T - 2), target));
  const ScalarLoss l = loss(out.prediction);
  out.loss = l.value;
  out.grad.assign(T, 0.0);

  const double dlogit = l.derivative * out.prediction * (1.0 - out.prediction);
  if (dlogit == 0.0) {
    return out;
  }
  const double *w_target = m.w_out.data.data() + target * m.hidden();
  detail::backprop_lstm(
      m, tape,
      [&](std::size_t step, std::span<double> dh) {
        if (step == T - 2) {
          for (std::size_t k = 0; k < dh.size(); ++k) {
            dh[k] += dlogit * w_target[k];
          }
        }
      },
      [&](std::size_t step, std::span<const double> da) {
        const double *w = m.w_ih.data.data();
        const std::size_t lo = kcs[step];
        const std::size_t hi = lo + K;
        double g = 0.0;
        for (std::size_t j = 0; j < da.size(); ++j) {
          g += da[j] * (w[j * twoK + hi] - w[j * twoK + lo]);
        }
        out.grad[step] = g;
      });
  return out;
}

// ---------------------------------------------------------------------------
// Model file
//
//   magic        8 bytes  "KTCFMODL"
//   version      u32      kModelFormatVersion
//   K, H         u32, u32
//   block_count  u32      always 5
//   per block:   u32 name length, name bytes, u32 rows, u32 cols,
//                rows*cols IEEE-754 binary64 values
// All integers and doubles are little-endian.

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[8] = {'K', 'T', 'C', 'F', 'M', 'O', 'D', 'L'};

namespace detail {

inline void put_u32(std::string &buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

inline void put_f64(std::string &buf, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

class ByteReader {
public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("model file truncated");
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return std::bit_cast<double>(v);
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize_model(const KtModel &m) {
  std::string buf(kModelMagic, sizeof(kModelMagic));
  detail::put_u32(buf, kModelFormatVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(m.num_kcs()));
  detail::put_u32(buf, static_cast<std::uint32_t>(m.hidden()));
  const auto blocks = m.blocks();
  detail::put_u32(buf, static_cast<std::uint32_t>(blocks.size()));
  for (const auto &blk : blocks) {
    detail::put_u32(buf, static_cast<std::uint32_t>(blk.name.size()));
    buf.append(blk.name);
    detail::put_u32(buf, static_cast<std::uint32_t>(blk.rows));
    detail::put_u32(buf, static_cast<std::uint32_t>(blk.cols));
    for (double v : blk.values) {
      detail::put_f64(buf, v);
    }
  }
  return buf;
}

inline KtModel deserialize_model(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < sizeof(kModelMagic) ||
      std::memcmp(in.take(sizeof(kModelMagic)).data(), kModelMagic,
                  sizeof(kModelMagic)) != 0) {
    throw FormatError("not a model file (bad magic bytes)");
  }
  const auto version = in.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  const std::size_t K = in.u32();
  const std::size_t H = in.u32();
  if (K == 0 || H == 0) {
    throw DimensionError("model header declares K or H as zero");
  }
  KtModel m(K, H);
  auto blocks = m.blocks();
  if (in.u32() != blocks.size()) {
    throw FormatError("unexpected weight block count");
  }
  for (auto &blk : blocks) {
    const auto name_len = in.u32();
    const auto name = in.take(name_len);
    if (name != blk.name) {
      throw FormatError("expected weight block '" + std::string(blk.name) +
                        "', found '" + std::string(name) + "'");
    }
    const std::size_t rows = in.u32();
    const std::size_t cols = in.u32();
    if (rows != blk.rows || cols != blk.cols) {
      throw DimensionError("block '" + std::string(blk.name) + "' is " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           ", header implies " + std::to_string(blk.rows) + "x" +
                           std::to_string(blk.cols));
    }
    for (double &v : blk.values) {
      v = in.f64();
    }
  }
  if (!in.done()) {
    throw FormatError("trailing bytes after last weight block");
  }
  return m;
}

inline KtModel load_model(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open model file " + path.string());
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

inline void save_model(const KtModel &m, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write model file " + path.string());
  }
  const auto bytes = serialize_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error("write failed for " + path.string());
  }
}

} // namespace ktcf
