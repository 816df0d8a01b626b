#pragma once

// Minimal neural stack for path functionals: an LSTM chain that summarizes the
// wealth path, a tanh feedforward head, exact reverse-mode gradients, and a
// flat parameter vector so the optimizer never sees the structure.
//
// The value functional is u(X_{0..k}) = head(t_k, x_k, a_{k-1}) where a_{k-1}
// is the LSTM summary of the strict prefix x_0..x_{k-1} (zero for k = 0).

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pathmv/path_grid.hpp"
#include "pathmv/rng.hpp"

namespace pathmv {

struct NetConfig {
  int hidden = 32;                      // LSTM state size H
  std::vector<int> widths = {64, 64, 64};  // head hidden layers, tanh
  double t_scale = 1.0;                 // head sees t / t_scale
  double x_center = 1.0;                // both stages see (x - x_center) / x_scale
  double x_scale = 0.5;
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

// Parameters live in one flat vector; the class only knows the layout.
// Order: LSTM input weights (4H x 1), recurrent weights (4H x H), gate biases
// (4H), then each head layer's weight matrix (column-major) and bias. Gate
// rows are packed [input, forget, candidate, output].
class Network {
 public:
  Eigen::VectorXd theta;

  explicit Network(NetConfig cfg = {}) : cfg_(std::move(cfg)) {
    if (cfg_.hidden < 1) throw std::invalid_argument("Network: hidden size must be >= 1");
    if (!(cfg_.t_scale > 0.0) || !(cfg_.x_scale > 0.0))
      throw std::invalid_argument("Network: scales must be positive");
    for (int w : cfg_.widths)
      if (w < 1) throw std::invalid_argument("Network: head widths must be >= 1");
    const int H = cfg_.hidden;
    dims_.push_back(2 + H);
    for (int w : cfg_.widths) dims_.push_back(w);
    dims_.push_back(1);

    Eigen::Index off = 0;
    ox_ = off; off += 4 * H;          // wx: 4H x 1
    oh_ = off; off += 4 * H * H;      // wh: 4H x H
    ob_ = off; off += 4 * H;          // b:  4H
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      ow_.push_back(off); off += dims_[l + 1] * dims_[l];
      obl_.push_back(off); off += dims_[l + 1];
    }
    theta = Eigen::VectorXd::Zero(off);
  }

  const NetConfig& config() const { return cfg_; }
  int hidden() const { return cfg_.hidden; }
  int head_layers() const { return static_cast<int>(dims_.size()) - 1; }
  int layer_in(int l) const { return dims_[static_cast<std::size_t>(l)]; }
  int layer_out(int l) const { return dims_[static_cast<std::size_t>(l) + 1]; }
  Eigen::Index param_count() const { return theta.size(); }

  double standardize_x(double x) const { return (x - cfg_.x_center) / cfg_.x_scale; }
  double standardize_t(double t) const { return t / cfg_.t_scale; }

  // flat-layout views over own parameters
  Eigen::Map<const Eigen::MatrixXd> wx() const { return {theta.data() + ox_, 4 * cfg_.hidden, 1}; }
  Eigen::Map<const Eigen::MatrixXd> wh() const {
    return {theta.data() + oh_, 4 * cfg_.hidden, cfg_.hidden};
  }
  Eigen::Map<const Eigen::VectorXd> b() const { return {theta.data() + ob_, 4 * cfg_.hidden}; }
  Eigen::Map<const Eigen::MatrixXd> w(int l) const {
    return {theta.data() + ow_[static_cast<std::size_t>(l)], layer_out(l), layer_in(l)};
  }
  Eigen::Map<const Eigen::VectorXd> bl(int l) const {
    return {theta.data() + obl_[static_cast<std::size_t>(l)], layer_out(l)};
  }

  // the same views over an external accumulator (e.g. a gradient)
  Eigen::Map<Eigen::MatrixXd> wx(Eigen::VectorXd& v) const {
    return {v.data() + ox_, 4 * cfg_.hidden, 1};
  }
  Eigen::Map<Eigen::MatrixXd> wh(Eigen::VectorXd& v) const {
    return {v.data() + oh_, 4 * cfg_.hidden, cfg_.hidden};
  }
  Eigen::Map<Eigen::VectorXd> b(Eigen::VectorXd& v) const { return {v.data() + ob_, 4 * cfg_.hidden}; }
  Eigen::Map<Eigen::MatrixXd> w(int l, Eigen::VectorXd& v) const {
    return {v.data() + ow_[static_cast<std::size_t>(l)], layer_out(l), layer_in(l)};
  }
  Eigen::Map<Eigen::VectorXd> bl(int l, Eigen::VectorXd& v) const {
    return {v.data() + obl_[static_cast<std::size_t>(l)], layer_out(l)};
  }

  // Uniform +-1/sqrt(fan_in) weights, zero biases except forget-gate bias +1.
  // The draw order (LSTM input, recurrent, head layer by layer, column-major)
  // is part of the determinism contract.
  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "net-init"));
    const int H = cfg_.hidden;
    const double s_lstm = 1.0 / std::sqrt(1.0 + H);
    auto u = [&](double s) { return s * (2.0 * rng.uniform() - 1.0); };

    auto wxm = wx(theta);
    for (int i = 0; i < 4 * H; ++i) wxm(i, 0) = u(s_lstm);
    auto whm = wh(theta);
    for (int j = 0; j < H; ++j)
      for (int i = 0; i < 4 * H; ++i) whm(i, j) = u(s_lstm);
    auto bm = b(theta);
    bm.setZero();
    bm.segment(H, H).setOnes();  // forget gate starts open

    for (int l = 0; l < head_layers(); ++l) {
      const double s = 1.0 / std::sqrt(static_cast<double>(layer_in(l)));
      auto wm = w(l, theta);
      for (int j = 0; j < layer_in(l); ++j)
        for (int i = 0; i < layer_out(l); ++i) wm(i, j) = u(s);
      bl(l, theta).setZero();
    }
  }

 private:
  NetConfig cfg_;
  std::vector<int> dims_;
  Eigen::Index ox_ = 0, oh_ = 0, ob_ = 0;
  std::vector<Eigen::Index> ow_, obl_;
};

// ------------------------------------------------------------- LSTM chain

// Everything the backward pass needs, one column per consumed input.
struct LstmCache {
  std::vector<double> xin;           // standardized inputs
  Eigen::MatrixXd ig, fg, gg, og;    // gate activations, H x L
  Eigen::MatrixXd cc, tc, hh;        // cell, tanh(cell), summary, H x L
  int len() const { return static_cast<int>(xin.size()); }
};

// Runs the recursion over `count` leading values (summaries a_0..a_{count-1}),
// starting from zero state. count = 0 leaves the cache empty.
inline void lstm_forward(const std::vector<double>& values, std::size_t count,
                         const Network& net, LstmCache& cache) {
  if (count > values.size()) throw std::invalid_argument("lstm_forward: count out of range");
  const int H = net.hidden();
  const int L = static_cast<int>(count);
  cache.xin.resize(count);
  cache.ig.resize(H, L);
  cache.fg.resize(H, L);
  cache.gg.resize(H, L);
  cache.og.resize(H, L);
  cache.cc.resize(H, L);
  cache.tc.resize(H, L);
  cache.hh.resize(H, L);

  const auto wx = net.wx();
  const auto wh = net.wh();
  const auto b = net.b();
  Eigen::VectorXd z(4 * H);
  for (int k = 0; k < L; ++k) {
    const double x = net.standardize_x(values[static_cast<std::size_t>(k)]);
    cache.xin[static_cast<std::size_t>(k)] = x;
    z = wx.col(0) * x + b;
    if (k > 0) z.noalias() += wh * cache.hh.col(k - 1);
    for (int i = 0; i < H; ++i) {
      cache.ig(i, k) = detail::sigmoid(z[i]);
      cache.fg(i, k) = detail::sigmoid(z[H + i]);
      cache.gg(i, k) = std::tanh(z[2 * H + i]);
      cache.og(i, k) = detail::sigmoid(z[3 * H + i]);
    }
    if (k > 0)
      cache.cc.col(k) = cache.fg.col(k).cwiseProduct(cache.cc.col(k - 1)) +
                        cache.ig.col(k).cwiseProduct(cache.gg.col(k));
    else
      cache.cc.col(k) = cache.ig.col(k).cwiseProduct(cache.gg.col(k));
    cache.tc.col(k) = cache.cc.col(k).array().tanh();
    cache.hh.col(k) = cache.og.col(k).cwiseProduct(cache.tc.col(k));
  }
}

// All summaries a_0..a_k for a path, one column each.
inline Eigen::MatrixXd lstm_chain(const PathGrid& path, const Network& net) {
  LstmCache cache;
  lstm_forward(path.values, path.values.size(), net, cache);
  return cache.hh;
}

// Backpropagation through time. dh holds dLoss/d(summary_k) per column; LSTM
// parameter gradients are accumulated into `grad` (flat, Network layout).
inline void lstm_backward(const LstmCache& cache, const Network& net,
                          const Eigen::MatrixXd& dh, Eigen::VectorXd& grad) {
  const int H = net.hidden();
  const int L = cache.len();
  if (dh.rows() != H || dh.cols() != L)
    throw std::invalid_argument("lstm_backward: dh shape mismatch");
  if (grad.size() != net.param_count())
    throw std::invalid_argument("lstm_backward: grad size mismatch");
  if (L == 0) return;

  const auto wh = net.wh();
  auto gwx = net.wx(grad);
  auto gwh = net.wh(grad);
  auto gb = net.b(grad);

  Eigen::VectorXd dh_k = Eigen::VectorXd::Zero(H);   // carried from step k+1
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);     // carried cell gradient
  Eigen::VectorXd dz(4 * H), dct(H);
  for (int k = L - 1; k >= 0; --k) {
    dh_k += dh.col(k);
    dct = dh_k.cwiseProduct(cache.og.col(k))
              .cwiseProduct((1.0 - cache.tc.col(k).array().square()).matrix()) +
          dc;
    const auto i = cache.ig.col(k);
    const auto f = cache.fg.col(k);
    const auto g = cache.gg.col(k);
    const auto o = cache.og.col(k);
    dz.segment(0, H) = dct.cwiseProduct(g).cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
    if (k > 0)
      dz.segment(H, H) = dct.cwiseProduct(cache.cc.col(k - 1))
                             .cwiseProduct(f)
                             .cwiseProduct((1.0 - f.array()).matrix());
    else
      dz.segment(H, H).setZero();
    dz.segment(2 * H, H) = dct.cwiseProduct(i).cwiseProduct((1.0 - g.array().square()).matrix());
    dz.segment(3 * H, H) =
        dh_k.cwiseProduct(cache.tc.col(k)).cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());

    gwx.col(0) += dz * cache.xin[static_cast<std::size_t>(k)];
    if (k > 0) gwh.noalias() += dz * cache.hh.col(k - 1).transpose();
    gb += dz;

    dc = dct.cwiseProduct(f);
    if (k > 0)
      dh_k = wh.transpose() * dz;
    else
      dh_k.setZero();
  }
}

// ------------------------------------------------------------- head (MLP)

struct HeadCache {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> act;  // post-tanh activations per hidden layer
};

inline Eigen::VectorXd head_input(double t, double x, const Eigen::VectorXd& a,
                                  const Network& net) {
  if (a.size() != net.hidden()) throw std::invalid_argument("head_input: summary size mismatch");
  Eigen::VectorXd v(2 + net.hidden());
  v[0] = net.standardize_t(t);
  v[1] = net.standardize_x(x);
  v.tail(net.hidden()) = a;
  return v;
}

inline double head_forward(const Eigen::VectorXd& input, const Network& net,
                           HeadCache* cache) {
  if (input.size() != net.layer_in(0))
    throw std::invalid_argument("head_forward: input size mismatch");
  if (cache) {
    cache->input = input;
    cache->act.clear();
  }
  Eigen::VectorXd v = input;
  const int L = net.head_layers();
  for (int l = 0; l < L - 1; ++l) {
    v = (net.w(l) * v + net.bl(l)).array().tanh();
    if (cache) cache->act.push_back(v);
  }
  return (net.w(L - 1) * v + net.bl(L - 1))[0];
}

// Accumulates head parameter gradients into `grad`; optionally returns the
// gradient with respect to the input vector.
inline void head_backward(const HeadCache& cache, const Network& net, double dout,
                          Eigen::VectorXd& grad, Eigen::VectorXd* dinput) {
  if (grad.size() != net.param_count())
    throw std::invalid_argument("head_backward: grad size mismatch");
  const int L = net.head_layers();
  Eigen::VectorXd dv = Eigen::VectorXd::Constant(1, dout);
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::VectorXd& below = l > 0 ? cache.act[static_cast<std::size_t>(l) - 1] : cache.input;
    Eigen::VectorXd dpre;
    if (l == L - 1)
      dpre = dv;  // linear output layer
    else
      dpre = dv.cwiseProduct(
          (1.0 - cache.act[static_cast<std::size_t>(l)].array().square()).matrix());
    net.w(l, grad).noalias() += dpre * below.transpose();
    net.bl(l, grad) += dpre;
    dv = net.w(l).transpose() * dpre;
  }
  if (dinput) *dinput = dv;
}

// ------------------------------------------------------------- functional

// u(X) = head(t_k, x_k, a_{k-1}); a single point uses the zero summary.
inline double value(const PathGrid& path, const Network& net) {
  const std::size_t k = path.size() - 1;
  LstmCache cache;
  lstm_forward(path.values, k, net, cache);  // strict prefix
  const Eigen::VectorXd a =
      k >= 1 ? Eigen::VectorXd(cache.hh.col(static_cast<int>(k) - 1))
             : Eigen::VectorXd(Eigen::VectorXd::Zero(net.hidden()));
  return head_forward(head_input(path.time(k), path.values[k], a, net), net, nullptr);
}

// Exact reverse-mode gradient of value() with respect to every parameter.
inline std::pair<double, Eigen::VectorXd> value_and_grad(const PathGrid& path,
                                                         const Network& net) {
  const std::size_t k = path.size() - 1;
  LstmCache lstm;
  lstm_forward(path.values, k, net, lstm);
  const Eigen::VectorXd a =
      k >= 1 ? Eigen::VectorXd(lstm.hh.col(static_cast<int>(k) - 1))
             : Eigen::VectorXd(Eigen::VectorXd::Zero(net.hidden()));
  HeadCache head;
  const double u = head_forward(head_input(path.time(k), path.values[k], a, net), net, &head);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
  Eigen::VectorXd dinput;
  head_backward(head, net, 1.0, grad, &dinput);
  if (k >= 1) {
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(net.hidden(), static_cast<int>(k));
    dh.col(static_cast<int>(k) - 1) = dinput.tail(net.hidden());
    lstm_backward(lstm, net, dh, grad);
  }
  return {u, std::move(grad)};
}

}  // namespace pathmv
