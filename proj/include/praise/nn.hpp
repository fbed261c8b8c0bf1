#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <utility>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "praise/errors.hpp"
#include "praise/rng.hpp"
#include "praise/text.hpp"

namespace praise {

enum class Activation { Tanh, Relu };

inline std::string_view activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

inline Activation activation_from_name(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ValidationError("unknown activation: " + std::string(name));
}

// Fixed-window MLP: the last context_window token ids (left-padded with the
// pad id) embed to a concatenated input, run through hidden layers, and end
// in a token-logits head plus a scalar value head on the shared trunk.
struct NetworkConfig {
  int vocab_size = 0;
  int embed_dim = 0;
  int context_window = 0;
  std::vector<int> hidden_dims;
  Activation activation = Activation::Tanh;

  void validate() const {
    if (vocab_size < 2) throw ValidationError("vocab_size must be >= 2");
    if (embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
    if (context_window < 1) throw ValidationError("context_window must be >= 1");
    if (hidden_dims.empty()) throw ValidationError("need at least one hidden layer");
    for (const int h : hidden_dims) {
      if (h < 1) throw ValidationError("hidden dims must be >= 1");
    }
  }
};

struct ParamView {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ParameterLayout {
  ParamView embedding;  // vocab x embed, row-major
  struct Layer {
    ParamView w;  // out x in, row-major
    ParamView b;  // out
    int in = 0;
    int out = 0;
  };
  std::vector<Layer> layers;
  ParamView out_w;    // vocab x h_last
  ParamView out_b;    // vocab
  ParamView value_w;  // h_last
  ParamView value_b;  // 1
  std::size_t total = 0;
};

inline ParameterLayout make_layout(const NetworkConfig& cfg) {
  cfg.validate();
  ParameterLayout lay;
  std::size_t off = 0;
  const auto take = [&off](std::size_t n) {
    const ParamView v{off, n};
    off += n;
    return v;
  };
  lay.embedding = take(static_cast<std::size_t>(cfg.vocab_size) *
                       static_cast<std::size_t>(cfg.embed_dim));
  int in = cfg.context_window * cfg.embed_dim;
  for (const int h : cfg.hidden_dims) {
    ParameterLayout::Layer layer;
    layer.in = in;
    layer.out = h;
    layer.w = take(static_cast<std::size_t>(h) * static_cast<std::size_t>(in));
    layer.b = take(static_cast<std::size_t>(h));
    lay.layers.push_back(layer);
    in = h;
  }
  lay.out_w = take(static_cast<std::size_t>(cfg.vocab_size) * static_cast<std::size_t>(in));
  lay.out_b = take(static_cast<std::size_t>(cfg.vocab_size));
  lay.value_w = take(static_cast<std::size_t>(in));
  lay.value_b = take(1);
  lay.total = off;
  return lay;
}

// Flat parameter vector plus the named views into it.
struct ParameterStore {
  NetworkConfig config;
  ParameterLayout layout;
  std::vector<double> values;

  static ParameterStore init(const NetworkConfig& cfg, std::uint64_t seed) {
    ParameterStore store;
    store.config = cfg;
    store.layout = make_layout(cfg);
    store.values.resize(store.layout.total);
    Rng rng(Rng::mix(seed, 0x696e6974ULL));  // "init"
    for (double& x : store.values) x = rng.uniform(-0.08, 0.08);
    return store;
  }

  std::span<double> view(const ParamView& v) {
    return std::span<double>(values.data() + v.offset, v.size);
  }
  std::span<const double> view(const ParamView& v) const {
    return std::span<const double>(values.data() + v.offset, v.size);
  }
};

// Everything forward() computed, kept for the exact backward pass.
struct ForwardTrace {
  std::vector<int> window;                 // padded ids, length context_window
  std::vector<double> input;               // window * embed
  std::vector<std::vector<double>> pre;    // per layer, pre-activation
  std::vector<std::vector<double>> act;    // per layer, post-activation
  std::vector<double> logits;              // vocab
  std::vector<double> probs;               // vocab
  double logsumexp = 0.0;
  double value = 0.0;
};

class Network {
 public:
  explicit Network(NetworkConfig cfg) : cfg_(std::move(cfg)), layout_(make_layout(cfg_)) {}

  const NetworkConfig& config() const { return cfg_; }
  const ParameterLayout& layout() const { return layout_; }

  // context may have any length; the last context_window ids are used,
  // left-padded with the pad id.
  void forward(std::span<const double> params, std::span<const int> context,
               ForwardTrace& t) const {
    check_params(params);
    const int W = cfg_.context_window;
    const int E = cfg_.embed_dim;
    t.window.assign(static_cast<std::size_t>(W), Vocabulary::kPadId);
    const std::size_t n = context.size();
    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(W));
    for (std::size_t k = 0; k < take; ++k) {
      t.window[static_cast<std::size_t>(W) - take + k] = context[n - take + k];
    }
    t.input.resize(static_cast<std::size_t>(W) * static_cast<std::size_t>(E));
    const double* emb = params.data() + layout_.embedding.offset;
    for (int j = 0; j < W; ++j) {
      const int id = t.window[static_cast<std::size_t>(j)];
      if (id < 0 || id >= cfg_.vocab_size) throw ShapeMismatchError("token id out of range");
      const double* row = emb + static_cast<std::size_t>(id) * static_cast<std::size_t>(E);
      double* dst = t.input.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(E);
      for (int k = 0; k < E; ++k) dst[k] = row[k];
    }

    const std::size_t L = layout_.layers.size();
    t.pre.resize(L);
    t.act.resize(L);
    const double* x = t.input.data();
    std::size_t x_len = t.input.size();
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = layout_.layers[l];
      t.pre[l].resize(static_cast<std::size_t>(layer.out));
      t.act[l].resize(static_cast<std::size_t>(layer.out));
      const double* wp = params.data() + layer.w.offset;
      const double* bp = params.data() + layer.b.offset;
      for (int o = 0; o < layer.out; ++o) {
        const double* row = wp + static_cast<std::size_t>(o) * x_len;
        double z = bp[o];
        for (std::size_t i = 0; i < x_len; ++i) z += row[i] * x[i];
        t.pre[l][static_cast<std::size_t>(o)] = z;
        t.act[l][static_cast<std::size_t>(o)] =
            cfg_.activation == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
      }
      x = t.act[l].data();
      x_len = t.act[l].size();
    }

    t.logits.resize(static_cast<std::size_t>(cfg_.vocab_size));
    const double* ow = params.data() + layout_.out_w.offset;
    const double* ob = params.data() + layout_.out_b.offset;
    for (int v = 0; v < cfg_.vocab_size; ++v) {
      const double* row = ow + static_cast<std::size_t>(v) * x_len;
      double z = ob[v];
      for (std::size_t i = 0; i < x_len; ++i) z += row[i] * x[i];
      t.logits[static_cast<std::size_t>(v)] = z;
    }
    double mx = t.logits[0];
    for (const double z : t.logits) mx = std::max(mx, z);
    double s = 0.0;
    for (const double z : t.logits) s += std::exp(z - mx);
    t.logsumexp = mx + std::log(s);
    t.probs.resize(t.logits.size());
    for (std::size_t v = 0; v < t.logits.size(); ++v) {
      t.probs[v] = std::exp(t.logits[v] - t.logsumexp);
    }

    const double* vw = params.data() + layout_.value_w.offset;
    double val = params[layout_.value_b.offset];
    for (std::size_t i = 0; i < x_len; ++i) val += vw[i] * x[i];
    t.value = val;
  }

  double log_prob(const ForwardTrace& t, int token) const {
    if (token < 0 || token >= cfg_.vocab_size) throw ShapeMismatchError("token id out of range");
    return t.logits[static_cast<std::size_t>(token)] - t.logsumexp;
  }

  // Accumulates d(loss)/d(params) into grad given upstream gradients on the
  // logits (may be empty for value-only) and on the value output.
  void backward(std::span<const double> params, const ForwardTrace& t,
                std::span<const double> dlogits, double dvalue,
                std::span<double> grad) const {
    check_params(params);
    if (grad.size() != layout_.total) throw ShapeMismatchError("grad size mismatch");
    if (!dlogits.empty() && dlogits.size() != static_cast<std::size_t>(cfg_.vocab_size)) {
      throw ShapeMismatchError("dlogits size mismatch");
    }
    const std::size_t L = layout_.layers.size();
    const std::size_t h_len = t.act[L - 1].size();
    const double* h_last = t.act[L - 1].data();
    std::vector<double> dh(h_len, 0.0);

    if (!dlogits.empty()) {
      const double* ow = params.data() + layout_.out_w.offset;
      double* gow = grad.data() + layout_.out_w.offset;
      double* gob = grad.data() + layout_.out_b.offset;
      for (int v = 0; v < cfg_.vocab_size; ++v) {
        const double d = dlogits[static_cast<std::size_t>(v)];
        if (d == 0.0) continue;
        const double* row = ow + static_cast<std::size_t>(v) * h_len;
        double* grow = gow + static_cast<std::size_t>(v) * h_len;
        for (std::size_t i = 0; i < h_len; ++i) {
          grow[i] += d * h_last[i];
          dh[i] += d * row[i];
        }
        gob[v] += d;
      }
    }
    if (dvalue != 0.0) {
      const double* vw = params.data() + layout_.value_w.offset;
      double* gvw = grad.data() + layout_.value_w.offset;
      for (std::size_t i = 0; i < h_len; ++i) {
        gvw[i] += dvalue * h_last[i];
        dh[i] += dvalue * vw[i];
      }
      grad[layout_.value_b.offset] += dvalue;
    }

    std::vector<double> dprev;
    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = layout_.layers[l];
      const std::size_t in_len = static_cast<std::size_t>(layer.in);
      const double* prev = (l == 0) ? t.input.data() : t.act[l - 1].data();
      // dz = dh * act'(pre)
      std::vector<double>& dz = dh;
      for (int o = 0; o < layer.out; ++o) {
        const std::size_t oi = static_cast<std::size_t>(o);
        if (cfg_.activation == Activation::Tanh) {
          const double a = t.act[l][oi];
          dz[oi] *= (1.0 - a * a);
        } else {
          dz[oi] *= (t.pre[l][oi] > 0.0) ? 1.0 : 0.0;
        }
      }
      const double* wp = params.data() + layer.w.offset;
      double* gw = grad.data() + layer.w.offset;
      double* gb = grad.data() + layer.b.offset;
      dprev.assign(in_len, 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double d = dz[static_cast<std::size_t>(o)];
        gb[o] += d;
        if (d == 0.0) continue;
        const double* row = wp + static_cast<std::size_t>(o) * in_len;
        double* grow = gw + static_cast<std::size_t>(o) * in_len;
        for (std::size_t i = 0; i < in_len; ++i) {
          grow[i] += d * prev[i];
          dprev[i] += d * row[i];
        }
      }
      dh = std::move(dprev);
    }

    // dh is now d(loss)/d(input); scatter into embedding rows.
    const int E = cfg_.embed_dim;
    double* gemb = grad.data() + layout_.embedding.offset;
    for (int j = 0; j < cfg_.context_window; ++j) {
      const int id = t.window[static_cast<std::size_t>(j)];
      double* grow = gemb + static_cast<std::size_t>(id) * static_cast<std::size_t>(E);
      const double* src = dh.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(E);
      for (int k = 0; k < E; ++k) grow[k] += src[k];
    }
  }

 private:
  void check_params(std::span<const double> params) const {
    if (params.size() != layout_.total) throw ShapeMismatchError("param size mismatch");
  }

  NetworkConfig cfg_;
  ParameterLayout layout_;
};

// One next-token prediction target. weight scales this sample's loss term.
struct NllSample {
  std::vector<int> context;
  int target = 0;
  double weight = 1.0;
};

inline double weighted_nll_loss(const Network& net, std::span<const double> params,
                                std::span<const NllSample> samples) {
  ForwardTrace t;
  double loss = 0.0;
  for (const NllSample& s : samples) {
    net.forward(params, s.context, t);
    loss += s.weight * -net.log_prob(t, s.target);
  }
  return loss;
}

inline void weighted_nll_backward(const Network& net, std::span<const double> params,
                                  std::span<const NllSample> samples,
                                  std::span<double> grad) {
  ForwardTrace t;
  std::vector<double> dlogits;
  for (const NllSample& s : samples) {
    net.forward(params, s.context, t);
    dlogits.assign(t.probs.begin(), t.probs.end());
    for (double& d : dlogits) d *= s.weight;
    dlogits[static_cast<std::size_t>(s.target)] -= s.weight;
    net.backward(params, t, dlogits, 0.0, grad);
  }
}

// One value regression target.
struct ValueSample {
  std::vector<int> context;
  double target = 0.0;
  double weight = 1.0;
};

inline double value_mse_loss(const Network& net, std::span<const double> params,
                             std::span<const ValueSample> samples) {
  ForwardTrace t;
  double loss = 0.0;
  for (const ValueSample& s : samples) {
    net.forward(params, s.context, t);
    const double d = t.value - s.target;
    loss += s.weight * d * d;
  }
  return loss;
}

inline void value_mse_backward(const Network& net, std::span<const double> params,
                               std::span<const ValueSample> samples,
                               std::span<double> grad) {
  ForwardTrace t;
  for (const ValueSample& s : samples) {
    net.forward(params, s.context, t);
    net.backward(params, t, {}, s.weight * 2.0 * (t.value - s.target), grad);
  }
}

// Adam with bias correction. State vectors are index-aligned with params.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState init(std::size_t n, double lr) {
    OptimizerState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.learning_rate = lr;
    return s;
  }
};

inline void adam_step(std::vector<double>& params, std::span<const double> grads,
                      OptimizerState& opt) {
  if (params.size() != grads.size() || params.size() != opt.m.size() ||
      params.size() != opt.v.size()) {
    throw ShapeMismatchError("adam state/param/grad sizes must agree");
  }
  opt.step += 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
    const double mhat = opt.m[i] / c1;
    const double vhat = opt.v[i] / c2;
    params[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
  }
}

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = false;
};

// Central finite differences against an analytic gradient. Relative error is
// |fd - g| / max(|fd| + |g|, 1e-8) per coordinate.
inline FdReport finite_difference_check(std::vector<double>& params,
                                        std::span<const double> analytic,
                                        const std::function<double(std::span<const double>)>& loss,
                                        double tolerance, double step = 1e-5) {
  if (params.size() != analytic.size()) {
    throw ShapeMismatchError("analytic gradient size mismatch");
  }
  FdReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = loss(params);
    params[i] = saved - step;
    const double down = loss(params);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double g = analytic[i];
    const double rel = std::abs(fd - g) / std::max(std::abs(fd) + std::abs(g), 1e-8);
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
      rep.analytic_at_worst = g;
      rep.numeric_at_worst = fd;
    }
  }
  rep.pass = rep.max_rel_error < tolerance;
  return rep;
}

namespace detail {

inline void write_doubles(std::ostream& os, std::span<const double> xs) {
  char buf[64];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a", xs[i]);
    os << buf << ((i + 1) % 8 == 0 ? '\n' : ' ');
  }
  if (xs.size() % 8 != 0) os << '\n';
}

inline void read_doubles(std::istream& is, std::span<double> xs) {
  std::string tok;
  for (double& x : xs) {
    if (!(is >> tok)) throw IoError("checkpoint truncated while reading values");
    char* end = nullptr;
    x = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw IoError("bad checkpoint value: " + tok);
    }
  }
}

}  // namespace detail

// Versioned text checkpoint: config, flat params, Adam state. Values are
// hexfloats, so save/load round-trips bit-exactly.
inline void save_checkpoint(std::ostream& os, const ParameterStore& store,
                            const OptimizerState& opt) {
  os << "praise-checkpoint v1\n";
  os << "config vocab=" << store.config.vocab_size << " embed=" << store.config.embed_dim
     << " window=" << store.config.context_window << " activation="
     << activation_name(store.config.activation) << " hidden=";
  for (std::size_t i = 0; i < store.config.hidden_dims.size(); ++i) {
    os << (i ? "," : "") << store.config.hidden_dims[i];
  }
  os << "\nparams " << store.values.size() << "\n";
  detail::write_doubles(os, store.values);
  char buf[4][64];
  std::snprintf(buf[0], sizeof buf[0], "%a", opt.learning_rate);
  std::snprintf(buf[1], sizeof buf[1], "%a", opt.beta1);
  std::snprintf(buf[2], sizeof buf[2], "%a", opt.beta2);
  std::snprintf(buf[3], sizeof buf[3], "%a", opt.epsilon);
  os << "adam lr=" << buf[0] << " beta1=" << buf[1] << " beta2=" << buf[2]
     << " eps=" << buf[3] << " step=" << opt.step << "\n";
  os << "m " << opt.m.size() << "\n";
  detail::write_doubles(os, opt.m);
  os << "v " << opt.v.size() << "\n";
  detail::write_doubles(os, opt.v);
  os << "end\n";
  if (!os) throw IoError("failed writing checkpoint");
}

inline std::pair<ParameterStore, OptimizerState> load_checkpoint(std::istream& is) {
  std::string magic, version;
  if (!(is >> magic >> version) || magic != "praise-checkpoint" || version != "v1") {
    throw IoError("not a praise-checkpoint v1 file");
  }
  std::string word;
  if (!(is >> word) || word != "config") throw IoError("checkpoint missing config line");
  NetworkConfig cfg;
  std::string field;
  for (int k = 0; k < 5; ++k) {
    if (!(is >> field)) throw IoError("checkpoint config truncated");
    const std::size_t eq = field.find('=');
    if (eq == std::string::npos) throw IoError("bad checkpoint config field: " + field);
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    try {
      if (key == "vocab") {
        cfg.vocab_size = std::stoi(val);
      } else if (key == "embed") {
        cfg.embed_dim = std::stoi(val);
      } else if (key == "window") {
        cfg.context_window = std::stoi(val);
      } else if (key == "activation") {
        cfg.activation = activation_from_name(val);
      } else if (key == "hidden") {
        std::size_t start = 0;
        while (start <= val.size()) {
          const std::size_t comma = val.find(',', start);
          const std::string part =
              val.substr(start, comma == std::string::npos ? std::string::npos
                                                           : comma - start);
          if (part.empty()) throw IoError("bad hidden dims in checkpoint");
          cfg.hidden_dims.push_back(std::stoi(part));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
      } else {
        throw IoError("unknown checkpoint config key: " + key);
      }
    } catch (const std::invalid_argument&) {
      throw IoError("bad checkpoint config value: " + field);
    } catch (const std::out_of_range&) {
      throw IoError("bad checkpoint config value: " + field);
    }
  }
  ParameterStore store;
  store.config = cfg;
  store.layout = make_layout(cfg);

  std::size_t n = 0;
  if (!(is >> word >> n) || word != "params") throw IoError("checkpoint missing params");
  if (n != store.layout.total) {
    throw IoError("checkpoint param count does not match its config");
  }
  store.values.resize(n);
  detail::read_doubles(is, store.values);

  OptimizerState opt;
  if (!(is >> word) || word != "adam") throw IoError("checkpoint missing adam line");
  for (int k = 0; k < 5; ++k) {
    if (!(is >> field)) throw IoError("checkpoint adam line truncated");
    const std::size_t eq = field.find('=');
    if (eq == std::string::npos) throw IoError("bad adam field: " + field);
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    char* end = nullptr;
    if (key == "step") {
      opt.step = std::strtoll(val.c_str(), &end, 10);
      if (end == val.c_str() || *end != '\0') throw IoError("bad adam step: " + val);
      continue;
    }
    const double x = std::strtod(val.c_str(), &end);
    if (end == val.c_str() || *end != '\0') throw IoError("bad adam value: " + field);
    if (key == "lr") {
      opt.learning_rate = x;
    } else if (key == "beta1") {
      opt.beta1 = x;
    } else if (key == "beta2") {
      opt.beta2 = x;
    } else if (key == "eps") {
      opt.epsilon = x;
    } else {
      throw IoError("unknown adam key: " + key);
    }
  }
  if (!(is >> word >> n) || word != "m" || n != store.values.size()) {
    throw IoError("checkpoint missing adam m vector");
  }
  opt.m.resize(n);
  detail::read_doubles(is, opt.m);
  if (!(is >> word >> n) || word != "v" || n != store.values.size()) {
    throw IoError("checkpoint missing adam v vector");
  }
  opt.v.resize(n);
  detail::read_doubles(is, opt.v);
  if (!(is >> word) || word != "end") throw IoError("checkpoint missing end marker");
  return {std::move(store), std::move(opt)};
}

}  // namespace praise
