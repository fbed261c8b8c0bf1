#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "praise/nn.hpp"
#include "praise/rng.hpp"
#include "praise/trainer.hpp"

namespace praise {

// Finite-difference verification of the training objectives on small random
// networks. Each case pairs a scalar loss closure with the analytic gradient
// produced by the same code path the optimizer runs.

struct GradCheckCase {
  std::string name;
  FdReport report;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double fd_step = 1e-5;
  // When >= 0, perturbs that coordinate of every analytic gradient before the
  // comparison. Used to prove the harness actually detects wrong gradients.
  long long inject_fault = -1;
};

namespace detail {

struct PpoCheckToken {
  std::vector<int> context;
  int id = 0;
  double old_logprob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

// Tanh only: relu's kink at zero pre-activation breaks central differences.
inline NetworkConfig gradcheck_network_config() {
  NetworkConfig cfg;
  cfg.vocab_size = 13;
  cfg.embed_dim = 3;
  cfg.context_window = 5;
  cfg.hidden_dims = {7};
  cfg.activation = Activation::Tanh;
  return cfg;
}

inline std::vector<PpoCheckToken> gradcheck_tokens(const Network& net,
                                                   std::span<const double> params,
                                                   const NetworkConfig& cfg, Rng& rng,
                                                   bool zero_advantages) {
  std::vector<PpoCheckToken> tokens(8);
  ForwardTrace trace;
  for (PpoCheckToken& tok : tokens) {
    const int len = 1 + rng.below_int(cfg.context_window + 2);
    tok.context.resize(static_cast<std::size_t>(len));
    for (int& c : tok.context) c = rng.below_int(cfg.vocab_size);
    tok.id = rng.below_int(cfg.vocab_size);
    net.forward(params, tok.context, trace);
    // Small offset keeps every ratio strictly inside (1 - eps, 1 + eps), so
    // the clipped surrogate is smooth at the evaluation point.
    tok.old_logprob = net.log_prob(trace, tok.id) + rng.uniform(-0.05, 0.05);
    tok.advantage = zero_advantages ? 0.0 : rng.uniform(-1.0, 1.0);
    tok.ret = rng.uniform(-1.0, 1.0);
  }
  return tokens;
}

inline double ppo_check_loss(const Network& net, std::span<const double> params,
                             const std::vector<PpoCheckToken>& tokens, double epsilon,
                             double value_coef, double entropy_coef) {
  ForwardTrace trace;
  const double inv_n = 1.0 / static_cast<double>(tokens.size());
  double loss = 0.0;
  for (const PpoCheckToken& tok : tokens) {
    const PpoTokenTerms t = ppo_token_terms(net, params, tok.context, tok.id,
                                            tok.old_logprob, tok.advantage, tok.ret,
                                            epsilon, trace);
    loss += inv_n * (t.actor_term + value_coef * t.critic_se - entropy_coef * t.entropy);
  }
  return loss;
}

inline void ppo_check_grad(const Network& net, std::span<const double> params,
                           const std::vector<PpoCheckToken>& tokens, double epsilon,
                           double value_coef, double entropy_coef,
                           std::span<double> grad) {
  ForwardTrace trace;
  std::vector<double> dlogits;
  const double inv_n = 1.0 / static_cast<double>(tokens.size());
  for (const PpoCheckToken& tok : tokens) {
    ppo_token_grad(net, params, tok.context, tok.id, tok.old_logprob, tok.advantage,
                   tok.ret, epsilon, inv_n, value_coef, entropy_coef, trace, dlogits,
                   grad);
  }
}

}  // namespace detail

inline std::vector<GradCheckCase> run_gradient_checks(const GradCheckOptions& opt) {
  const NetworkConfig cfg = detail::gradcheck_network_config();
  const Network net(cfg);
  ParameterStore store = ParameterStore::init(cfg, Rng::mix(opt.seed, 0x67636b30ULL));
  Rng rng(Rng::mix(opt.seed, 0x67636b31ULL));
  const double epsilon = 0.2;

  const std::vector<detail::PpoCheckToken> tokens =
      detail::gradcheck_tokens(net, store.values, cfg, rng, false);
  const std::vector<detail::PpoCheckToken> zero_adv =
      detail::gradcheck_tokens(net, store.values, cfg, rng, true);

  std::vector<NllSample> nll(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    nll[i].context = tokens[i].context;
    nll[i].target = tokens[i].id;
    nll[i].weight = 1.0 / static_cast<double>(tokens.size());
  }
  std::vector<ValueSample> vals(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    vals[i].context = tokens[i].context;
    vals[i].target = tokens[i].ret;
    vals[i].weight = 1.0 / static_cast<double>(tokens.size());
  }

  struct CaseSpec {
    std::string name;
    std::function<double(std::span<const double>)> loss;
    std::function<void(std::span<const double>, std::span<double>)> grad;
  };
  std::vector<CaseSpec> specs;
  specs.push_back({"actor",
                   [&](std::span<const double> p) {
                     return detail::ppo_check_loss(net, p, tokens, epsilon, 0.0, 0.0);
                   },
                   [&](std::span<const double> p, std::span<double> g) {
                     detail::ppo_check_grad(net, p, tokens, epsilon, 0.0, 0.0, g);
                   }});
  specs.push_back({"critic",
                   [&](std::span<const double> p) {
                     return detail::ppo_check_loss(net, p, zero_adv, epsilon, 1.0, 0.0);
                   },
                   [&](std::span<const double> p, std::span<double> g) {
                     detail::ppo_check_grad(net, p, zero_adv, epsilon, 1.0, 0.0, g);
                   }});
  specs.push_back({"combined",
                   [&](std::span<const double> p) {
                     return detail::ppo_check_loss(net, p, tokens, epsilon, 0.5, 0.01);
                   },
                   [&](std::span<const double> p, std::span<double> g) {
                     detail::ppo_check_grad(net, p, tokens, epsilon, 0.5, 0.01, g);
                   }});
  specs.push_back({"nll",
                   [&](std::span<const double> p) {
                     return weighted_nll_loss(net, p, nll);
                   },
                   [&](std::span<const double> p, std::span<double> g) {
                     weighted_nll_backward(net, p, nll, g);
                   }});
  specs.push_back({"value_mse",
                   [&](std::span<const double> p) {
                     return value_mse_loss(net, p, vals);
                   },
                   [&](std::span<const double> p, std::span<double> g) {
                     value_mse_backward(net, p, vals, g);
                   }});

  std::vector<GradCheckCase> out;
  std::vector<double> grad(store.layout.total, 0.0);
  for (const CaseSpec& spec : specs) {
    std::fill(grad.begin(), grad.end(), 0.0);
    spec.grad(store.values, grad);
    if (opt.inject_fault >= 0 &&
        opt.inject_fault < static_cast<long long>(grad.size())) {
      double& g = grad[static_cast<std::size_t>(opt.inject_fault)];
      g += 0.1 * (1.0 + std::abs(g));
    }
    GradCheckCase c;
    c.name = spec.name;
    c.report = finite_difference_check(store.values, grad, spec.loss, opt.tolerance,
                                       opt.fd_step);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace praise
