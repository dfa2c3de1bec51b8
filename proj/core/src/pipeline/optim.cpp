#include "aio/pipeline/optim.hpp"

#include <cmath>
#include <numbers>

namespace aio::inline AIO_ABI {

AdamWConfig AdamWConfig::from(const Config& c) {
  AdamWConfig a;
  a.lr = c.get_real("lr");
  a.beta1 = c.get_real("beta1");
  a.beta2 = c.get_real("beta2");
  a.eps = c.get_real("eps");
  a.weight_decay = c.get_real("weight_decay");
  a.clip_norm = c.get_real("clip_norm");
  a.warmup = c.get_u64("warmup");
  if (a.lr < 0 || a.weight_decay < 0 || a.clip_norm < 0 || a.eps <= 0) throw ConfigError("invalid optimizer settings");
  if (!(a.beta1 >= 0 && a.beta1 < 1 && a.beta2 >= 0 && a.beta2 < 1)) throw ConfigError("AdamW betas must lie in [0,1)");
  return a;
}

double cosine_lr(double peak, std::uint64_t step, std::uint64_t total, std::uint64_t warmup) {
  if (step < warmup) return peak * double(step + 1) / double(warmup);
  if (total <= warmup) return peak;
  const double progress = double(step - warmup) / double(total - warmup);
  return peak * 0.5 * (1 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

double global_grad_norm(const ParamStore& params) {
  double ss = 0;
  for (const auto& [name, p] : params.entries())
    if (p.has_grad())
      for (auto g : p.grad()) ss += double(g) * double(g);
  return std::sqrt(ss);
}

AdamW::AdamW(const ParamStore& params, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& [name, p] : params.entries()) {
    m_.emplace_back(p.numel(), Real(0));
    v_.emplace_back(p.numel(), Real(0));
  }
}

double AdamW::step(const ParamStore& params, double lr) {
  const auto& entries = params.entries();
  if (entries.size() != m_.size()) throw ContractError("optimizer was built for a different parameter set");
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip = cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor p = entries[k].second;
    if (!p.has_grad()) continue;
    auto w = p.mutable_values();
    auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = double(g[i]) * clip;
      m[i] = Real(cfg_.beta1 * double(m[i]) + (1 - cfg_.beta1) * gi);
      v[i] = Real(cfg_.beta2 * double(v[i]) + (1 - cfg_.beta2) * gi * gi);
      const double update = (double(m[i]) / bc1) / (std::sqrt(double(v[i]) / bc2) + cfg_.eps);
      w[i] = Real(double(w[i]) - lr * (update + cfg_.weight_decay * double(w[i])));
    }
  }
  return norm;
}

}  // namespace aio::inline AIO_ABI
