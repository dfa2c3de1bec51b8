#include "aio/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "aio/numcore/rng.hpp"

namespace aio::inline AIO_ABI {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error << " coords=" << coords_checked
     << " worst=(input " << worst_input << ", index " << worst_index << ", analytic " << worst_analytic
     << ", numeric " << worst_numeric << ")";
  return os.str();
}

namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradScope no_grad;
  const Tensor y = f();
  if (y.numel() != 1) throw ContractError("grad_check: f must be scalar-valued, got " + shape_str(y.shape()));
  return double(y.item());
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& opt) {
  if (!(opt.h > 0)) throw ContractError("grad_check: h must be positive");

  std::vector<bool> previous(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    previous[i] = inputs[i].requires_grad();
    auto t = inputs[i];
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = f();
    if (y.numel() != 1) throw ContractError("grad_check: f must be scalar-valued, got " + shape_str(y.shape()));
    tape.backward(y);
  }

  GradCheckReport report;
  Rng rng(opt.seed, 0x67636b);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (opt.coords_per_input && opt.coords_per_input < coords.size()) {
      for (std::size_t k = 0; k < opt.coords_per_input; ++k) {
        const auto j = k + rng.below(coords.size() - k);
        std::swap(coords[k], coords[j]);
      }
      coords.resize(opt.coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    const bool has_grad = t.has_grad();
    for (auto c : coords) {
      auto vals = t.mutable_values();
      const Real x0 = vals[c];
      const Real xp = Real(double(x0) + opt.h);
      const Real xm = Real(double(x0) - opt.h);
      vals[c] = xp;
      const double fp = evaluate(f);
      vals[c] = xm;
      const double fm = evaluate(f);
      vals[c] = x0;
      const double numeric = (fp - fm) / (double(xp) - double(xm));
      const double analytic = has_grad ? double(t.grad()[c]) : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error || report.coords_checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) {
          report.worst_input = i;
          report.worst_index = c;
          report.worst_analytic = analytic;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto t = inputs[i];
    t.set_requires_grad(previous[i]);
  }
  report.passed = report.max_rel_error <= opt.tol;
  return report;
}

}  // namespace aio::inline AIO_ABI
