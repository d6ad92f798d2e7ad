// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "shotnet/rng.hpp"

namespace shotnet::verify {

void fill_uniform(Tensor<double>& t, std::uint64_t seed, double lo, double hi, double gap) {
  Rng rng(seed);
  for (double& v : t.data()) {
    do {
      v = rng.uniform(lo, hi);
    } while (gap > 0.0 && std::abs(v) < gap);
  }
}

GradCheckReport gradcheck(const std::string& name, const std::vector<Tensor<double>*>& inputs,
                          const std::function<double()>& f,
                          const std::vector<std::vector<double>>& analytic,
                          const GradCheckOptions& opt) {
  GradCheckReport rep;
  rep.name = name;
  Rng rng(opt.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& x = *inputs[k];
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > opt.max_elements) {
      rng.shuffle(std::span<std::size_t>(idx));
      idx.resize(opt.max_elements);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double saved = x[i];
      const auto at = [&](double offset) {
        x[i] = saved + offset;
        return f();
      };
      const auto estimate = [&](double h) {
        const double d1 = at(h) - at(-h);
        if (!opt.fourth_order) return d1 / (2.0 * h);
        const double d2 = at(2 * h) - at(-2 * h);
        return (8.0 * d1 - d2) / (12.0 * h);
      };
      const double numeric = estimate(opt.step);
      x[i] = saved;
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.denominator_floor});
      rep.max_rel_error = std::max(rep.max_rel_error, std::abs(a - numeric) / denom);
      ++rep.checked;
    }
  }
  rep.passed = rep.checked > 0 && rep.max_rel_error < opt.tolerance;
  return rep;
}

GradCheckReport directional_gradcheck(const std::string& name,
                                      const std::vector<Tensor<double>*>& inputs,
                                      const std::function<double()>& f,
                                      const std::vector<std::vector<double>>& analytic,
                                      const DirectionalOptions& opt) {
  GradCheckReport rep;
  rep.name = name;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& x = *inputs[k];
    Tensor<double> v(x.shape());
    fill_uniform(v, opt.seed + k, -1.0, 1.0);
    const std::vector<double> saved(x.data().begin(), x.data().end());
    const auto at = [&](double t) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = saved[i] + t * v[i];
      return f();
    };
    const auto central = [&](double h) { return (at(h) - at(-h)) / (2.0 * h); };
    double a = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) a += analytic[k][i] * v[i];

    std::optional<double> numeric;
    const auto agree = [&](double p, double q) {
      return std::abs(p - q) <= opt.agreement * std::max(std::abs(p), std::abs(q));
    };
    // Two noisy estimates can agree by chance; three in a row rarely do.
    for (double h : opt.steps) {
      const double n1 = central(h), n2 = central(h / 2), n4 = central(h / 4);
      if (agree(n1, n2) && agree(n2, n4)) {
        numeric = n4;
        break;
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = saved[i];
    if (!numeric) {
      ++rep.skipped;
      continue;
    }
    const double denom = std::max({std::abs(a), std::abs(*numeric), 1e-300});
    rep.max_rel_error = std::max(rep.max_rel_error, std::abs(a - *numeric) / denom);
    ++rep.checked;
  }
  rep.passed = rep.checked > 0 && rep.checked >= rep.skipped && rep.max_rel_error < opt.tolerance;
  return rep;
}

GradCheckReport gradcheck_graph(const std::string& name, const std::vector<Tensor<double>*>& inputs,
                                const GraphBuilder& build, const GradCheckOptions& opt) {
  // The projection weights are fixed once the output shape is known.
  Tensor<double> projection;
  const auto evaluate = [&](bool record) -> double {
    Graph<double> g(record);
    std::vector<Graph<double>::Var> leaves;
    for (auto* t : inputs) leaves.push_back(g.leaf(*t));
    const auto y = build(g, leaves);
    const Tensor<double>& v = g.value(y);
    if (projection.shape() != v.shape()) {
      projection = Tensor<double>(v.shape());
      fill_uniform(projection, opt.seed ^ 0xA5A5u, -1.0, 1.0);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += projection[i] * v[i];
    if (record) {
      const auto root = g.external_scalar(s, {{y, projection}});
      g.backward(root);
    }
    return s;
  };

  for (auto* t : inputs) t->zero_grad();
  evaluate(true);
  std::vector<std::vector<double>> analytic;
  for (auto* t : inputs) {
    const auto gspan = t->grad();
    analytic.emplace_back(gspan.begin(), gspan.end());
  }
  return gradcheck(name, inputs, [&] { return evaluate(false); }, analytic, opt);
}

}  // namespace shotnet::verify
