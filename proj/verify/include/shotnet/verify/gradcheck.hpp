// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shotnet/graph.hpp"
#include "shotnet/tensor.hpp"

namespace shotnet::verify {

struct GradCheckOptions {
  /// With `fourth_order`, (8[f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h;
  /// otherwise [f(x+h) - f(x-h)] / 2h.
  double step = 1e-3;
  bool fourth_order = true;
  double tolerance = 1e-4;
  /// |a - n| / max(|a|, |n|, floor); keeps round-off on near-zero entries
  /// from reading as a large relative error.
  double denominator_floor = 1e-6;
  /// Elements perturbed per input (all of them when the input is smaller).
  std::size_t max_elements = 48;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // directional check only
  bool passed = false;
};

/// Compares `analytic[k]` against central differences of `f` with respect to
/// `*inputs[k]`. `f` must read the inputs' current values.
GradCheckReport gradcheck(const std::string& name, const std::vector<Tensor<double>*>& inputs,
                          const std::function<double()>& f,
                          const std::vector<std::vector<double>>& analytic,
                          const GradCheckOptions& options = {});

/// Graph-level check: builds y = build(g, leaves), reduces it with a fixed
/// random projection sum(r * y), and checks the leaves' gradients.
using GraphBuilder =
    std::function<Graph<double>::Var(Graph<double>&, const std::vector<Graph<double>::Var>&)>;
GradCheckReport gradcheck_graph(const std::string& name, const std::vector<Tensor<double>*>& inputs,
                                const GraphBuilder& build, const GradCheckOptions& options = {});

struct DirectionalOptions {
  double tolerance = 1e-4;
  /// Steps tried from largest to smallest; the first h whose estimates at
  /// h, h/2 and h/4 agree pairwise (to `agreement`) is used.
  std::vector<double> steps = {1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9};
  double agreement = 1e-6;
  std::uint64_t seed = 11;
};

/// Per-input directional check: compares grad . v with the central
/// difference of f along a random direction v. Useful for deep ReLU networks
/// whose loss is only smooth on scales far below any fixed element step.
/// An input with no resolvable step counts as skipped; at least as many
/// inputs must be compared as skipped.
GradCheckReport directional_gradcheck(const std::string& name,
                                      const std::vector<Tensor<double>*>& inputs,
                                      const std::function<double()>& f,
                                      const std::vector<std::vector<double>>& analytic,
                                      const DirectionalOptions& options = {});

/// Fills with uniform values in [lo, hi], skipping (-gap, gap) when gap > 0.
void fill_uniform(Tensor<double>& t, std::uint64_t seed, double lo, double hi, double gap = 0.0);

}  // namespace shotnet::verify
