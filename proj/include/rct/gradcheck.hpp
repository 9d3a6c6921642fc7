#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rct/graph.hpp"

namespace rct {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares backward() against central finite differences with step
// h = 1e-6 * (1 + |theta|) for every element of every parameter.
//
// The relative error of one element is |a - n| / max(|a|, |n|, scale_floor).
// With h near 1e-6 the difference quotient of an O(1) double output carries
// round-off of about 1e-10, so gradients below the floor are effectively
// compared in absolute terms (tolerance * scale_floor).
template <typename T>
GradcheckReport gradcheck(const std::function<Var<T>(Graph<T>&)>& f, std::span<Parameter<T>* const> params,
                          double tolerance, double scale_floor = 1e-4) {
  auto eval = [&]() {
    Graph<T> g(false);
    Var<T> out = f(g);
    if (out.rows() != 1 || out.cols() != 1) {
      throw ShapeError("gradcheck: function must return a scalar, got " + shape_string(out.value()));
    }
    return static_cast<double>(out.value()(0, 0));
  };

  const double base = eval();
  if (eval() != base) throw StateError("gradcheck: function is not deterministic");

  for (Parameter<T>* p : params) p->zero_grad();
  {
    Graph<T> g;
    g.backward(f(g));
  }

  GradcheckReport report;
  report.tolerance = tolerance;
  for (Parameter<T>* p : params) {
    GradcheckEntry entry;
    entry.name = p->name;
    for (Index i = 0; i < p->value.size(); ++i) {
      T& theta = p->value.data()[i];
      const T saved = theta;
      const T h = T(1e-6) * (T(1) + std::abs(saved));
      theta = saved + h;
      const double up = eval();
      theta = saved - h;
      const double down = eval();
      theta = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(h));
      const double analytic = static_cast<double>(p->grad.data()[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), scale_floor});
      const double err = std::abs(analytic - numeric) / denom;
      if (i == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace rct
