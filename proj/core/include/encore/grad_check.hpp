#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "encore/rng.hpp"
#include "encore/tensor.hpp"

namespace encore {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  bool pass = true;
};

/// Central-difference check of the gradients already stored in `params`
/// (typically filled by a tape backward pass) against a deterministic
/// objective `f` evaluated at perturbed parameter values. Tensors larger than
/// `max_coords` are checked at that many randomly sampled coordinates.
/// Relative error per coordinate: |num - ana| / max(|num|, |ana|, 1e-8).
template <class S, class F>
GradCheckReport finite_diff_check(
    F&& f, const std::vector<std::pair<std::string, TensorT<S>>>& params,
    double h, double tol, int64_t max_coords = 64, uint64_t seed = 0x5eed) {
  check<NumericError>(h > 0, "finite_diff_check: h must be positive, got ", h);
  double base1 = f();
  double base2 = f();
  check<NumericError>(base1 == base2,
                      "finite_diff_check: objective is non-deterministic (",
                      base1, " vs ", base2, ")");

  GradCheckReport report;
  Rng rng(seed);
  for (const auto& [name, p] : params) {
    GradCheckEntry entry;
    entry.name = name;
    check<ShapeError>(p.has_grad(), "finite_diff_check: parameter '", name,
                      "' has no gradient");
    std::vector<int64_t> coords;
    if (p.numel() <= max_coords) {
      coords.resize(p.numel());
      for (int64_t i = 0; i < p.numel(); ++i) coords[i] = i;
    } else {
      std::vector<uint8_t> seen(p.numel(), 0);
      while (static_cast<int64_t>(coords.size()) < max_coords) {
        int64_t i = rng.uniform_int(static_cast<uint32_t>(p.numel()));
        if (!seen[i]) {
          seen[i] = 1;
          coords.push_back(i);
        }
      }
    }
    auto data = const_cast<TensorT<S>&>(p).data().data();
    for (int64_t i : coords) {
      S saved = data[i];
      data[i] = static_cast<S>(static_cast<double>(saved) + h);
      double fp = f();
      data[i] = static_cast<S>(static_cast<double>(saved) - h);
      double fm = f();
      data[i] = saved;
      double num = (fp - fm) / (2.0 * h);
      double ana = static_cast<double>(p.grad()[i]);
      double rel = std::abs(num - ana) /
                   std::max({std::abs(num), std::abs(ana), 1e-8});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.coords_checked;
    }
    entry.pass = entry.max_rel_err <= tol;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.per_param.push_back(std::move(entry));
  }
  return report;
}

}  // namespace encore
