#pragma once

// Scalar reference implementations and a finite-difference gradient checker,
// shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace sdalr::oracle {

using Matrix = std::vector<std::vector<double>>;

inline constexpr double kEps = 1e-12;

inline double clog(double p) { return std::log(std::max(p, kEps)); }

inline Matrix to_matrix(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kDouble).contiguous();
  Matrix m(static_cast<std::size_t>(d.size(0)), std::vector<double>(static_cast<std::size_t>(d.size(1))));
  auto a = d.accessor<double, 2>();
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] = a[static_cast<long>(i)][static_cast<long>(j)];
  }
  return m;
}

inline double source_ce(const Matrix& p, const std::vector<int>& y) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s -= clog(p[i][static_cast<std::size_t>(y[i])]);
  return s / static_cast<double>(p.size());
}

inline double lsc(const Matrix& p, const std::vector<int>& y, double alpha) {
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] < 0) continue;
    const double C = static_cast<double>(p[i].size());
    for (std::size_t c = 0; c < p[i].size(); ++c) {
      const double q = (static_cast<int>(c) == y[i] ? 1.0 - alpha : 0.0) + alpha / C;
      s -= q * clog(p[i][c]);
    }
    ++n;
  }
  return n ? s / n : 0.0;
}

inline double uem(const Matrix& p, const std::vector<int>& y) {
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] >= 0) continue;
    for (double v : p[i]) s += v * clog(v);
    ++n;
  }
  return n ? s / n : 0.0;
}

inline double ent(const Matrix& p, const std::vector<int>& y) {
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] < 0) continue;
    for (double v : p[i]) s -= v * clog(v);
    ++n;
  }
  return n ? s / n : 0.0;
}

inline double div(const Matrix& p, const std::vector<int>& y) {
  std::vector<double> mean(p.empty() ? 0 : p[0].size(), 0.0);
  int n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] < 0) continue;
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[i][c];
    ++n;
  }
  if (!n) return 0.0;
  double s = 0;
  for (double m : mean) s += (m / n) * clog(m / n);
  return s;
}

/// Negated mean over reliable anchors of
/// sum_{same label} <f_i, f_j> - beta * sum_{other label} <f_i, f_m>.
inline double car(Matrix f, const std::vector<int>& y, double beta, bool normalize) {
  if (normalize) {
    for (auto& row : f) {
      double n = 0;
      for (double v : row) n += v * v;
      n = std::max(std::sqrt(n), 1e-12);
      for (auto& v : row) v /= n;
    }
  }
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= 0) r.push_back(i);
  }
  if (r.size() < 2) return 0.0;
  auto dot = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t d = 0; d < f[a].size(); ++d) s += f[a][d] * f[b][d];
    return s;
  };
  double total = 0;
  for (auto i : r) {
    double s = 0;
    for (auto j : r) {
      if (j == i) continue;
      s += (y[j] == y[i] ? 1.0 : -beta) * dot(i, j);
    }
    total += s;
  }
  return -total / static_cast<double>(r.size());
}

/// Weighted-mean prototypes: eta_c = sum_i p_ic f_i / sum_i p_ic.
inline Matrix prototypes(const Matrix& f, const Matrix& p) {
  const std::size_t C = p[0].size(), D = f[0].size();
  Matrix eta(C, std::vector<double>(D, 0.0));
  for (std::size_t c = 0; c < C; ++c) {
    double mass = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      mass += p[i][c];
      for (std::size_t d = 0; d < D; ++d) eta[c][d] += p[i][c] * f[i][d];
    }
    if (mass >= 1e-8) {
      for (auto& v : eta[c]) v /= mass;
    } else {
      std::fill(eta[c].begin(), eta[c].end(), 0.0);
    }
  }
  return eta;
}

/// Strict-majority count over all ballots.
inline int vote(const std::vector<int>& ballots) {
  const double m = static_cast<double>(ballots.size());
  for (int label = 0; label < 16; ++label) {
    int count = 0;
    for (int b : ballots) count += b == label;
    if (count > m / 2.0) return label;
  }
  return -1;
}

struct GradCheck {
  double max_rel_error = 0.0;
  int checked = 0;
};

/// Compares autograd's gradient of `f` at `x` with central differences.
/// Elements where both gradients are below `floor` in magnitude are skipped.
inline GradCheck check_gradient(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                                double h = 1e-6, double floor = 1e-6) {
  x = x.detach().to(torch::kDouble).clone().set_requires_grad(true);
  auto y = f(x);
  auto analytic = torch::autograd::grad({y}, {x}, {}, false, false, true)[0];
  if (!analytic.defined()) analytic = torch::zeros_like(x);
  analytic = analytic.contiguous();
  GradCheck out;
  torch::NoGradGuard no_grad;
  auto flat = x.detach().clone().contiguous();
  auto* p = flat.data_ptr<double>();
  const auto* g = analytic.data_ptr<double>();
  for (std::int64_t k = 0; k < flat.numel(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double up = f(flat).item<double>();
    p[k] = orig - h;
    const double down = f(flat).item<double>();
    p[k] = orig;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max(std::abs(numeric), std::abs(g[k]));
    if (scale <= floor) continue;
    out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - g[k]) / scale);
    ++out.checked;
  }
  return out;
}

}  // namespace sdalr::oracle
