#include "ctd4/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ctd4 {

Gaussian1D::Gaussian1D(double mean, double std) : mean_(mean), std_(std) {
  if (!std::isfinite(mean) || !std::isfinite(std)) {
    throw std::invalid_argument("Gaussian1D: non-finite parameter");
  }
  if (!(std > 0.0)) {
    throw std::invalid_argument("Gaussian1D: std must be positive, got " + std::to_string(std));
  }
}

FusionStrategy parse_fusion_strategy(std::string_view name) {
  if (name == "kalman") return FusionStrategy::Kalman;
  if (name == "min") return FusionStrategy::MinMean;
  if (name == "average") return FusionStrategy::Average;
  throw std::invalid_argument("unknown fusion strategy '" + std::string(name) +
                              "' (expected kalman, min or average)");
}

std::string_view to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::Kalman: return "kalman";
    case FusionStrategy::MinMean: return "min";
    case FusionStrategy::Average: return "average";
  }
  return "?";
}

FusionVariance parse_fusion_variance(std::string_view name) {
  if (name == "paper") return FusionVariance::Paper;
  if (name == "inverse_variance") return FusionVariance::InverseVariance;
  throw std::invalid_argument("unknown fusion variance '" + std::string(name) +
                              "' (expected paper or inverse_variance)");
}

std::string_view to_string(FusionVariance v) {
  return v == FusionVariance::Paper ? "paper" : "inverse_variance";
}

Gaussian1D affine(const Gaussian1D& z, double gamma, double reward) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("affine: gamma must lie in (0, 1]");
  }
  if (!std::isfinite(reward)) {
    throw std::invalid_argument("affine: non-finite reward");
  }
  return {gamma * z.mean() + reward, gamma * z.std()};
}

double kl(const Gaussian1D& p, const Gaussian1D& q) {
  const double diff = p.mean() - q.mean();
  const double value = std::log(q.std() / p.std()) +
                       (p.variance() + diff * diff) / (2.0 * q.variance()) - 0.5;
  // Rounding can push near-identical pairs a hair below zero.
  return std::max(value, 0.0);
}

GaussianGrad kl_grad(const Gaussian1D& p, const Gaussian1D& q) {
  const double qvar = q.variance();
  return {(p.mean() - q.mean()) / qvar, p.std() / qvar - 1.0 / p.std()};
}

namespace {

// Fused variance and its partials with respect to each input variance.
struct PairVariance {
  double value;
  double d_var_a;
  double d_var_b;
};

PairVariance pair_variance(double var_a, double var_b, FusionVariance mode) {
  const double total = var_a + var_b;
  const double scale = mode == FusionVariance::Paper ? 2.0 : 1.0;
  return {scale * var_a * var_b / total, scale * var_b * var_b / (total * total),
          scale * var_a * var_a / (total * total)};
}

}  // namespace

FusedPair fuse_pair(const Gaussian1D& a, const Gaussian1D& b, FusionVariance variance) {
  const double var_a = a.variance();
  const double var_b = b.variance();
  const double gain = var_a / (var_a + var_b);
  const double mean = a.mean() + gain * (b.mean() - a.mean());
  double fused_var = 0.0;
  if (variance == FusionVariance::Paper) {
    fused_var = (1.0 - gain) * var_a + gain * var_b;
  } else {
    fused_var = (1.0 - gain) * var_a;
  }
  return {Gaussian1D(mean, std::sqrt(fused_var)), gain};
}

Gaussian1D fuse_ensemble(std::span<const Gaussian1D> zs, FusionStrategy strategy,
                         FusionVariance variance) {
  if (zs.empty()) throw std::invalid_argument("fuse_ensemble: empty ensemble");
  switch (strategy) {
    case FusionStrategy::Kalman: {
      Gaussian1D acc = zs.front();
      for (std::size_t i = 1; i < zs.size(); ++i) acc = fuse_pair(acc, zs[i], variance).fused;
      return acc;
    }
    case FusionStrategy::MinMean: {
      const auto it = std::min_element(zs.begin(), zs.end(), [](const auto& x, const auto& y) {
        return x.mean() < y.mean();
      });
      return *it;
    }
    case FusionStrategy::Average: {
      if (zs.size() == 1) return zs.front();
      double mean = 0.0;
      double var = 0.0;
      for (const auto& z : zs) {
        mean += z.mean();
        var += z.variance();
      }
      const double n = static_cast<double>(zs.size());
      return {mean / n, std::sqrt(var / n)};
    }
  }
  throw std::logic_error("fuse_ensemble: bad strategy");
}

std::vector<GaussianGrad> fuse_ensemble_grad(std::span<const Gaussian1D> zs,
                                             FusionVariance variance) {
  if (zs.empty()) throw std::invalid_argument("fuse_ensemble_grad: empty ensemble");
  const std::size_t n = zs.size();

  // Forward fold, keeping each intermediate accumulator.
  std::vector<Gaussian1D> acc;
  acc.reserve(n);
  acc.push_back(zs.front());
  for (std::size_t i = 1; i < n; ++i) acc.push_back(fuse_pair(acc.back(), zs[i], variance).fused);

  std::vector<GaussianGrad> grads(n);
  // Adjoint of the running accumulator, seeded with d(mu_k)/d(mu_k) = 1.
  double adj_mean = 1.0;
  double adj_std = 0.0;
  for (std::size_t i = n - 1; i >= 1; --i) {
    const Gaussian1D& a = acc[i - 1];
    const Gaussian1D& b = zs[i];
    const Gaussian1D& out = acc[i];
    const double var_a = a.variance();
    const double var_b = b.variance();
    const double total = var_a + var_b;
    const double gain = var_a / total;
    const double dgain_dstd_a = 2.0 * a.std() * var_b / (total * total);
    const double dgain_dstd_b = -2.0 * b.std() * var_a / (total * total);
    const double spread = b.mean() - a.mean();

    const PairVariance pv = pair_variance(var_a, var_b, variance);
    // d(out.std)/d(std_x) = (dV/dvar_x) * 2 std_x / (2 out.std)
    const double dstd_dstd_a = pv.d_var_a * a.std() / out.std();
    const double dstd_dstd_b = pv.d_var_b * b.std() / out.std();

    grads[i].dmean = adj_mean * gain;
    grads[i].dstd = adj_mean * spread * dgain_dstd_b + adj_std * dstd_dstd_b;

    const double next_mean = adj_mean * (1.0 - gain);
    const double next_std = adj_mean * spread * dgain_dstd_a + adj_std * dstd_dstd_a;
    adj_mean = next_mean;
    adj_std = next_std;
  }
  grads[0] = {adj_mean, adj_std};
  return grads;
}

std::vector<GaussianGrad> fuse_ensemble_grad(std::span<const Gaussian1D> zs,
                                             FusionStrategy strategy,
                                             FusionVariance variance) {
  if (zs.empty()) throw std::invalid_argument("fuse_ensemble_grad: empty ensemble");
  switch (strategy) {
    case FusionStrategy::Kalman:
      return fuse_ensemble_grad(zs, variance);
    case FusionStrategy::MinMean: {
      std::vector<GaussianGrad> grads(zs.size());
      const auto it = std::min_element(zs.begin(), zs.end(), [](const auto& x, const auto& y) {
        return x.mean() < y.mean();
      });
      grads[static_cast<std::size_t>(it - zs.begin())].dmean = 1.0;
      return grads;
    }
    case FusionStrategy::Average: {
      const double w = 1.0 / static_cast<double>(zs.size());
      return std::vector<GaussianGrad>(zs.size(), GaussianGrad{w, 0.0});
    }
  }
  throw std::logic_error("fuse_ensemble_grad: bad strategy");
}

}  // namespace ctd4
