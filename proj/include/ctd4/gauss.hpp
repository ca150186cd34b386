#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace ctd4 {

// One-dimensional normal distribution N(mean, std) over returns.
class Gaussian1D {
 public:
  // Throws std::invalid_argument unless std > 0 and both fields are finite.
  Gaussian1D(double mean, double std);

  double mean() const { return mean_; }
  double std() const { return std_; }
  double variance() const { return std_ * std_; }

  friend bool operator==(const Gaussian1D&, const Gaussian1D&) = default;

 private:
  double mean_;
  double std_;
};

enum class FusionStrategy { Kalman, MinMean, Average };

// How the fused variance of a Kalman pair is formed.
//   Paper:           sigma^2 = (1 - k) sigma_a^2 + k sigma_b^2
//   InverseVariance: sigma^2 = (1 - k) sigma_a^2   (textbook update)
enum class FusionVariance { Paper, InverseVariance };

FusionStrategy parse_fusion_strategy(std::string_view name);
std::string_view to_string(FusionStrategy s);
FusionVariance parse_fusion_variance(std::string_view name);
std::string_view to_string(FusionVariance v);

// Z' = reward + gamma * Z.  Requires gamma in (0, 1] and a finite reward.
Gaussian1D affine(const Gaussian1D& z, double gamma, double reward);

// D_KL(p || q): p is the current estimate, q the Bellman target.
double kl(const Gaussian1D& p, const Gaussian1D& q);

struct GaussianGrad {
  double dmean = 0.0;
  double dstd = 0.0;
};

// Gradient of kl(p, q) with respect to p's parameters, q held fixed.
GaussianGrad kl_grad(const Gaussian1D& p, const Gaussian1D& q);

struct FusedPair {
  Gaussian1D fused;
  double gain;
};

FusedPair fuse_pair(const Gaussian1D& a, const Gaussian1D& b,
                    FusionVariance variance = FusionVariance::Paper);

// Kalman fusion is a left fold in list order: ((z1 + z2) + z3) + ...
// MinMean keeps the lowest-mean element (first one on ties), std included.
// Average takes the arithmetic mean of means and of variances.
Gaussian1D fuse_ensemble(std::span<const Gaussian1D> zs, FusionStrategy strategy,
                         FusionVariance variance = FusionVariance::Paper);

// Partial derivatives of the fused mean with respect to every input's mean
// and std. Gains are differentiated as functions of the stds.
std::vector<GaussianGrad> fuse_ensemble_grad(std::span<const Gaussian1D> zs,
                                             FusionVariance variance = FusionVariance::Paper);

// Same, for any strategy. MinMean yields the one-hot subgradient of the
// selected element; Average yields 1/N on every mean.
std::vector<GaussianGrad> fuse_ensemble_grad(std::span<const Gaussian1D> zs,
                                             FusionStrategy strategy,
                                             FusionVariance variance);

}  // namespace ctd4
