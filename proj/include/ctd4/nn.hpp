#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ctd4/rng.hpp"

namespace ctd4 {

// Added to the softplus head so predicted stds stay strictly positive.
inline constexpr double kSigmaFloor = 1e-4;

enum class HeadActivation { Linear, Tanh, SoftplusShifted };

struct HeadSpec {
  std::string name;
  std::size_t width = 0;
  HeadActivation activation = HeadActivation::Linear;

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

// input -> ReLU hidden layers -> one dense layer per head, all heads reading
// the last hidden activation.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::vector<HeadSpec> heads;

  // Throws std::invalid_argument on zero widths, no heads or duplicate names.
  void validate() const;
  std::size_t head_index(std::string_view name) const;

  static MlpSpec critic(std::size_t input_dim, std::vector<std::size_t> hidden = {256, 256});
  static MlpSpec actor(std::size_t obs_dim, std::size_t action_dim,
                       std::vector<std::size_t> hidden = {256, 256});

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Weights of one network. Layers are stored hidden-first, then one per head
// in spec order. Flat order (used by serialization) is layer by layer, each
// weight matrix column-major followed by its bias.
class MlpParams {
 public:
  MlpParams() = default;
  // All-zero parameters shaped for spec.
  explicit MlpParams(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& head(std::size_t i) const { return layers_[spec_.hidden.size() + i]; }

  std::size_t parameter_count() const;
  bool all_finite() const;
  void set_zero();

  std::vector<double> flatten() const;
  void assign_flat(const std::vector<double>& values);

  // Bitwise comparison of every entry (distinguishes -0.0 and NaN payloads).
  bool bit_equal(const MlpParams& other) const;

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
MlpParams init_mlp(const MlpSpec& spec, Rng& rng);

struct ForwardCache {
  // Input of each dense layer: the network input, then every hidden activation.
  std::vector<Eigen::MatrixXd> layer_inputs;
  std::vector<Eigen::MatrixXd> head_preact;
  std::vector<Eigen::MatrixXd> head_output;
};

struct ForwardPass {
  std::vector<Eigen::MatrixXd> heads;  // head width x batch, spec order
  ForwardCache cache;
};

// Columns of `input` are independent samples.
ForwardPass forward(const MlpParams& params, const Eigen::MatrixXd& input);
// Same outputs without retaining activations.
std::vector<Eigen::MatrixXd> predict(const MlpParams& params, const Eigen::MatrixXd& input);

struct BackwardPass {
  MlpParams param_grads;  // empty when not requested
  Eigen::MatrixXd input_grad;
};

// Gradients of sum over batch of <upstream[h], heads[h]>.
BackwardPass backward(const MlpParams& params, const ForwardCache& cache,
                      const std::vector<Eigen::MatrixXd>& upstream, bool param_grads = true);

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  MlpParams m;
  MlpParams v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(const MlpSpec& spec) : m(spec), v(spec) {}
};

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state,
               const AdamOptions& opts);

// target <- (1 - tau) target + tau source
void polyak(MlpParams& target, const MlpParams& source, double tau);

// 16-byte header ("CTD4", u32 version, u64 count) then little-endian doubles.
void write_params(std::ostream& out, const MlpParams& params);
// Throws std::runtime_error on bad magic, version, count or truncation.
MlpParams read_params(std::istream& in, const MlpSpec& expected);

void write_adam(std::ostream& out, const AdamState& state);
AdamState read_adam(std::istream& in, const MlpSpec& expected);

}  // namespace ctd4
