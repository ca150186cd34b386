#include "ctd4/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "ctd4/binary_io.hpp"

namespace ctd4 {

namespace {

constexpr std::uint32_t kParamsVersion = 1;

void require_same_spec(const MlpParams& a, const MlpParams& b, const char* what) {
  if (!(a.spec() == b.spec())) throw std::invalid_argument(std::string(what) + ": spec mismatch");
}

// Visits (a, b) block pairs of two identically shaped parameter sets.
template <typename F>
void zip_blocks(MlpParams& a, const MlpParams& b, F&& f) {
  auto& la = a.layers();
  const auto& lb = b.layers();
  for (std::size_t i = 0; i < la.size(); ++i) {
    f(la[i].weight.array(), lb[i].weight.array());
    f(la[i].bias.array(), lb[i].bias.array());
  }
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Keep tanh heads inside (-1, 1) and softplus heads above the floor even
// where the activation saturates in double precision.
const double kBelowOne = std::nextafter(1.0, 0.0);
const double kAboveFloor = std::nextafter(kSigmaFloor, 1.0);

Eigen::MatrixXd activate(HeadActivation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case HeadActivation::Linear:
      return z;
    case HeadActivation::Tanh:
      return z.unaryExpr([](double x) { return std::clamp(std::tanh(x), -kBelowOne, kBelowOne); });
    case HeadActivation::SoftplusShifted:
      return z.unaryExpr([](double x) { return std::max(softplus(x) + kSigmaFloor, kAboveFloor); });
  }
  throw std::logic_error("activate: bad activation");
}

Eigen::MatrixXd dense(const DenseLayer& layer, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(layer.weight.rows(), x.cols());
  z.noalias() = layer.weight * x;
  z.colwise() += layer.bias;
  return z;
}

void check_input(const MlpSpec& spec, const Eigen::MatrixXd& input) {
  if (static_cast<std::size_t>(input.rows()) != spec.input_dim) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.rows()) +
                                " rows, network expects " + std::to_string(spec.input_dim));
  }
  if (!input.allFinite()) throw std::invalid_argument("forward: non-finite input");
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("MlpSpec: input_dim must be positive");
  for (std::size_t w : hidden) {
    if (w == 0) throw std::invalid_argument("MlpSpec: zero-width hidden layer");
  }
  if (heads.empty()) throw std::invalid_argument("MlpSpec: at least one head required");
  std::set<std::string> names;
  for (const auto& h : heads) {
    if (h.width == 0) throw std::invalid_argument("MlpSpec: zero-width head '" + h.name + "'");
    if (!names.insert(h.name).second) {
      throw std::invalid_argument("MlpSpec: duplicate head '" + h.name + "'");
    }
  }
}

std::size_t MlpSpec::head_index(std::string_view name) const {
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i].name == name) return i;
  }
  throw std::invalid_argument("MlpSpec: no head named '" + std::string(name) + "'");
}

MlpSpec MlpSpec::critic(std::size_t input_dim, std::vector<std::size_t> hidden) {
  return {input_dim, std::move(hidden),
          {{"mu", 1, HeadActivation::Linear}, {"sigma", 1, HeadActivation::SoftplusShifted}}};
}

MlpSpec MlpSpec::actor(std::size_t obs_dim, std::size_t action_dim, std::vector<std::size_t> hidden) {
  return {obs_dim, std::move(hidden), {{"action", action_dim, HeadActivation::Tanh}}};
}

MlpParams::MlpParams(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t fan_in = spec_.input_dim;
  for (std::size_t w : spec_.hidden) {
    layers_.push_back({Eigen::MatrixXd::Zero(w, fan_in), Eigen::VectorXd::Zero(w)});
    fan_in = w;
  }
  for (const auto& h : spec_.heads) {
    layers_.push_back({Eigen::MatrixXd::Zero(h.width, fan_in), Eigen::VectorXd::Zero(h.width)});
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool MlpParams::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

void MlpParams::set_zero() {
  for (auto& l : layers_) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void MlpParams::assign_flat(const std::vector<double>& values) {
  if (values.size() != parameter_count()) {
    throw std::invalid_argument("MlpParams::assign_flat: expected " +
                                std::to_string(parameter_count()) + " values, got " +
                                std::to_string(values.size()));
  }
  const double* p = values.data();
  for (auto& l : layers_) {
    std::copy_n(p, l.weight.size(), l.weight.data());
    p += l.weight.size();
    std::copy_n(p, l.bias.size(), l.bias.data());
    p += l.bias.size();
  }
}

bool MlpParams::bit_equal(const MlpParams& other) const {
  if (!(spec_ == other.spec_)) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (std::memcmp(a.weight.data(), b.weight.data(), sizeof(double) * a.weight.size()) != 0 ||
        std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()) != 0) {
      return false;
    }
  }
  return true;
}

MlpParams init_mlp(const MlpSpec& spec, Rng& rng) {
  MlpParams params(spec);
  for (auto& layer : params.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
  }
  return params;
}

ForwardPass forward(const MlpParams& params, const Eigen::MatrixXd& input) {
  const MlpSpec& spec = params.spec();
  check_input(spec, input);
  const std::size_t n_hidden = spec.hidden.size();

  ForwardPass pass;
  auto& cache = pass.cache;
  cache.layer_inputs.reserve(n_hidden + 1);
  cache.layer_inputs.push_back(input);
  for (std::size_t i = 0; i < n_hidden; ++i) {
    cache.layer_inputs.push_back(dense(params.layers()[i], cache.layer_inputs.back()).cwiseMax(0.0));
  }
  const Eigen::MatrixXd& last = cache.layer_inputs.back();
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    cache.head_preact.push_back(dense(params.head(h), last));
    cache.head_output.push_back(activate(spec.heads[h].activation, cache.head_preact.back()));
  }
  pass.heads = cache.head_output;
  return pass;
}

std::vector<Eigen::MatrixXd> predict(const MlpParams& params, const Eigen::MatrixXd& input) {
  const MlpSpec& spec = params.spec();
  check_input(spec, input);
  Eigen::MatrixXd x = input;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) x = dense(params.layers()[i], x).cwiseMax(0.0);
  std::vector<Eigen::MatrixXd> heads;
  heads.reserve(spec.heads.size());
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    heads.push_back(activate(spec.heads[h].activation, dense(params.head(h), x)));
  }
  return heads;
}

BackwardPass backward(const MlpParams& params, const ForwardCache& cache,
                      const std::vector<Eigen::MatrixXd>& upstream, bool param_grads) {
  const MlpSpec& spec = params.spec();
  const std::size_t n_hidden = spec.hidden.size();
  if (cache.layer_inputs.size() != n_hidden + 1 || cache.head_preact.size() != spec.heads.size() ||
      static_cast<std::size_t>(cache.layer_inputs.front().rows()) != spec.input_dim) {
    throw std::invalid_argument("backward: cache does not match network spec");
  }
  if (upstream.size() != spec.heads.size()) {
    throw std::invalid_argument("backward: expected one upstream gradient per head");
  }
  const Eigen::Index batch = cache.layer_inputs.front().cols();

  BackwardPass out;
  if (param_grads) out.param_grads = MlpParams(spec);

  const Eigen::MatrixXd& last = cache.layer_inputs.back();
  Eigen::MatrixXd d_act = Eigen::MatrixXd::Zero(last.rows(), batch);
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    const Eigen::MatrixXd& up = upstream[h];
    if (up.rows() != cache.head_output[h].rows() || up.cols() != batch) {
      throw std::invalid_argument("backward: upstream shape mismatch for head '" +
                                  spec.heads[h].name + "'");
    }
    Eigen::MatrixXd dz;
    switch (spec.heads[h].activation) {
      case HeadActivation::Linear:
        dz = up;
        break;
      case HeadActivation::Tanh:
        dz = up.array() * (1.0 - cache.head_output[h].array().square());
        break;
      case HeadActivation::SoftplusShifted:
        dz = up.array() * cache.head_preact[h].unaryExpr([](double x) { return sigmoid(x); }).array();
        break;
    }
    const DenseLayer& layer = params.head(h);
    if (param_grads) {
      DenseLayer& g = out.param_grads.layers()[n_hidden + h];
      g.weight.noalias() = dz * last.transpose();
      g.bias = dz.rowwise().sum();
    }
    d_act.noalias() += layer.weight.transpose() * dz;
  }

  for (std::size_t i = n_hidden; i-- > 0;) {
    const Eigen::MatrixXd& act = cache.layer_inputs[i + 1];
    Eigen::MatrixXd dz = (act.array() > 0.0).select(d_act.array(), 0.0).matrix();
    const DenseLayer& layer = params.layers()[i];
    if (param_grads) {
      DenseLayer& g = out.param_grads.layers()[i];
      g.weight.noalias() = dz * cache.layer_inputs[i].transpose();
      g.bias = dz.rowwise().sum();
    }
    d_act.resize(layer.weight.cols(), batch);
    d_act.noalias() = layer.weight.transpose() * dz;
  }
  out.input_grad = std::move(d_act);
  return out;
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state,
               const AdamOptions& opts) {
  require_same_spec(params, grads, "adam_step");
  require_same_spec(params, state.m, "adam_step");
  if (!(opts.lr >= 0.0)) throw std::invalid_argument("adam_step: negative learning rate");
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(opts.beta1, t);
  const double bc2 = 1.0 - std::pow(opts.beta2, t);
  zip_blocks(state.m, grads, [&](auto m, auto g) { m = opts.beta1 * m + (1.0 - opts.beta1) * g; });
  zip_blocks(state.v, grads,
             [&](auto v, auto g) { v = opts.beta2 * v + (1.0 - opts.beta2) * g.square(); });
  if (opts.lr == 0.0) return;
  auto& pl = params.layers();
  const auto& ml = state.m.layers();
  const auto& vl = state.v.layers();
  for (std::size_t i = 0; i < pl.size(); ++i) {
    pl[i].weight.array() -= opts.lr * (ml[i].weight.array() / bc1) /
                            ((vl[i].weight.array() / bc2).sqrt() + opts.eps);
    pl[i].bias.array() -=
        opts.lr * (ml[i].bias.array() / bc1) / ((vl[i].bias.array() / bc2).sqrt() + opts.eps);
  }
}

void polyak(MlpParams& target, const MlpParams& source, double tau) {
  require_same_spec(target, source, "polyak");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak: tau must lie in [0, 1]");
  if (tau == 0.0) return;
  if (tau == 1.0) {
    target = source;
    return;
  }
  zip_blocks(target, source, [tau](auto t, auto s) { t = (1.0 - tau) * t + tau * s; });
}

void write_params(std::ostream& out, const MlpParams& params) {
  binary::write_magic(out);
  binary::write_u32(out, kParamsVersion);
  binary::write_u64(out, params.parameter_count());
  for (const auto& l : params.layers()) {
    binary::write_f64s(out, {l.weight.data(), static_cast<std::size_t>(l.weight.size())});
    binary::write_f64s(out, {l.bias.data(), static_cast<std::size_t>(l.bias.size())});
  }
}

MlpParams read_params(std::istream& in, const MlpSpec& expected) {
  binary::expect_magic(in, "parameter block");
  const std::uint32_t version = binary::read_u32(in);
  if (version != kParamsVersion) {
    throw std::runtime_error("parameter block: unsupported version " + std::to_string(version));
  }
  MlpParams params(expected);
  const std::uint64_t count = binary::read_u64(in);
  if (count != params.parameter_count()) {
    throw std::runtime_error("parameter block: spec mismatch (file has " + std::to_string(count) +
                             " parameters, network expects " +
                             std::to_string(params.parameter_count()) + ")");
  }
  for (auto& l : params.layers()) {
    binary::read_f64s(in, {l.weight.data(), static_cast<std::size_t>(l.weight.size())});
    binary::read_f64s(in, {l.bias.data(), static_cast<std::size_t>(l.bias.size())});
  }
  return params;
}

void write_adam(std::ostream& out, const AdamState& state) {
  binary::write_u64(out, state.t);
  write_params(out, state.m);
  write_params(out, state.v);
}

AdamState read_adam(std::istream& in, const MlpSpec& expected) {
  AdamState state;
  state.t = binary::read_u64(in);
  state.m = read_params(in, expected);
  state.v = read_params(in, expected);
  return state;
}

}  // namespace ctd4
