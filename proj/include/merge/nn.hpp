#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "merge/rng.hpp"

namespace merge::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

// Xavier-normal weight matrix (fan_out x fan_in), entries
// N(0, 2 / (fan_in + fan_out)).
Matrix xavier_init(int fan_in, int fan_out, Rng& rng);

struct Gradients {
  std::vector<Matrix> dw;
  std::vector<Vector> db;
};

// Fully connected network: affine layers with leaky-ReLU on every hidden
// layer and identity output. Batches are column-per-sample.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> dims);  // zero-initialized
  static Mlp xavier(std::vector<int> dims, Rng& rng);

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(w_.size()); }
  std::size_t num_params() const;

  std::vector<Matrix>& weights() { return w_; }
  std::vector<Vector>& biases() { return b_; }
  const std::vector<Matrix>& weights() const { return w_; }
  const std::vector<Vector>& biases() const { return b_; }

  Vector forward(const Vector& input) const;
  Matrix forward(const Matrix& inputs) const;

  struct Trace {
    Matrix input;
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // activated output per layer
  };
  Matrix forward(const Matrix& inputs, Trace& trace) const;

  // Exact reverse-mode gradients of the forward composition. upstream is
  // dLoss/dOutput with the same shape as the traced output; if input_grad
  // is non-null it receives dLoss/dInput.
  Gradients backward(const Trace& trace, const Matrix& upstream,
                     Matrix* input_grad = nullptr) const;

  bool same_shape(const Mlp& other) const;

 private:
  std::vector<int> dims_;
  std::vector<Matrix> w_;
  std::vector<Vector> b_;
};

// Adaptive-moment optimizer; moments are sized lazily on first step.
class Adam {
 public:
  explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Mlp& net, const Gradients& g);
  long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> mw_, vw_;
  std::vector<Vector> mb_, vb_;
};

// target <- (1 - tau) * target + tau * source
void polyak_update(Mlp& target, const Mlp& source, double tau);

// Checkpoint i/o: versioned JSON document with a role tag, shape header and
// layer-major parameter arrays (row-major weights, then biases, per layer).
void save_checkpoint(const Mlp& net, const std::string& role,
                     const std::filesystem::path& path);
struct Checkpoint {
  Mlp net;
  std::string role;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Bounded two-dimensional action support for the skills agent.
struct ActionBox {
  std::array<double, 2> lo{-1.0, 0.0};
  std::array<double, 2> hi{2.0 / 3.0, 1.0};
};

struct GaussianPolicyHead {
  Eigen::Vector2d mean;
  Eigen::Vector2d log_std;  // clamped to [kLogStdMin, kLogStdMax]
  ActionBox box;

  // Splits a 4-vector network output into means and clamped log-stds.
  static GaussianPolicyHead from_output(const Vector& out,
                                        const ActionBox& box = {});
};

struct SampledAction {
  std::array<double, 2> a;   // in the box
  std::array<double, 2> u;   // pre-squash gaussian sample
  std::array<double, 2> y;   // tanh(u)
  std::array<double, 2> xi;  // standard-normal noise used
  double log_prob = 0.0;
};

// u ~ N(mean, std), y = tanh(u), a = affine(y) into the box; log_prob
// includes the tanh and affine Jacobian corrections. With deterministic set,
// returns the mean action and consumes no randomness.
SampledAction sample_squashed_gaussian(const GaussianPolicyHead& head,
                                       Rng& rng, bool deterministic = false);

// Log-density of one squashed-gaussian component evaluated at action a.
double squashed_log_prob1(double mean, double log_std, double lo, double hi,
                          double a);
double squashed_log_prob(const GaussianPolicyHead& head,
                         const std::array<double, 2>& a);

}  // namespace merge::nn
