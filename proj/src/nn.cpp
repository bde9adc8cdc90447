#include "merge/nn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "merge/nn_json.hpp"

namespace merge::nn {

namespace {

double leaky(double z) { return z >= 0 ? z : kLeakySlope * z; }
double leaky_grad(double z) { return z >= 0 ? 1.0 : kLeakySlope; }

}  // namespace

Matrix xavier_init(int fan_in, int fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0)
    throw std::invalid_argument("xavier_init: dimensions must be positive");
  double stddev = std::sqrt(2.0 / (fan_in + fan_out));
  Matrix w(fan_out, fan_in);
  for (int r = 0; r < fan_out; ++r)
    for (int c = 0; c < fan_in; ++c) w(r, c) = rng.normal(0.0, stddev);
  return w;
}

Mlp::Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2)
    throw std::invalid_argument("Mlp: need at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    w_.push_back(Matrix::Zero(dims_[l + 1], dims_[l]));
    b_.push_back(Vector::Zero(dims_[l + 1]));
  }
}

Mlp Mlp::xavier(std::vector<int> dims, Rng& rng) {
  Mlp net(std::move(dims));
  for (int l = 0; l < net.num_layers(); ++l)
    net.w_[l] = xavier_init(net.dims_[l], net.dims_[l + 1], rng);
  return net;
}

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l) n += w_[l].size() + b_[l].size();
  return n;
}

Matrix Mlp::forward(const Matrix& inputs, Trace& trace) const {
  if (inputs.rows() != input_dim())
    throw std::invalid_argument("Mlp::forward: input has " +
                                std::to_string(inputs.rows()) +
                                " rows, expected " +
                                std::to_string(input_dim()));
  trace.input = inputs;
  trace.pre.resize(w_.size());
  trace.post.resize(w_.size());
  const Matrix* x = &trace.input;
  int last = num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    trace.pre[l] = (w_[l] * (*x)).colwise() + b_[l];
    if (l < last)
      trace.post[l] = trace.pre[l].unaryExpr([](double z) { return leaky(z); });
    else
      trace.post[l] = trace.pre[l];
    x = &trace.post[l];
  }
  return trace.post[last];
}

Matrix Mlp::forward(const Matrix& inputs) const {
  Trace t;
  return forward(inputs, t);
}

Vector Mlp::forward(const Vector& input) const {
  return forward(Matrix(input)).col(0);
}

Gradients Mlp::backward(const Trace& trace, const Matrix& upstream,
                        Matrix* input_grad) const {
  int last = num_layers() - 1;
  if (upstream.rows() != output_dim() ||
      upstream.cols() != trace.post[last].cols())
    throw std::invalid_argument("Mlp::backward: upstream shape mismatch");

  Gradients g;
  g.dw.resize(w_.size());
  g.db.resize(b_.size());

  Matrix delta = upstream;  // output layer has identity activation
  for (int l = last; l >= 0; --l) {
    const Matrix& below = (l == 0) ? trace.input : trace.post[l - 1];
    g.dw[l] = delta * below.transpose();
    g.db[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = w_[l].transpose() * delta;
      delta = back.cwiseProduct(trace.pre[l - 1].unaryExpr(
          [](double z) { return leaky_grad(z); }));
    } else if (input_grad) {
      *input_grad = w_[0].transpose() * delta;
    }
  }
  return g;
}

bool Mlp::same_shape(const Mlp& other) const { return dims_ == other.dims_; }

void Adam::step(Mlp& net, const Gradients& g) {
  if (mw_.empty()) {
    for (int l = 0; l < net.num_layers(); ++l) {
      mw_.push_back(Matrix::Zero(net.weights()[l].rows(),
                                 net.weights()[l].cols()));
      vw_.push_back(Matrix::Zero(net.weights()[l].rows(),
                                 net.weights()[l].cols()));
      mb_.push_back(Vector::Zero(net.biases()[l].size()));
      vb_.push_back(Vector::Zero(net.biases()[l].size()));
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int l = 0; l < net.num_layers(); ++l) {
    mw_[l] = beta1_ * mw_[l] + (1.0 - beta1_) * g.dw[l];
    vw_[l] = beta2_ * vw_[l] + (1.0 - beta2_) * g.dw[l].cwiseProduct(g.dw[l]);
    mb_[l] = beta1_ * mb_[l] + (1.0 - beta1_) * g.db[l];
    vb_[l] = beta2_ * vb_[l] + (1.0 - beta2_) * g.db[l].cwiseProduct(g.db[l]);
    Matrix denom_w = (vw_[l] / bc2).cwiseSqrt();
    denom_w.array() += eps_;
    net.weights()[l] -= (lr_ / bc1) * mw_[l].cwiseQuotient(denom_w);
    Vector denom_b = (vb_[l] / bc2).cwiseSqrt();
    denom_b.array() += eps_;
    net.biases()[l] -= (lr_ / bc1) * mb_[l].cwiseQuotient(denom_b);
  }
}

void polyak_update(Mlp& target, const Mlp& source, double tau) {
  if (!target.same_shape(source))
    throw std::invalid_argument("polyak_update: shape mismatch");
  for (int l = 0; l < target.num_layers(); ++l) {
    target.weights()[l] =
        (1.0 - tau) * target.weights()[l] + tau * source.weights()[l];
    target.biases()[l] =
        (1.0 - tau) * target.biases()[l] + tau * source.biases()[l];
  }
}

nlohmann::json mlp_to_json(const Mlp& net, const std::string& role) {
  nlohmann::json doc;
  doc["format"] = "mergelab-mlp";
  doc["version"] = 1;
  doc["role"] = role;
  doc["dims"] = net.dims();
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    const Matrix& w = net.weights()[l];
    std::vector<double> wf;
    wf.reserve(w.size());
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) wf.push_back(w(r, c));
    std::vector<double> bf(net.biases()[l].data(),
                           net.biases()[l].data() + net.biases()[l].size());
    layers.push_back({{"w", wf}, {"b", bf}});
  }
  doc["layers"] = std::move(layers);
  return doc;
}

Checkpoint mlp_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "mergelab-mlp")
    throw std::runtime_error("checkpoint format mismatch");
  if (doc.value("version", 0) != 1)
    throw std::runtime_error("checkpoint version mismatch");
  Checkpoint ck;
  ck.role = doc.value("role", "");
  std::vector<int> dims = doc.at("dims").get<std::vector<int>>();
  ck.net = Mlp(dims);
  const auto& layers = doc.at("layers");
  if (static_cast<int>(layers.size()) != ck.net.num_layers())
    throw std::runtime_error("checkpoint layer count mismatch");
  for (int l = 0; l < ck.net.num_layers(); ++l) {
    auto wf = layers[l].at("w").get<std::vector<double>>();
    auto bf = layers[l].at("b").get<std::vector<double>>();
    Matrix& w = ck.net.weights()[l];
    if (static_cast<long>(wf.size()) != w.size() ||
        static_cast<long>(bf.size()) != ck.net.biases()[l].size())
      throw std::runtime_error("checkpoint parameter size mismatch");
    std::size_t k = 0;
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = wf[k++];
    for (long i = 0; i < ck.net.biases()[l].size(); ++i)
      ck.net.biases()[l](i) = bf[i];
  }
  return ck;
}

void save_checkpoint(const Mlp& net, const std::string& role,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << mlp_to_json(net, role).dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in);
  return mlp_from_json(doc);
}

GaussianPolicyHead GaussianPolicyHead::from_output(const Vector& out,
                                                   const ActionBox& box) {
  if (out.size() != 4)
    throw std::invalid_argument("GaussianPolicyHead: expected 4 outputs");
  GaussianPolicyHead h;
  h.mean << out(0), out(1);
  h.log_std << std::clamp(out(2), kLogStdMin, kLogStdMax),
      std::clamp(out(3), kLogStdMin, kLogStdMax);
  h.box = box;
  return h;
}

namespace {

// log(1 - tanh(u)^2) computed stably.
double log_one_minus_tanh_sq(double u) {
  double au = std::fabs(u);
  return 2.0 * (std::log(2.0) - au - std::log1p(std::exp(-2.0 * au)));
}

}  // namespace

SampledAction sample_squashed_gaussian(const GaussianPolicyHead& head,
                                       Rng& rng, bool deterministic) {
  SampledAction s;
  double logp = 0.0;
  for (int i = 0; i < 2; ++i) {
    double sigma = std::exp(head.log_std(i));
    double xi = deterministic ? 0.0 : rng.normal();
    double u = head.mean(i) + sigma * xi;
    double y = std::tanh(u);
    double half = 0.5 * (head.box.hi[i] - head.box.lo[i]);
    double mid = 0.5 * (head.box.hi[i] + head.box.lo[i]);
    s.xi[i] = xi;
    s.u[i] = u;
    s.y[i] = y;
    s.a[i] = mid + half * y;
    logp += -0.5 * xi * xi - head.log_std(i) - 0.5 * std::log(2.0 * M_PI) -
            log_one_minus_tanh_sq(u) - std::log(half);
  }
  s.log_prob = logp;
  return s;
}

double squashed_log_prob1(double mean, double log_std, double lo, double hi,
                          double a) {
  double half = 0.5 * (hi - lo);
  double mid = 0.5 * (hi + lo);
  double y = (a - mid) / half;
  y = std::clamp(y, -1.0 + 1e-15, 1.0 - 1e-15);
  double u = std::atanh(y);
  double sigma = std::exp(log_std);
  double z = (u - mean) / sigma;
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * M_PI) -
         log_one_minus_tanh_sq(u) - std::log(half);
}

double squashed_log_prob(const GaussianPolicyHead& head,
                         const std::array<double, 2>& a) {
  double logp = 0.0;
  for (int i = 0; i < 2; ++i)
    logp += squashed_log_prob1(head.mean(i), head.log_std(i), head.box.lo[i],
                               head.box.hi[i], a[i]);
  return logp;
}

}  // namespace merge::nn
