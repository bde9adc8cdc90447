#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "fd_check.hpp"
#include "merge/nn.hpp"

using namespace merge;
using namespace merge::nn;

TEST_CASE("xavier_init statistics") {
  Rng rng(1001);

  SUBCASE("64x64 empirical variance near 2/128") {
    double sum = 0, sum2 = 0;
    long n = 0;
    for (int k = 0; k < 25; ++k) {
      Matrix w = xavier_init(64, 64, rng);
      sum += w.sum();
      sum2 += w.array().square().sum();
      n += w.size();
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    CHECK(std::fabs(var - 0.015625) / 0.015625 < 0.2);
    CHECK(std::fabs(mean) < 0.01);
  }

  SUBCASE("14x64 variance near 2/78") {
    double sum2 = 0;
    long n = 0;
    for (int k = 0; k < 120; ++k) {
      Matrix w = xavier_init(14, 64, rng);
      sum2 += w.array().square().sum();
      n += w.size();
    }
    double var = sum2 / n;
    CHECK(std::fabs(var - 2.0 / 78.0) / (2.0 / 78.0) < 0.2);
  }

  SUBCASE("biases are exactly zero") {
    Mlp net = Mlp::xavier({14, 64, 64, 6}, rng);
    for (const Vector& b : net.biases())
      for (long i = 0; i < b.size(); ++i) CHECK(b(i) == 0.0);
  }
}

TEST_CASE("forward pass") {
  SUBCASE("zero network maps anything to zero") {
    Mlp net(std::vector<int>{14, 64, 64, 6});
    Vector x = Vector::Constant(14, 0.4);
    Vector y = net.forward(x);
    for (long i = 0; i < y.size(); ++i) CHECK(y(i) == 0.0);
  }

  SUBCASE("leaky slope 1/100 shows through a unit 1-1-1 net") {
    Mlp net(std::vector<int>{1, 1, 1});
    net.weights()[0](0, 0) = 1.0;
    net.weights()[1](0, 0) = 1.0;
    Vector x(1);
    x << -1.0;
    CHECK(net.forward(x)(0) == doctest::Approx(-0.01).epsilon(1e-15));
    x << 1.0;
    CHECK(net.forward(x)(0) == 1.0);
  }

  SUBCASE("forward is deterministic") {
    Rng rng(7);
    Mlp net = Mlp::xavier({14, 64, 64, 4}, rng);
    Vector x(14);
    for (int i = 0; i < 14; ++i) x(i) = rng.uniform01();
    Vector y1 = net.forward(x);
    Vector y2 = net.forward(x);
    for (long i = 0; i < y1.size(); ++i) CHECK(y1(i) == y2(i));
  }

  SUBCASE("shape mismatch is rejected") {
    Rng rng(7);
    Mlp net = Mlp::xavier({14, 8, 2}, rng);
    Vector x(13);
    x.setZero();
    CHECK_THROWS_AS((void)net.forward(x), std::invalid_argument);
  }

  SUBCASE("no NaN or Inf on fuzzed unit-box inputs") {
    Rng rng(8);
    Mlp net = Mlp::xavier({14, 64, 64, 16}, rng);
    for (int k = 0; k < 2000; ++k) {
      Vector x(14);
      for (int i = 0; i < 14; ++i) x(i) = rng.uniform01();
      Vector y = net.forward(x);
      for (long i = 0; i < y.size(); ++i) REQUIRE(std::isfinite(y(i)));
    }
  }
}

TEST_CASE("backward matches finite differences") {
  Rng rng(515);

  SUBCASE("ten random small nets") {
    for (int trial = 0; trial < 10; ++trial) {
      Mlp net = Mlp::xavier({5, 8, 7, 3}, rng);
      Matrix x(5, 4);
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 4; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
      Matrix g(3, 4);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) g(r, c) = rng.uniform(-1.0, 1.0);

      Mlp::Trace tr;
      net.forward(x, tr);
      Gradients grads = net.backward(tr, g);

      auto loss = [&]() {
        return (net.forward(x).cwiseProduct(g)).sum();
      };
      double err = testutil::max_rel_grad_error(net, grads, loss);
      REQUIRE(err < 1e-4);
    }
  }

  SUBCASE("input gradients match finite differences") {
    Mlp net = Mlp::xavier({6, 9, 2}, rng);
    Matrix x(6, 3);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
    Matrix g(2, 3);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) g(r, c) = rng.uniform(-1.0, 1.0);
    Mlp::Trace tr;
    net.forward(x, tr);
    Matrix ig;
    net.backward(tr, g, &ig);
    double eps = 1e-6;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 3; ++c) {
        double saved = x(r, c);
        x(r, c) = saved + eps;
        double up = (net.forward(x).cwiseProduct(g)).sum();
        x(r, c) = saved - eps;
        double down = (net.forward(x).cwiseProduct(g)).sum();
        x(r, c) = saved;
        double fd = (up - down) / (2 * eps);
        REQUIRE(std::fabs(fd - ig(r, c)) / std::max(1.0, std::fabs(ig(r, c))) <
                1e-4);
      }
  }

  SUBCASE("zero upstream gives zero gradients") {
    Mlp net = Mlp::xavier({5, 8, 3}, rng);
    Matrix x = Matrix::Random(5, 2);
    Mlp::Trace tr;
    net.forward(x, tr);
    Gradients grads = net.backward(tr, Matrix::Zero(3, 2));
    for (const Matrix& dw : grads.dw) CHECK(dw.norm() == 0.0);
    for (const Vector& db : grads.db) CHECK(db.norm() == 0.0);
  }

  SUBCASE("single linear layer matches the outer-product form") {
    Mlp net(std::vector<int>{3, 2});
    net.weights()[0] << 1.0, -2.0, 0.5, 0.0, 1.0, 1.0;
    Vector x(3);
    x << 0.2, -0.4, 1.0;
    Matrix g(2, 1);
    g << 1.0, -1.0;
    Mlp::Trace tr;
    net.forward(Matrix(x), tr);
    Gradients grads = net.backward(tr, g);
    // dW = g x^T
    CHECK(grads.dw[0](0, 0) == doctest::Approx(0.2));
    CHECK(grads.dw[0](0, 1) == doctest::Approx(-0.4));
    CHECK(grads.dw[0](1, 2) == doctest::Approx(-1.0));
    CHECK(grads.db[0](0) == 1.0);
    CHECK(grads.db[0](1) == -1.0);
  }
}

TEST_CASE("adam optimizer") {
  SUBCASE("zero gradient leaves parameters untouched") {
    Rng rng(5);
    Mlp net = Mlp::xavier({3, 4, 2}, rng);
    Mlp before = net;
    Gradients g;
    for (int l = 0; l < net.num_layers(); ++l) {
      g.dw.push_back(Matrix::Zero(net.weights()[l].rows(),
                                  net.weights()[l].cols()));
      g.db.push_back(Vector::Zero(net.biases()[l].size()));
    }
    Adam opt;
    opt.step(net, g);
    for (int l = 0; l < net.num_layers(); ++l) {
      CHECK((net.weights()[l] - before.weights()[l]).norm() == 0.0);
      CHECK((net.biases()[l] - before.biases()[l]).norm() == 0.0);
    }
  }

  SUBCASE("constant positive gradient strictly decreases a scalar parameter") {
    Mlp net(std::vector<int>{1, 1});
    net.weights()[0](0, 0) = 1.0;
    Adam opt(3e-4);
    Gradients g;
    g.dw.push_back(Matrix::Constant(1, 1, 1.0));
    g.db.push_back(Vector::Zero(1));
    double prev = net.weights()[0](0, 0);
    for (int k = 0; k < 200; ++k) {
      opt.step(net, g);
      double cur = net.weights()[0](0, 0);
      REQUIRE(cur < prev);
      prev = cur;
    }
  }

  SUBCASE("two identical optimizers stay bitwise in lockstep") {
    Rng rng(6);
    Mlp a = Mlp::xavier({4, 6, 2}, rng);
    Mlp b = a;
    Adam oa(1e-3), ob(1e-3);
    Rng grng(17);
    for (int k = 0; k < 20; ++k) {
      Gradients g;
      for (int l = 0; l < a.num_layers(); ++l) {
        Matrix dw(a.weights()[l].rows(), a.weights()[l].cols());
        for (int r = 0; r < dw.rows(); ++r)
          for (int c = 0; c < dw.cols(); ++c) dw(r, c) = grng.normal();
        Vector db(a.biases()[l].size());
        for (long i = 0; i < db.size(); ++i) db(i) = grng.normal();
        g.dw.push_back(dw);
        g.db.push_back(db);
      }
      oa.step(a, g);
      ob.step(b, g);
      for (int l = 0; l < a.num_layers(); ++l)
        REQUIRE((a.weights()[l] - b.weights()[l]).norm() == 0.0);
    }
  }
}

TEST_CASE("polyak update") {
  Rng rng(31);
  Mlp target = Mlp::xavier({3, 5, 2}, rng);
  Mlp source = Mlp::xavier({3, 5, 2}, rng);
  SUBCASE("tau = 1 copies the source") {
    polyak_update(target, source, 1.0);
    for (int l = 0; l < target.num_layers(); ++l)
      CHECK((target.weights()[l] - source.weights()[l]).norm() == 0.0);
  }
  SUBCASE("tau = 0.5 is the midpoint") {
    Matrix w0 = target.weights()[0];
    polyak_update(target, source, 0.5);
    CHECK((target.weights()[0] - 0.5 * (w0 + source.weights()[0])).norm() ==
          doctest::Approx(0.0));
  }
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
  Rng rng(88);
  Mlp net = Mlp::xavier({14, 64, 64, 6}, rng);
  std::filesystem::path path =
      std::filesystem::temp_directory_path() / "mergelab_ck_test.json";
  save_checkpoint(net, "low_dqn", path);
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.role == "low_dqn");
  REQUIRE(ck.net.dims() == net.dims());
  for (int l = 0; l < net.num_layers(); ++l) {
    const Matrix& a = net.weights()[l];
    const Matrix& b = ck.net.weights()[l];
    for (int r = 0; r < a.rows(); ++r)
      for (int c = 0; c < a.cols(); ++c) REQUIRE(a(r, c) == b(r, c));
    for (long i = 0; i < net.biases()[l].size(); ++i)
      REQUIRE(net.biases()[l](i) == ck.net.biases()[l](i));
  }
  std::filesystem::remove(path);
}

TEST_CASE("squashed gaussian sampling") {
  SUBCASE("deterministic zero-mean head lands on the box midpoints") {
    GaussianPolicyHead head;
    head.mean << 0.0, 0.0;
    head.log_std << -5.0, -5.0;
    Rng rng(1);
    SampledAction s = sample_squashed_gaussian(head, rng, true);
    CHECK(s.a[0] == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
    CHECK(s.a[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("samples stay inside the box") {
    GaussianPolicyHead head;
    head.mean << 0.8, -1.5;
    head.log_std << 1.0, 0.5;
    Rng rng(77);
    for (int k = 0; k < 200000; ++k) {
      SampledAction s = sample_squashed_gaussian(head, rng);
      REQUIRE(s.a[0] >= -1.0);
      REQUIRE(s.a[0] <= 2.0 / 3.0);
      REQUIRE(s.a[1] >= 0.0);
      REQUIRE(s.a[1] <= 1.0);
    }
  }

  SUBCASE("log_prob from sampling agrees with the density evaluator") {
    GaussianPolicyHead head;
    head.mean << 0.3, -0.2;
    head.log_std << -0.4, -0.8;
    Rng rng(55);
    for (int k = 0; k < 500; ++k) {
      SampledAction s = sample_squashed_gaussian(head, rng);
      double lp = squashed_log_prob(head, s.a);
      REQUIRE(std::fabs(lp - s.log_prob) < 1e-8);
    }
  }

  SUBCASE("the density integrates to one on each action interval") {
    auto mass = [](double mean, double log_std, double lo, double hi) {
      int n = 200000;
      double h = (hi - lo) / n;
      double acc = 0.0;
      for (int i = 0; i <= n; ++i) {
        double a = lo + h * i;
        double p = std::exp(squashed_log_prob1(mean, log_std, lo, hi, a));
        acc += (i == 0 || i == n) ? 0.5 * p : p;
      }
      return acc * h;
    };
    CHECK(mass(0.3, -0.4, -1.0, 2.0 / 3.0) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(mass(-0.2, -0.8, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(mass(1.2, 0.1, -1.0, 2.0 / 3.0) == doctest::Approx(1.0).epsilon(1e-3));
  }

  SUBCASE("log_std outputs are clamped") {
    Vector out(4);
    out << 0.0, 0.0, -50.0, 7.0;
    GaussianPolicyHead head = GaussianPolicyHead::from_output(out);
    CHECK(head.log_std(0) == kLogStdMin);
    CHECK(head.log_std(1) == kLogStdMax);
  }
}
