// SPDX-License-Identifier: Apache-2.0
#include "emoda/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emoda/errors.hpp"
#include "emoda/layers.hpp"
#include "emoda/losses.hpp"
#include "emoda/model.hpp"
#include "emoda/ops.hpp"

namespace emoda {

std::vector<double> numeric_gradient(const ScalarFn& f, std::span<Tensor> inputs, std::size_t which, double step) {
  NoGradGuard no_grad;
  auto values = inputs[which].mutable_data();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = f(inputs).item();
    values[i] = saved - step;
    const double down = f(inputs).item();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

GradCheckResult check_gradients(const std::string& name, const ScalarFn& f, std::span<Tensor> inputs,
                                const GradCheckOptions& opts) {
  for (auto& t : inputs) {
    if (!t.is_leaf() || !t.requires_grad()) throw ContractError("gradcheck inputs must be leaves requiring grad");
    t.zero_grad();
  }
  f(inputs).backward();

  GradCheckResult r;
  r.name = name;
  r.instances = 1;
  r.tolerance = opts.rel_tol;
  Rng pick(opts.coord_seed);
  NoGradGuard no_grad;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords && coords.size() > opts.max_coords) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(opts.max_coords);
    }
    auto values = t.mutable_data();
    for (auto i : coords) {
      const double saved = values[i];
      values[i] = saved + opts.step;
      const double up = f(inputs).item();
      values[i] = saved - opts.step;
      const double down = f(inputs).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), opts.scale_floor});
      const double err = std::abs(analytic[i] - numeric) / scale;
      r.max_error = std::max(r.max_error, err);
      ++r.coordinates;
    }
  }
  r.passed = r.max_error <= opts.rel_tol;
  return r;
}

namespace {

class SuiteBuilder {
 public:
  explicit SuiteBuilder(std::uint64_t seed, std::size_t instances) : rng_(seed), instances_(instances) {}

  Tensor randn(Shape shape, double sd = 1.0, bool grad = true) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = d(rng_);
    return Tensor::from_data(std::move(shape), std::move(v), grad);
  }
  // Values bounded away from zero, random sign (keeps PReLU off its kink).
  Tensor away_from_zero(Shape shape) {
    std::uniform_real_distribution<double> mag(0.2, 1.5);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = (sign(rng_) ? 1.0 : -1.0) * mag(rng_);
    return Tensor::from_data(std::move(shape), std::move(v), true);
  }
  Tensor positive(Shape shape) {
    std::uniform_real_distribution<double> d(0.5, 2.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = d(rng_);
    return Tensor::from_data(std::move(shape), std::move(v), true);
  }
  std::uint64_t next_seed() { return rng_(); }
  Rng& rng() { return rng_; }

  /// Runs `make` once per instance; each call returns (f, inputs).
  template <typename Make>
  void add(const std::string& name, double tol, Make make, std::size_t max_coords = 0) {
    GradCheckResult total;
    total.name = name;
    total.tolerance = tol;
    for (std::size_t i = 0; i < instances_; ++i) {
      auto [f, inputs] = make();
      GradCheckOptions opts;
      opts.rel_tol = tol;
      opts.max_coords = max_coords;
      opts.coord_seed = next_seed();
      const auto r = check_gradients(name, f, inputs, opts);
      total.instances += 1;
      total.coordinates += r.coordinates;
      total.max_error = std::max(total.max_error, r.max_error);
      total.passed = total.passed && r.passed;
    }
    results_.push_back(total);
  }

  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  std::size_t instances_;
  std::vector<GradCheckResult> results_;
};

using Case = std::pair<ScalarFn, std::vector<Tensor>>;

// Random linear functional of an op's output so every output entry matters.
ScalarFn project(std::function<Tensor(std::span<const Tensor>)> op, Tensor weights) {
  return [op = std::move(op), weights](std::span<const Tensor> in) { return sum(mul(weights, op(in))); };
}

Case unary_case(SuiteBuilder& s, Tensor x, Tensor (*fn)(const Tensor&)) {
  Shape out_shape;
  {
    NoGradGuard no_grad;
    out_shape = fn(x).shape();
  }
  Tensor w = s.randn(out_shape, 1.0, false);
  return {project([fn](std::span<const Tensor> in) { return fn(in[0]); }, w), {x}};
}

SoftLabelTable random_table(SuiteBuilder& s, std::size_t k, double tau) {
  std::uniform_real_distribution<double> d(0.05, 1.0);
  SoftLabelTable t;
  t.num_classes = k;
  t.temperature = tau;
  t.table.resize(k * k);
  for (std::size_t r = 0; r < k; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += (t.table[r * k + c] = d(s.rng()));
    for (std::size_t c = 0; c < k; ++c) t.table[r * k + c] /= total;
  }
  return t;
}

std::vector<int> random_labels(SuiteBuilder& s, std::size_t n, int classes) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> v(n);
  for (auto& x : v) x = d(s.rng());
  return v;
}

UtteranceSample random_sample(SuiteBuilder& s, const ModelConfig& c, std::size_t ta, std::size_t tv) {
  UtteranceSample u;
  u.id = "gradcheck";
  u.acoustic = s.randn({ta, c.acoustic_dim}, 1.0, false);
  u.visual = s.randn({tv, c.visual_dim}, 1.0, false);
  return u;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t instances) {
  SuiteBuilder s(seed, instances);
  constexpr double kPrimitive = 1e-6;
  constexpr double kComposed = 1e-5;

  s.add("matmul", kPrimitive, [&] {
    Tensor a = s.randn({3, 4}), b = s.randn({4, 2}), w = s.randn({3, 2}, 1.0, false);
    return Case{project([](auto in) { return matmul(in[0], in[1]); }, w), {a, b}};
  });
  s.add("transpose", kPrimitive, [&] { return unary_case(s, s.randn({3, 5}), &transpose); });
  s.add("add_bias", kPrimitive, [&] {
    Tensor x = s.randn({4, 3}), b = s.randn({3}), w = s.randn({4, 3}, 1.0, false);
    return Case{project([](auto in) { return add_bias(in[0], in[1]); }, w), {x, b}};
  });
  s.add("add", kPrimitive, [&] {
    Tensor a = s.randn({2, 3}), b = s.randn({2, 3}), w = s.randn({2, 3}, 1.0, false);
    return Case{project([](auto in) { return add(in[0], in[1]); }, w), {a, b}};
  });
  s.add("sub", kPrimitive, [&] {
    Tensor a = s.randn({2, 3}), b = s.randn({2, 3}), w = s.randn({2, 3}, 1.0, false);
    return Case{project([](auto in) { return sub(in[0], in[1]); }, w), {a, b}};
  });
  s.add("mul", kPrimitive, [&] {
    Tensor a = s.randn({2, 3}), b = s.randn({2, 3}), w = s.randn({2, 3}, 1.0, false);
    return Case{project([](auto in) { return mul(in[0], in[1]); }, w), {a, b}};
  });
  s.add("scale", kPrimitive, [&] {
    Tensor a = s.randn({5}), w = s.randn({5}, 1.0, false);
    return Case{project([](auto in) { return scale(in[0], -1.7); }, w), {a}};
  });
  s.add("neg", kPrimitive, [&] { return unary_case(s, s.randn({6}), &neg); });
  s.add("log", kPrimitive, [&] { return unary_case(s, s.positive({6}), &log); });
  s.add("exp", kPrimitive, [&] { return unary_case(s, s.randn({6}), &exp); });
  s.add("sigmoid", kPrimitive, [&] { return unary_case(s, s.randn({6}, 2.0), &sigmoid); });
  s.add("tanh", kPrimitive, [&] { return unary_case(s, s.randn({6}, 2.0), &tanh); });
  s.add("prelu", kPrimitive, [&] {
    Tensor x = s.away_from_zero({3, 4}), slope = Tensor::from_data({1}, {0.25}, true), w = s.randn({3, 4}, 1.0, false);
    return Case{project([](auto in) { return prelu(in[0], in[1]); }, w), {x, slope}};
  });
  s.add("dropout", kPrimitive, [&] {
    Tensor x = s.randn({4, 5}), w = s.randn({4, 5}, 1.0, false);
    const std::uint64_t mask_seed = s.next_seed();
    return Case{project(
                    [mask_seed](auto in) {
                      Rng r(mask_seed);
                      return dropout(in[0], 0.3, true, r);
                    },
                    w),
                {x}};
  });
  s.add("concat", kPrimitive, [&] {
    Tensor a = s.randn({2, 3}), b = s.randn({2, 4}), w = s.randn({2, 7}, 1.0, false);
    return Case{project(
                    [](auto in) {
                      const Tensor parts[] = {in[0], in[1]};
                      return concat(parts);
                    },
                    w),
                {a, b}};
  });
  s.add("reshape", kPrimitive, [&] {
    Tensor a = s.randn({2, 6}), w = s.randn({3, 4}, 1.0, false);
    return Case{project([](auto in) { return reshape(in[0], {3, 4}); }, w), {a}};
  });
  s.add("row", kPrimitive, [&] {
    Tensor a = s.randn({4, 3}), w = s.randn({3}, 1.0, false);
    return Case{project([](auto in) { return row(in[0], 2); }, w), {a}};
  });
  s.add("stack_rows", kPrimitive, [&] {
    Tensor a = s.randn({3}), b = s.randn({3}), w = s.randn({2, 3}, 1.0, false);
    return Case{project([](auto in) { return stack_rows(in); }, w), {a, b}};
  });
  s.add("mean_rows", kPrimitive, [&] {
    Tensor a = s.randn({5, 3}), w = s.randn({3}, 1.0, false);
    return Case{project([](auto in) { return mean_rows(in[0]); }, w), {a}};
  });
  s.add("sum", kPrimitive, [&] {
    Tensor a = s.randn({3, 3});
    return Case{[](std::span<const Tensor> in) { return sum(in[0]); }, {a}};
  });
  s.add("mean", kPrimitive, [&] {
    Tensor a = s.randn({3, 3});
    return Case{[](std::span<const Tensor> in) { return mean(in[0]); }, {a}};
  });
  for (double tau : {1.0, 2.0}) {
    const std::string suffix = tau == 1.0 ? "(tau=1)" : "(tau=2)";
    s.add("softmax" + suffix, kPrimitive, [&, tau] {
      Tensor z = s.randn({3, 4}, 2.0), w = s.randn({3, 4}, 1.0, false);
      return Case{project([tau](auto in) { return softmax(in[0], tau); }, w), {z}};
    });
    s.add("log_softmax" + suffix, kPrimitive, [&, tau] {
      Tensor z = s.randn({3, 4}, 2.0), w = s.randn({3, 4}, 1.0, false);
      return Case{project([tau](auto in) { return log_softmax(in[0], tau); }, w), {z}};
    });
  }
  for (std::size_t stride : {1u, 2u}) {
    s.add("conv1d(stride=" + std::to_string(stride) + ")", kPrimitive, [&, stride] {
      Tensor x = s.randn({3, 16}), k = s.randn({2, 3, 4}, 0.5), b = s.randn({2});
      const std::size_t t_out = (16 - 4) / stride + 1;
      Tensor w = s.randn({2, t_out}, 1.0, false);
      return Case{project([stride](auto in) { return conv1d(in[0], in[1], in[2], stride); }, w), {x, k, b}};
    });
  }

  auto gru_inputs = [&](std::size_t steps, std::size_t in, std::size_t hidden) {
    std::vector<Tensor> v{s.randn({steps, in}), s.randn({hidden}, 0.5)};
    for (int i = 0; i < 3; ++i) v.push_back(s.randn({hidden, in}, 0.6));
    for (int i = 0; i < 3; ++i) v.push_back(s.randn({hidden, hidden}, 0.6));
    for (int i = 0; i < 3; ++i) v.push_back(s.randn({hidden}, 0.3));
    return v;
  };
  auto fused_gru = [](std::span<const Tensor> in) {
    const GruWeights w{in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9], in[10]};
    return gru_sequence(in[0], in[1], w);
  };
  s.add("gru_step", kPrimitive, [&] {
    auto v = gru_inputs(1, 3, 4);
    return Case{project(fused_gru, s.randn({1, 4}, 1.0, false)), v};
  });
  s.add("gru_step(composed)", kPrimitive, [&] {
    auto v = gru_inputs(1, 3, 4);
    auto f = [](std::span<const Tensor> in) {
      GruLayer layer;
      layer.w = GruWeights{in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9], in[10]};
      return gru_step(layer, row(in[0], 0), in[1]);
    };
    return Case{project(f, s.randn({4}, 1.0, false)), v};
  });
  s.add("gru_unroll(T=5)", kComposed, [&] {
    auto v = gru_inputs(5, 3, 4);
    return Case{project(fused_gru, s.randn({5, 4}, 1.0, false)), v};
  });
  s.add("linear", kPrimitive, [&] {
    ParamRegistry reg;
    LinearLayer layer(reg, "fc", 5, 3);
    init_params(reg, s.next_seed());
    for (auto& p : reg.params()) {
      auto d = p.tensor.mutable_data();
      std::normal_distribution<double> nd(0.0, 0.5);
      for (auto& x : d) x = nd(s.rng());
    }
    Tensor x = s.randn({4, 5}), w = s.randn({4, 3}, 1.0, false);
    auto f = [](std::span<const Tensor> in) {
      LinearLayer l;
      l.weight = in[1];
      l.bias = in[2];
      return l.forward(in[0]);
    };
    return Case{project(f, w), {x, layer.weight, layer.bias}};
  });

  s.add("domain_ce_loss", kPrimitive, [&] {
    Tensor z = s.randn({6, 2}, 2.0);
    const auto labels = random_labels(s, 6, 2);
    return Case{[labels](std::span<const Tensor> in) { return domain_ce_loss(in[0], labels); }, {z}};
  });
  s.add("confusion_entropy", kPrimitive, [&] {
    Tensor z = s.randn({6, 2}, 2.0);
    return Case{[](std::span<const Tensor> in) { return confusion_entropy(in[0]); }, {z}};
  });
  s.add("emotion_ce_loss", kPrimitive, [&] {
    Tensor z = s.randn({6, 4}, 2.0);
    const auto labels = random_labels(s, 6, 4);
    return Case{[labels](std::span<const Tensor> in) { return emotion_ce_loss(in[0], labels); }, {z}};
  });
  s.add("softlabel_loss", kPrimitive, [&] {
    Tensor z = s.randn({5, 4}, 2.0);
    const auto labels = random_labels(s, 5, 4);
    const std::vector<int> domains(5, 1);
    const SoftLabelTable table = random_table(s, 4, 2.0);
    return Case{[=](std::span<const Tensor> in) { return softlabel_loss(in[0], labels, domains, table); }, {z}};
  });
  s.add("total_loss", kPrimitive, [&] {
    Tensor emo = s.randn({6, 4}, 2.0), dom = s.randn({6, 2}, 2.0);
    const auto labels = random_labels(s, 6, 4);
    const std::vector<int> target_labels(labels.begin() + 3, labels.end());
    const std::vector<int> domains(3, 1);
    const SoftLabelTable table = random_table(s, 4, 2.0);
    return Case{[=](std::span<const Tensor> in) {
                  const std::size_t rows[] = {3, 4, 5};
                  std::vector<Tensor> t;
                  for (auto r : rows) t.push_back(row(in[0], r));
                  const Tensor soft = softlabel_loss(stack_rows(t), target_labels, domains, table);
                  return total_loss(emotion_ce_loss(in[0], labels), confusion_entropy(in[1]), soft, {0.7, 0.3});
                },
                {emo, dom}};
  });

  // Composed model paths at test dimensions; coordinates sampled per tensor.
  const ModelConfig cfg = ModelConfig::test_profile();
  auto model_case = [&](bool emotion_path) {
    auto model = std::make_shared<ModelBundle>(cfg);
    model->init(s.next_seed());
    auto samples = std::make_shared<std::vector<UtteranceSample>>();
    std::uniform_int_distribution<std::size_t> ta(cfg.min_acoustic_length(), 30), tv(2, 6);
    for (int i = 0; i < 2; ++i) samples->push_back(random_sample(s, cfg, ta(s.rng()), tv(s.rng())));
    const std::size_t classes = emotion_path ? cfg.num_emotions : cfg.num_domains;
    Tensor w = s.randn({2, classes}, 1.0, false);
    const std::uint64_t mask_seed = s.next_seed();
    std::vector<Tensor> inputs;
    for (const auto& p : model->enc_params().params()) inputs.push_back(p.tensor);
    const auto& head = emotion_path ? model->ec_params() : model->dc_params();
    for (const auto& p : head.params()) inputs.push_back(p.tensor);
    ScalarFn f = [model, samples, w, mask_seed, emotion_path](std::span<const Tensor>) {
      Rng r(mask_seed);
      const UtteranceSample* batch[] = {&(*samples)[0], &(*samples)[1]};
      const Tensor reps = encode_batch(*model, batch, true, r);
      const Tensor logits = emotion_path ? emotion_logits(*model, reps) : domain_logits(*model, reps);
      return sum(mul(w, logits));
    };
    return Case{f, inputs};
  };
  s.add("enc->ec path", kComposed, [&] { return model_case(true); }, 8);
  s.add("enc->dc path", kComposed, [&] { return model_case(false); }, 8);

  return s.take();
}

}  // namespace emoda
