// SPDX-License-Identifier: Apache-2.0
#include "emoda/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emoda/errors.hpp"
#include "emoda/kernels.hpp"

namespace emoda {
namespace {

using detail::Node;
using kernels::Trans;

// Gradient buffer of parent `i`, or nullptr when it does not need one.
std::vector<double>* parent_grad(Node& out, std::size_t i) {
  auto& p = *out.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

const std::vector<double>& parent_data(const Node& out, std::size_t i) { return out.parents[i]->data; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return detail::make_result(op, a.shape(), std::move(out), {a}, [deriv](Node& n) {
    auto* g = parent_grad(n, 0);
    if (!g) return;
    const auto& x = parent_data(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * deriv(x[i], n.data[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(Trans::kNo, Trans::kNo, m, n, k, a.data(), b.data(), out, false);
  return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, n, k](Node& c) {
    if (auto* ga = parent_grad(c, 0)) {
      // dA = dC · Bᵀ
      kernels::gemm(Trans::kNo, Trans::kYes, m, k, n, c.grad, parent_data(c, 1), *ga, true);
    }
    if (auto* gb = parent_grad(c, 1)) {
      // dB = Aᵀ · dC
      kernels::gemm(Trans::kYes, Trans::kNo, k, n, m, parent_data(c, 0), c.grad, *gb, true);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return detail::make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& t) {
    auto* g = parent_grad(t, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += t.grad[j * m + i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", bias, 1);
  const std::size_t n = bias.dim(0);
  if (x.rank() == 0 || x.shape().back() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += b[j];
  return detail::make_result("add_bias", x.shape(), std::move(out), {x, bias}, [rows, n](Node& o) {
    if (auto* gx = parent_grad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*gx)[i] += o.grad[i];
    if (auto* gb = parent_grad(o, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += o.grad[r * n + j];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto* g = parent_grad(o, p))
        for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& o) {
    if (auto* g = parent_grad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
    if (auto* g = parent_grad(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& o) {
    if (auto* g = parent_grad(o, 0)) {
      const auto& y = parent_data(o, 1);
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i] * y[i];
    }
    if (auto* g = parent_grad(o, 1)) {
      const auto& x = parent_data(o, 0);
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.numel() != 1) {
    throw DimensionError("prelu: slope must hold one value, got " + shape_string(slope.shape()));
  }
  const double s = slope.data()[0];
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : s * v[i];
  return detail::make_result("prelu", x.shape(), std::move(out), {x, slope}, [](Node& o) {
    const auto& v = parent_data(o, 0);
    const double s = parent_data(o, 1)[0];
    if (auto* g = parent_grad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i] * (v[i] > 0.0 ? 1.0 : s);
    if (auto* g = parent_grad(o, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        if (!(v[i] > 0.0)) acc += o.grad[i] * v[i];
      (*g)[0] += acc;
    }
  });
}

Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = unif(rng) < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return detail::make_result("dropout", x.shape(), std::move(out), {x},
                             [mask = std::move(mask)](Node& o) {
                               auto* g = parent_grad(o, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < o.grad.size(); ++i)
                                 (*g)[i] += o.grad[i] * mask[i];
                             });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& lead = parts[0].shape();
  if (lead.empty()) throw DimensionError("concat: scalars have no last axis");
  const std::size_t rows = parts[0].numel() / lead.back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != lead.size() || !std::equal(s.begin(), s.end() - 1, lead.begin())) {
      throw DimensionError("concat: leading extents differ, " + shape_string(lead) + " vs " +
                           shape_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto d = parts[p].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.begin() + r * widths[p], widths[p], out.begin() + r * total + offset);
    offset += widths[p];
  }
  Shape shape = lead;
  shape.back() = total;
  return detail::make_result("concat", std::move(shape), std::move(out),
                             std::vector<Tensor>(parts.begin(), parts.end()),
                             [rows, total, widths](Node& o) {
                               std::size_t offset = 0;
                               for (std::size_t p = 0; p < widths.size(); ++p) {
                                 if (auto* g = parent_grad(o, p)) {
                                   for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t j = 0; j < widths[p]; ++j)
                                       (*g)[r * widths[p] + j] += o.grad[r * total + offset + j];
                                 }
                                 offset += widths[p];
                               }
                             });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& o) {
    if (auto* g = parent_grad(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
  });
}

Tensor row(const Tensor& a, std::size_t index) {
  require_rank("row", a, 2);
  const std::size_t n = a.dim(1);
  if (index >= a.dim(0)) {
    throw DimensionError("row " + std::to_string(index) + " out of range for " + shape_string(a.shape()));
  }
  std::vector<double> out(a.data().begin() + index * n, a.data().begin() + (index + 1) * n);
  return detail::make_result("row", {n}, std::move(out), {a}, [index, n](Node& o) {
    if (auto* g = parent_grad(o, 0))
      for (std::size_t j = 0; j < n; ++j) (*g)[index * n + j] += o.grad[j];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("stack_rows of zero tensors");
  const std::size_t n = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.numel() != n) {
      throw DimensionError("stack_rows: expected [" + std::to_string(n) + "], got " +
                           shape_string(r.shape()));
    }
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  return detail::make_result("stack_rows", {rows.size(), n}, std::move(out),
                             std::vector<Tensor>(rows.begin(), rows.end()), [n](Node& o) {
                               for (std::size_t p = 0; p < o.parents.size(); ++p)
                                 if (auto* g = parent_grad(o, p))
                                   for (std::size_t j = 0; j < n; ++j) (*g)[j] += o.grad[p * n + j];
                             });
}

Tensor mean_rows(const Tensor& a) {
  require_rank("mean_rows", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (m == 0) throw ContractError("mean_rows of an empty tensor");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.data()[i * n + j];
  for (auto& v : out) v /= static_cast<double>(m);
  return detail::make_result("mean_rows", {n}, std::move(out), {a}, [m, n](Node& o) {
    if (auto* g = parent_grad(o, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += o.grad[j] / static_cast<double>(m);
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return detail::make_result("sum", {}, {acc}, {a}, [](Node& o) {
    if (auto* g = parent_grad(o, 0))
      for (auto& v : *g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ContractError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return detail::make_result("mean", {}, {acc * inv}, {a}, [inv](Node& o) {
    if (auto* g = parent_grad(o, 0))
      for (auto& v : *g) v += o.grad[0] * inv;
  });
}

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("softmax temperature must be positive and finite, got " +
                         std::to_string(temperature));
  }
}

std::size_t last_extent(const char* op, const Tensor& t) {
  if (t.rank() == 0 || t.shape().back() == 0) {
    throw DimensionError(std::string(op) + ": need a nonempty last axis, got " + shape_string(t.shape()));
  }
  return t.shape().back();
}

}  // namespace

Tensor softmax(const Tensor& logits, double temperature) {
  check_temperature(temperature);
  const std::size_t k = last_extent("softmax", logits);
  const std::size_t rows = logits.numel() / k;
  const auto z = logits.data();
  std::vector<double> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * k;
    double* pr = out.data() + r * k;
    const double mx = *std::max_element(zr, zr + k);
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) denom += (pr[i] = std::exp((zr[i] - mx) / temperature));
    for (std::size_t i = 0; i < k; ++i) pr[i] /= denom;
  }
  return detail::make_result("softmax", logits.shape(), std::move(out), {logits},
                             [rows, k, temperature](Node& o) {
                               auto* g = parent_grad(o, 0);
                               if (!g) return;
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* p = o.data.data() + r * k;
                                 const double* dp = o.grad.data() + r * k;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < k; ++i) dot += dp[i] * p[i];
                                 for (std::size_t i = 0; i < k; ++i)
                                   (*g)[r * k + i] += p[i] * (dp[i] - dot) / temperature;
                               }
                             });
}

Tensor log_softmax(const Tensor& logits, double temperature) {
  check_temperature(temperature);
  const std::size_t k = last_extent("log_softmax", logits);
  const std::size_t rows = logits.numel() / k;
  const auto z = logits.data();
  std::vector<double> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * k;
    double* lr = out.data() + r * k;
    const double mx = *std::max_element(zr, zr + k);
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) denom += std::exp((zr[i] - mx) / temperature);
    const double lse = std::log(denom);
    for (std::size_t i = 0; i < k; ++i) lr[i] = (zr[i] - mx) / temperature - lse;
  }
  return detail::make_result("log_softmax", logits.shape(), std::move(out), {logits},
                             [rows, k, temperature](Node& o) {
                               auto* g = parent_grad(o, 0);
                               if (!g) return;
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* l = o.data.data() + r * k;
                                 const double* dl = o.grad.data() + r * k;
                                 double total = 0.0;
                                 for (std::size_t i = 0; i < k; ++i) total += dl[i];
                                 for (std::size_t i = 0; i < k; ++i)
                                   (*g)[r * k + i] += (dl[i] - std::exp(l[i]) * total) / temperature;
                               }
                             });
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride) {
  require_rank("conv1d input", input, 2);
  require_rank("conv1d kernels", kernels, 3);
  require_rank("conv1d bias", bias, 1);
  if (stride == 0) throw ParameterError("conv1d stride must be positive");
  const kernels::Conv1dGeometry g{input.dim(0), kernels.dim(0), kernels.dim(2), stride, input.dim(1)};
  if (kernels.dim(1) != g.in_channels || bias.dim(0) != g.out_channels) {
    throw DimensionError("conv1d: input " + shape_string(input.shape()) + ", kernels " +
                         shape_string(kernels.shape()) + ", bias " + shape_string(bias.shape()));
  }
  if (g.kernel == 0) throw DimensionError("conv1d: empty kernel");
  if (g.length < g.kernel) {
    throw SequenceTooShortError("conv1d: sequence of length " + std::to_string(g.length) +
                                    " is shorter than kernel " + std::to_string(g.kernel),
                                g.kernel);
  }
  std::vector<double> out(g.out_channels * g.out_length());
  kernels::conv1d_forward(g, input.data(), kernels.data(), bias.data(), out);
  return detail::make_result("conv1d", {g.out_channels, g.out_length()}, std::move(out),
                             {input, kernels, bias}, [g](Node& o) {
                               if (auto* gi = parent_grad(o, 0))
                                 kernels::conv1d_backward_input(g, o.grad, parent_data(o, 1), *gi);
                               auto* gw = parent_grad(o, 1);
                               auto* gb = parent_grad(o, 2);
                               if (gw || gb) {
                                 std::vector<double> dw_scratch, db_scratch;
                                 if (!gw) dw_scratch.assign(parent_data(o, 1).size(), 0.0);
                                 if (!gb) db_scratch.assign(g.out_channels, 0.0);
                                 kernels::conv1d_backward_weight(g, o.grad, parent_data(o, 0),
                                                                 gw ? *gw : dw_scratch,
                                                                 gb ? *gb : db_scratch);
                               }
                             });
}

}  // namespace emoda
