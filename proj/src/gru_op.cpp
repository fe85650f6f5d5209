// SPDX-License-Identifier: Apache-2.0
//
// Fused GRU recurrence:
//   z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//   c_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
//   h_t = (1 - z_t) * h_{t-1} + z_t * c_t
#include <cmath>

#include "emoda/errors.hpp"
#include "emoda/kernels.hpp"
#include "emoda/ops.hpp"

namespace emoda {
namespace {

using detail::Node;
using kernels::Trans;

enum Parent : std::size_t { kSeq, kH0, kWz, kWr, kWh, kUz, kUr, kUh, kBz, kBr, kBh };

struct GruSaved {
  std::size_t steps, in, hidden;
  std::vector<double> z, r, cand, prev, reset_prev;  // each [T×H]
};

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_shapes(const Tensor& seq, const Tensor& h0, const GruWeights& w) {
  if (seq.rank() != 2) throw DimensionError("gru: sequence must be [T×in], got " + shape_string(seq.shape()));
  if (seq.dim(0) == 0) throw ContractError("gru: empty sequence");
  const std::size_t in = seq.dim(1);
  const std::size_t hidden = h0.numel();
  if (h0.rank() != 1) throw DimensionError("gru: h0 must be 1-D, got " + shape_string(h0.shape()));
  const auto expect = [](const Tensor& t, Shape s, const char* name) {
    if (t.shape() != s) {
      throw DimensionError(std::string("gru: ") + name + " has shape " + shape_string(t.shape()) +
                           ", expected " + shape_string(s));
    }
  };
  expect(w.w_z, {hidden, in}, "W_z");
  expect(w.w_r, {hidden, in}, "W_r");
  expect(w.w_h, {hidden, in}, "W_h");
  expect(w.u_z, {hidden, hidden}, "U_z");
  expect(w.u_r, {hidden, hidden}, "U_r");
  expect(w.u_h, {hidden, hidden}, "U_h");
  expect(w.b_z, {hidden}, "b_z");
  expect(w.b_r, {hidden}, "b_r");
  expect(w.b_h, {hidden}, "b_h");
}

}  // namespace

Tensor gru_sequence(const Tensor& seq, const Tensor& h0, const GruWeights& w) {
  check_shapes(seq, h0, w);
  const std::size_t steps = seq.dim(0), in = seq.dim(1), hidden = h0.numel();

  // Input projections for all steps at once.
  std::vector<double> xz(steps * hidden), xr(steps * hidden), xh(steps * hidden);
  kernels::gemm(Trans::kNo, Trans::kYes, steps, hidden, in, seq.data(), w.w_z.data(), xz, false);
  kernels::gemm(Trans::kNo, Trans::kYes, steps, hidden, in, seq.data(), w.w_r.data(), xr, false);
  kernels::gemm(Trans::kNo, Trans::kYes, steps, hidden, in, seq.data(), w.w_h.data(), xh, false);

  auto saved = std::make_shared<GruSaved>();
  saved->steps = steps;
  saved->in = in;
  saved->hidden = hidden;
  saved->z.resize(steps * hidden);
  saved->r.resize(steps * hidden);
  saved->cand.resize(steps * hidden);
  saved->prev.resize(steps * hidden);
  saved->reset_prev.resize(steps * hidden);

  std::vector<double> states(steps * hidden);
  std::vector<double> uz(hidden), ur(hidden), uh(hidden);
  const auto bz = w.b_z.data(), br = w.b_r.data(), bh = w.b_h.data();
  std::span<const double> hp = h0.data();
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t off = t * hidden;
    std::copy(hp.begin(), hp.end(), saved->prev.begin() + off);
    kernels::gemm(Trans::kNo, Trans::kYes, 1, hidden, hidden, hp, w.u_z.data(), uz, false);
    kernels::gemm(Trans::kNo, Trans::kYes, 1, hidden, hidden, hp, w.u_r.data(), ur, false);
    for (std::size_t j = 0; j < hidden; ++j) {
      saved->z[off + j] = sigm(xz[off + j] + uz[j] + bz[j]);
      saved->r[off + j] = sigm(xr[off + j] + ur[j] + br[j]);
      saved->reset_prev[off + j] = saved->r[off + j] * hp[j];
    }
    kernels::gemm(Trans::kNo, Trans::kYes, 1, hidden, hidden,
                  std::span<const double>(saved->reset_prev).subspan(off, hidden), w.u_h.data(), uh,
                  false);
    for (std::size_t j = 0; j < hidden; ++j) {
      const double c = std::tanh(xh[off + j] + uh[j] + bh[j]);
      const double z = saved->z[off + j];
      saved->cand[off + j] = c;
      states[off + j] = (1.0 - z) * hp[j] + z * c;
    }
    hp = std::span<const double>(states).subspan(off, hidden);
  }

  return detail::make_result(
      "gru_sequence", {steps, hidden}, std::move(states),
      {seq, h0, w.w_z, w.w_r, w.w_h, w.u_z, w.u_r, w.u_h, w.b_z, w.b_r, w.b_h},
      [saved](Node& o) {
        const std::size_t T = saved->steps, H = saved->hidden, I = saved->in;
        const auto& uz_m = o.parents[kUz]->data;
        const auto& ur_m = o.parents[kUr]->data;
        const auto& uh_m = o.parents[kUh]->data;

        std::vector<double> da_z(T * H), da_r(T * H), da_h(T * H);
        std::vector<double> carry(H, 0.0), dprev(H), drh(H);
        for (std::size_t tt = T; tt-- > 0;) {
          const std::size_t off = tt * H;
          const double* z = saved->z.data() + off;
          const double* r = saved->r.data() + off;
          const double* c = saved->cand.data() + off;
          const double* hp = saved->prev.data() + off;
          for (std::size_t j = 0; j < H; ++j) {
            const double dh = o.grad[off + j] + carry[j];
            da_h[off + j] = dh * z[j] * (1.0 - c[j] * c[j]);
            da_z[off + j] = dh * (c[j] - hp[j]) * z[j] * (1.0 - z[j]);
            dprev[j] = dh * (1.0 - z[j]);
          }
          // d(r ⊙ h_prev) = U_hᵀ · da_h
          kernels::gemm(Trans::kNo, Trans::kNo, 1, H, H,
                        std::span<const double>(da_h).subspan(off, H), uh_m, drh, false);
          for (std::size_t j = 0; j < H; ++j) {
            da_r[off + j] = drh[j] * hp[j] * r[j] * (1.0 - r[j]);
            dprev[j] += drh[j] * r[j];
          }
          kernels::gemm(Trans::kNo, Trans::kNo, 1, H, H,
                        std::span<const double>(da_z).subspan(off, H), uz_m, dprev, true);
          kernels::gemm(Trans::kNo, Trans::kNo, 1, H, H,
                        std::span<const double>(da_r).subspan(off, H), ur_m, dprev, true);
          carry.swap(dprev);
        }

        const auto& x = o.parents[kSeq]->data;
        auto grad_of = [&o](Parent p) -> std::vector<double>* {
          auto& n = *o.parents[p];
          return n.requires_grad ? &n.ensure_grad() : nullptr;
        };
        if (auto* g = grad_of(kH0))
          for (std::size_t j = 0; j < H; ++j) (*g)[j] += carry[j];
        if (auto* g = grad_of(kSeq)) {
          kernels::gemm(Trans::kNo, Trans::kNo, T, I, H, da_z, o.parents[kWz]->data, *g, true);
          kernels::gemm(Trans::kNo, Trans::kNo, T, I, H, da_r, o.parents[kWr]->data, *g, true);
          kernels::gemm(Trans::kNo, Trans::kNo, T, I, H, da_h, o.parents[kWh]->data, *g, true);
        }
        const std::pair<Parent, const std::vector<double>*> input_weights[] = {
            {kWz, &da_z}, {kWr, &da_r}, {kWh, &da_h}};
        for (const auto& [p, da] : input_weights)
          if (auto* g = grad_of(p)) kernels::gemm(Trans::kYes, Trans::kNo, H, I, T, *da, x, *g, true);
        const std::pair<Parent, const std::vector<double>*> recurrent[] = {
            {kUz, &saved->prev}, {kUr, &saved->prev}, {kUh, &saved->reset_prev}};
        const std::vector<double>* recurrent_da[] = {&da_z, &da_r, &da_h};
        for (std::size_t q = 0; q < 3; ++q)
          if (auto* g = grad_of(recurrent[q].first))
            kernels::gemm(Trans::kYes, Trans::kNo, H, H, T, *recurrent_da[q], *recurrent[q].second, *g, true);
        const std::pair<Parent, const std::vector<double>*> biases[] = {
            {kBz, &da_z}, {kBr, &da_r}, {kBh, &da_h}};
        for (const auto& [p, da] : biases)
          if (auto* g = grad_of(p))
            for (std::size_t t = 0; t < T; ++t)
              for (std::size_t j = 0; j < H; ++j) (*g)[j] += (*da)[t * H + j];
      });
}

}  // namespace emoda
