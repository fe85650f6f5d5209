// SPDX-License-Identifier: Apache-2.0
#include "emoda/kernels.hpp"

#include <vector>

namespace emoda::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

inline double a_at(Trans t, std::span<const double> a, std::size_t m, std::size_t k,
                   std::size_t i, std::size_t p) {
  return t == Trans::kNo ? a[i * k + p] : a[p * m + i];
}

inline double b_at(Trans t, std::span<const double> b, std::size_t k, std::size_t n,
                   std::size_t p, std::size_t j) {
  return t == Trans::kNo ? b[p * n + j] : b[j * k + p];
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  const bool parallel = m > 1 && m * n * k >= kParallelWork;
  const auto rows = static_cast<long long>(m);
#pragma omp parallel if (parallel)
  {
    std::vector<double> row(n);
#pragma omp for schedule(static)
    for (long long ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(row.begin(), row.end(), 0.0);
      if (tb == Trans::kNo) {
        // i-p-j order streams rows of B; each row[j] still sums over p in order.
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a_at(ta, a, m, k, i, p);
          const double* brow = b.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
      } else {
        for (std::size_t j = 0; j < n; ++j) {
          const double* bcol = b.data() + j * k;
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += a_at(ta, a, m, k, i, p) * bcol[p];
          row[j] = acc;
        }
      }
      double* crow = c.data() + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += row[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = row[j];
      }
    }
  }
}

void conv1d_forward(const Conv1dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
  const std::size_t t_out = g.out_length();
  const bool parallel =
      g.out_channels > 1 && g.out_channels * t_out * g.in_channels * g.kernel >= kParallelWork;
  const auto channels = static_cast<long long>(g.out_channels);
#pragma omp parallel for schedule(static) if (parallel)
  for (long long oo = 0; oo < channels; ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const double* w = weight.data() + (o * g.in_channels + c) * g.kernel;
        const double* x = input.data() + c * g.length + t * g.stride;
        for (std::size_t q = 0; q < g.kernel; ++q) acc += w[q] * x[q];
      }
      out[o * t_out + t] = acc + bias[o];
    }
  }
}

void conv1d_backward_input(const Conv1dGeometry& g, std::span<const double> dout,
                           std::span<const double> weight, std::span<double> dinput) {
  const std::size_t t_out = g.out_length();
  const bool parallel =
      g.in_channels > 1 && g.out_channels * t_out * g.in_channels * g.kernel >= kParallelWork;
  const auto channels = static_cast<long long>(g.in_channels);
#pragma omp parallel for schedule(static) if (parallel)
  for (long long cc = 0; cc < channels; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double* dx = dinput.data() + c * g.length;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const double* w = weight.data() + (o * g.in_channels + c) * g.kernel;
      const double* dy = dout.data() + o * t_out;
      for (std::size_t t = 0; t < t_out; ++t) {
        for (std::size_t q = 0; q < g.kernel; ++q) dx[t * g.stride + q] += w[q] * dy[t];
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dGeometry& g, std::span<const double> dout,
                            std::span<const double> input, std::span<double> dweight,
                            std::span<double> dbias) {
  const std::size_t t_out = g.out_length();
  const bool parallel =
      g.out_channels > 1 && g.out_channels * t_out * g.in_channels * g.kernel >= kParallelWork;
  const auto channels = static_cast<long long>(g.out_channels);
#pragma omp parallel for schedule(static) if (parallel)
  for (long long oo = 0; oo < channels; ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    const double* dy = dout.data() + o * t_out;
    double db = 0.0;
    for (std::size_t t = 0; t < t_out; ++t) db += dy[t];
    dbias[o] += db;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      double* dw = dweight.data() + (o * g.in_channels + c) * g.kernel;
      const double* x = input.data() + c * g.length;
      for (std::size_t q = 0; q < g.kernel; ++q) {
        double acc = 0.0;
        for (std::size_t t = 0; t < t_out; ++t) acc += dy[t] * x[t * g.stride + q];
        dw[q] += acc;
      }
    }
  }
}

namespace reference {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_at(ta, a, m, k, i, p) * b_at(tb, b, k, n, p, j);
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void conv1d_forward(const Conv1dGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
  const std::size_t t_out = g.out_length();
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < g.in_channels; ++c)
        for (std::size_t q = 0; q < g.kernel; ++q)
          acc += weight[(o * g.in_channels + c) * g.kernel + q] *
                 input[c * g.length + t * g.stride + q];
      out[o * t_out + t] = acc + bias[o];
    }
  }
}

void conv1d_backward_input(const Conv1dGeometry& g, std::span<const double> dout,
                           std::span<const double> weight, std::span<double> dinput) {
  const std::size_t t_out = g.out_length();
  for (std::size_t c = 0; c < g.in_channels; ++c)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t t = 0; t < t_out; ++t)
        for (std::size_t q = 0; q < g.kernel; ++q)
          dinput[c * g.length + t * g.stride + q] +=
              weight[(o * g.in_channels + c) * g.kernel + q] * dout[o * t_out + t];
}

void conv1d_backward_weight(const Conv1dGeometry& g, std::span<const double> dout,
                            std::span<const double> input, std::span<double> dweight,
                            std::span<double> dbias) {
  const std::size_t t_out = g.out_length();
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    double db = 0.0;
    for (std::size_t t = 0; t < t_out; ++t) db += dout[o * t_out + t];
    dbias[o] += db;
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t q = 0; q < g.kernel; ++q) {
        double acc = 0.0;
        for (std::size_t t = 0; t < t_out; ++t)
          acc += dout[o * t_out + t] * input[c * g.length + t * g.stride + q];
        dweight[(o * g.in_channels + c) * g.kernel + q] += acc;
      }
  }
}

}  // namespace reference
}  // namespace emoda::kernels
