// SPDX-License-Identifier: Apache-2.0
#include "emoda/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "emoda/errors.hpp"

namespace emoda {

Tensor ParamRegistry::add(std::string name, Shape shape, ParamKind kind) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Tensor t = Tensor::zeros(std::move(shape), true);
  params_.push_back({std::move(name), t, kind});
  return t;
}

const NamedParam* ParamRegistry::find(std::string_view name) const {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const NamedParam& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const Tensor& ParamRegistry::at(std::string_view name) const {
  const auto* p = find(name);
  if (!p) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return p->tensor;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

bool ParamRegistry::any_nonzero_grad() const {
  for (const auto& p : params_)
    for (double g : p.tensor.grad())
      if (g != 0.0) return true;
  return false;
}

std::uint64_t ParamRegistry::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.tensor.data().data(), p.tensor.numel() * sizeof(double));
  }
  return h;
}

void ParamRegistry::copy_values_from(const ParamRegistry& other) {
  if (other.size() != size()) throw ContractError("registry layouts differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& dst = params_[i];
    const auto& src = other.params_[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw ContractError("registry layouts differ at '" + dst.name + "'");
    }
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), dst.tensor.mutable_data().begin());
  }
}

void init_params(ParamRegistry& registry, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : registry.params()) {
    auto values = p.tensor.mutable_data();
    switch (p.kind) {
      case ParamKind::kBias:
        std::fill(values.begin(), values.end(), 0.0);
        break;
      case ParamKind::kSlope:
        std::fill(values.begin(), values.end(), 0.25);
        break;
      case ParamKind::kWeight:
      case ParamKind::kRecurrent: {
        // [out×in] or [out×in×K]: receptive field multiplies both fans.
        const auto& s = p.tensor.shape();
        const std::size_t receptive = s.size() > 2 ? shape_numel(Shape(s.begin() + 2, s.end())) : 1;
        const double fan_out = static_cast<double>(s[0] * receptive);
        const double fan_in = static_cast<double>((s.size() > 1 ? s[1] : 1) * receptive);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : values) v = dist(rng);
        break;
      }
    }
  }
}

LinearLayer::LinearLayer(ParamRegistry& reg, const std::string& prefix, std::size_t in, std::size_t out)
    : weight(reg.add(prefix + ".weight", {out, in}, ParamKind::kWeight)),
      bias(reg.add(prefix + ".bias", {out}, ParamKind::kBias)) {}

Tensor LinearLayer::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_features()) {
    throw DimensionError("linear: expected [B×" + std::to_string(in_features()) + "], got " +
                         shape_string(x.shape()));
  }
  return add_bias(matmul(x, transpose(weight)), bias);
}

PreluLayer::PreluLayer(ParamRegistry& reg, const std::string& name)
    : slope(reg.add(name, {1}, ParamKind::kSlope)) {}

Conv1dLayer::Conv1dLayer(ParamRegistry& reg, const std::string& prefix, std::size_t in_channels,
                         std::size_t out_channels, std::size_t kernel, std::size_t stride_)
    : kernels(reg.add(prefix + ".weight", {out_channels, in_channels, kernel}, ParamKind::kWeight)),
      bias(reg.add(prefix + ".bias", {out_channels}, ParamKind::kBias)),
      stride(stride_) {}

GruLayer::GruLayer(ParamRegistry& reg, const std::string& prefix, std::size_t in, std::size_t hidden) {
  w.w_z = reg.add(prefix + ".W_z", {hidden, in}, ParamKind::kWeight);
  w.w_r = reg.add(prefix + ".W_r", {hidden, in}, ParamKind::kWeight);
  w.w_h = reg.add(prefix + ".W_h", {hidden, in}, ParamKind::kWeight);
  w.u_z = reg.add(prefix + ".U_z", {hidden, hidden}, ParamKind::kRecurrent);
  w.u_r = reg.add(prefix + ".U_r", {hidden, hidden}, ParamKind::kRecurrent);
  w.u_h = reg.add(prefix + ".U_h", {hidden, hidden}, ParamKind::kRecurrent);
  w.b_z = reg.add(prefix + ".b_z", {hidden}, ParamKind::kBias);
  w.b_r = reg.add(prefix + ".b_r", {hidden}, ParamKind::kBias);
  w.b_h = reg.add(prefix + ".b_h", {hidden}, ParamKind::kBias);
}

GruOutput GruLayer::forward(const Tensor& seq, const Tensor& h0) const {
  Tensor states = gru_sequence(seq, h0, w);
  Tensor last = row(states, states.dim(0) - 1);
  return {states, last};
}

Tensor gru_step(const GruLayer& layer, const Tensor& x, const Tensor& h_prev) {
  const auto& w = layer.w;
  const std::size_t in = x.numel(), hidden = h_prev.numel();
  const Tensor xr = reshape(x, {1, in});
  const Tensor hr = reshape(h_prev, {1, hidden});
  auto affine = [&](const Tensor& wm, const Tensor& um, const Tensor& b, const Tensor& h) {
    return add_bias(add(matmul(xr, transpose(wm)), matmul(h, transpose(um))), b);
  };
  const Tensor z = sigmoid(affine(w.w_z, w.u_z, w.b_z, hr));
  const Tensor r = sigmoid(affine(w.w_r, w.u_r, w.b_r, hr));
  const Tensor c = tanh(affine(w.w_h, w.u_h, w.b_h, mul(r, hr)));
  const Tensor ones = Tensor::full({1, hidden}, 1.0);
  const Tensor h = add(mul(sub(ones, z), hr), mul(z, c));
  return reshape(h, {hidden});
}

namespace {
constexpr char kCheckpointMagic[4] = {'E', 'D', 'A', '1'};
}

void write_checkpoint(std::ostream& out, const std::vector<std::pair<std::string, Tensor>>& params) {
  out.write(kCheckpointMagic, 4);
  for (const auto& [name, t] : params) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) io::put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.data()) io::put_f64(out, v);
  }
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw IngestionError("checkpoint: bad magic (expected EDA1)");
  }
  std::vector<std::pair<std::string, Tensor>> params;
  std::uint32_t name_len = 0;
  while (io::try_get_u32(in, name_len)) {
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) throw IngestionError("checkpoint: truncated name");
    const std::uint32_t rank = io::get_u32(in);
    Shape shape(rank);
    for (auto& e : shape) e = io::get_u32(in);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = io::get_f64(in);
    params.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write checkpoint " + path.string());
  write_checkpoint(out, params);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace emoda
