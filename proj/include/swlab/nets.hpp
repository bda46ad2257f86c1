#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "swlab/rng.hpp"
#include "swlab/tape.hpp"

namespace swlab {

enum class Act : std::uint8_t { kRelu, kTanh };
enum class OutAct : std::uint8_t { kLinear, kTanh };

struct MlpSpec {
  std::uint32_t input_dim = 1;
  std::vector<std::uint32_t> hidden = {64, 64, 64};
  Act hidden_act = Act::kRelu;
  std::uint32_t output_dim = 1;
  OutAct output_act = OutAct::kLinear;

  void validate() const {
    if (input_dim == 0 || output_dim == 0)
      throw std::invalid_argument("MlpSpec: zero dimension");
    if (hidden.empty())
      throw std::invalid_argument("MlpSpec: at least one hidden layer required");
    for (auto h : hidden)
      if (h == 0) throw std::invalid_argument("MlpSpec: zero hidden width");
  }

  // dims[0] = input, dims.back() = output
  std::vector<std::uint32_t> dims() const {
    std::vector<std::uint32_t> d;
    d.reserve(hidden.size() + 2);
    d.push_back(input_dim);
    for (auto h : hidden) d.push_back(h);
    d.push_back(output_dim);
    return d;
  }
  std::size_t layer_count() const { return hidden.size() + 1; }
};

// Weights and biases stored flat: for each layer, the row-major weight matrix
// followed by the bias vector. Flat storage keeps Adam and finite-difference
// loops trivial; layers are exposed as spans.
struct MlpParams {
  MlpSpec spec;
  std::vector<double> flat;

  struct LayerView {
    std::span<double> w;
    std::span<double> b;
    std::uint32_t rows, cols;
  };
  struct ConstLayerView {
    std::span<const double> w;
    std::span<const double> b;
    std::uint32_t rows, cols;
  };

  static std::size_t count_params(const MlpSpec& spec) {
    auto d = spec.dims();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < d.size(); ++l)
      total += std::size_t(d[l + 1]) * d[l] + d[l + 1];
    return total;
  }
  std::size_t param_count() const { return flat.size(); }

  LayerView layer(std::size_t l) {
    auto [ofs, rows, cols] = layer_ofs(l);
    return {{flat.data() + ofs, std::size_t(rows) * cols},
            {flat.data() + ofs + std::size_t(rows) * cols, rows},
            rows,
            cols};
  }
  ConstLayerView layer(std::size_t l) const {
    auto [ofs, rows, cols] = layer_ofs(l);
    return {{flat.data() + ofs, std::size_t(rows) * cols},
            {flat.data() + ofs + std::size_t(rows) * cols, rows},
            rows,
            cols};
  }

 private:
  struct Ofs {
    std::size_t ofs;
    std::uint32_t rows, cols;
  };
  Ofs layer_ofs(std::size_t l) const {
    auto d = spec.dims();
    std::size_t ofs = 0;
    for (std::size_t k = 0; k < l; ++k)
      ofs += std::size_t(d[k + 1]) * d[k] + d[k + 1];
    return {ofs, d[l + 1], d[l]};
  }
};

// Fan-in scaled normal initialization: std = sqrt(2/fan_in) for relu hidden
// activations, sqrt(1/fan_in) for tanh. Biases start at zero.
inline MlpParams mlp_init(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams p;
  p.spec = spec;
  p.flat.assign(MlpParams::count_params(spec), 0.0);
  const double gain = spec.hidden_act == Act::kRelu ? 2.0 : 1.0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    auto lv = p.layer(l);
    const double std = std::sqrt(gain / lv.cols);
    for (auto& w : lv.w) w = rng.normal(0.0, std);
    // biases stay zero
  }
  return p;
}

// ---- taped evaluation ------------------------------------------------------

// Parameters recorded as a single flat leaf with per-layer slice views, so
// one backward() gives the whole flat gradient.
struct TapedMlp {
  MlpSpec spec;
  Var params;
  std::vector<Var> w, b;
};

inline TapedMlp record_mlp_from(Tape& tape, const MlpSpec& spec, Var flat) {
  if (tape.length(flat) != MlpParams::count_params(spec))
    throw std::invalid_argument("record_mlp_from: parameter length mismatch");
  TapedMlp tm;
  tm.spec = spec;
  tm.params = flat;
  std::uint32_t ofs = 0;
  auto dims = spec.dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::uint32_t rows = dims[l + 1], cols = dims[l];
    tm.w.push_back(tape.slice(tm.params, ofs, rows * cols));
    ofs += rows * cols;
    tm.b.push_back(tape.slice(tm.params, ofs, rows));
    ofs += rows;
  }
  return tm;
}

inline TapedMlp record_mlp(Tape& tape, const MlpParams& p) {
  return record_mlp_from(tape, p.spec,
                         tape.constant(std::span<const double>(p.flat)));
}

inline Var mlp_forward(Tape& tape, const TapedMlp& mlp, Var x) {
  if (tape.length(x) != mlp.spec.input_dim)
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  auto dims = mlp.spec.dims();
  Var h = x;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Var a = tape.add(tape.matvec(mlp.w[l], h, dims[l + 1], dims[l]), mlp.b[l]);
    const bool last = l + 2 == dims.size();
    if (last) {
      h = mlp.spec.output_act == OutAct::kTanh ? tape.tanh(a) : a;
    } else {
      h = mlp.spec.hidden_act == Act::kRelu ? tape.relu(a) : tape.tanh(a);
    }
  }
  return h;
}

struct TapedEval {
  Var value;   // scalar critic output
  Var grad_x;  // recorded input gradient, differentiable w.r.t. params
};

inline TapedEval mlp_input_gradient(Tape& tape, const TapedMlp& mlp, Var x) {
  if (mlp.spec.output_dim != 1)
    throw std::invalid_argument("input_gradient: critic output must be scalar");
  Var y = mlp_forward(tape, mlp, x);
  auto g = tape.backward(y, {x});
  return {y, g[0]};
}

// ---- straight-loop evaluation (no tape) -------------------------------------
// Independent re-evaluation path used by the transport oracle and by tests
// that cross-check the taped engine.

inline std::vector<double> mlp_forward_value(const MlpParams& p,
                                             std::span<const double> x) {
  if (x.size() != p.spec.input_dim)
    throw std::invalid_argument("mlp_forward_value: input dimension mismatch");
  std::vector<double> h(x.begin(), x.end()), next;
  const std::size_t layers = p.spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    auto lv = p.layer(l);
    next.assign(lv.rows, 0.0);
    for (std::uint32_t r = 0; r < lv.rows; ++r) {
      double acc = lv.b[r];
      const double* row = lv.w.data() + std::size_t(r) * lv.cols;
      for (std::uint32_t c = 0; c < lv.cols; ++c) acc += row[c] * h[c];
      next[r] = acc;
    }
    const bool last = l + 1 == layers;
    if (last) {
      if (p.spec.output_act == OutAct::kTanh)
        for (auto& v : next) v = std::tanh(v);
    } else if (p.spec.hidden_act == Act::kRelu) {
      for (auto& v : next) v = v > 0.0 ? v : 0.0;
    } else {
      for (auto& v : next) v = std::tanh(v);
    }
    h.swap(next);
  }
  return h;
}

inline double critic_value(const MlpParams& p, std::span<const double> x) {
  auto out = mlp_forward_value(p, x);
  if (out.size() != 1)
    throw std::invalid_argument("critic_value: output not scalar");
  return out[0];
}

// Hand-rolled backprop of the scalar output with respect to the input.
// relu derivative at exactly 0 is 0, matching the taped engine.
inline std::vector<double> input_gradient_value(const MlpParams& p,
                                                std::span<const double> x) {
  if (p.spec.output_dim != 1)
    throw std::invalid_argument("input_gradient_value: output not scalar");
  if (x.size() != p.spec.input_dim)
    throw std::invalid_argument("input_gradient_value: input dimension mismatch");
  const std::size_t layers = p.spec.layer_count();
  std::vector<std::vector<double>> pre(layers);   // pre-activations
  std::vector<std::vector<double>> act(layers + 1);
  act[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    auto lv = p.layer(l);
    pre[l].assign(lv.rows, 0.0);
    for (std::uint32_t r = 0; r < lv.rows; ++r) {
      double acc = lv.b[r];
      const double* row = lv.w.data() + std::size_t(r) * lv.cols;
      for (std::uint32_t c = 0; c < lv.cols; ++c) acc += row[c] * act[l][c];
      pre[l][r] = acc;
    }
    act[l + 1] = pre[l];
    const bool last = l + 1 == layers;
    if (last) {
      if (p.spec.output_act == OutAct::kTanh)
        for (auto& v : act[l + 1]) v = std::tanh(v);
    } else if (p.spec.hidden_act == Act::kRelu) {
      for (auto& v : act[l + 1]) v = v > 0.0 ? v : 0.0;
    } else {
      for (auto& v : act[l + 1]) v = std::tanh(v);
    }
  }

  std::vector<double> delta = {1.0}, prev;
  for (std::size_t li = layers; li-- > 0;) {
    auto lv = p.layer(li);
    const bool last = li + 1 == layers;
    // multiply by activation derivative at this layer's pre-activation
    for (std::uint32_t r = 0; r < lv.rows; ++r) {
      double d;
      if (last) {
        d = p.spec.output_act == OutAct::kTanh
                ? 1.0 - act[li + 1][r] * act[li + 1][r]
                : 1.0;
      } else if (p.spec.hidden_act == Act::kRelu) {
        d = pre[li][r] > 0.0 ? 1.0 : 0.0;
      } else {
        d = 1.0 - act[li + 1][r] * act[li + 1][r];
      }
      delta[r] *= d;
    }
    prev.assign(lv.cols, 0.0);
    for (std::uint32_t r = 0; r < lv.rows; ++r) {
      const double* row = lv.w.data() + std::size_t(r) * lv.cols;
      const double dr = delta[r];
      for (std::uint32_t c = 0; c < lv.cols; ++c) prev[c] += dr * row[c];
    }
    delta.swap(prev);
  }
  return delta;
}

// Exactly linear critic D(x) = w . x realized within the MLP family via a
// relu split: h = relu([x; -x]), D = [w; -w] . h. The input gradient is w
// everywhere except on the coordinate hyperplanes x_k = 0 where the relu
// tie-break zeroes the k-th contribution.
inline MlpParams linear_critic(std::span<const double> w) {
  const std::uint32_t d = static_cast<std::uint32_t>(w.size());
  MlpSpec spec;
  spec.input_dim = d;
  spec.hidden = {2 * d};
  spec.hidden_act = Act::kRelu;
  spec.output_dim = 1;
  spec.output_act = OutAct::kLinear;
  MlpParams p;
  p.spec = spec;
  p.flat.assign(MlpParams::count_params(spec), 0.0);
  auto l0 = p.layer(0);
  for (std::uint32_t k = 0; k < d; ++k) {
    l0.w[std::size_t(k) * d + k] = 1.0;
    l0.w[std::size_t(d + k) * d + k] = -1.0;
  }
  auto l1 = p.layer(1);
  for (std::uint32_t k = 0; k < d; ++k) {
    l1.w[k] = w[k];
    l1.w[d + k] = -w[k];
  }
  return p;
}

// ---- JSON persistence --------------------------------------------------------

inline nlohmann::json mlp_to_json(const MlpParams& p) {
  nlohmann::json spec;
  spec["input_dim"] = p.spec.input_dim;
  spec["hidden"] = p.spec.hidden;
  spec["hidden_activation"] = p.spec.hidden_act == Act::kRelu ? "relu" : "tanh";
  spec["output_dim"] = p.spec.output_dim;
  spec["output_activation"] =
      p.spec.output_act == OutAct::kLinear ? "linear" : "tanh";
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < p.spec.layer_count(); ++l) {
    auto lv = p.layer(l);
    nlohmann::json rows = nlohmann::json::array();
    for (std::uint32_t r = 0; r < lv.rows; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::uint32_t c = 0; c < lv.cols; ++c)
        row.push_back(lv.w[std::size_t(r) * lv.cols + c]);
      rows.push_back(std::move(row));
    }
    layers.push_back({{"w", std::move(rows)},
                      {"b", std::vector<double>(lv.b.begin(), lv.b.end())}});
  }
  return {{"spec", std::move(spec)}, {"layers", std::move(layers)}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpSpec spec;
  const auto& js = j.at("spec");
  spec.input_dim = js.at("input_dim").get<std::uint32_t>();
  spec.hidden = js.at("hidden").get<std::vector<std::uint32_t>>();
  const std::string ha = js.at("hidden_activation").get<std::string>();
  const std::string oa = js.at("output_activation").get<std::string>();
  if (ha != "relu" && ha != "tanh")
    throw std::invalid_argument("mlp_from_json: bad hidden_activation");
  if (oa != "linear" && oa != "tanh")
    throw std::invalid_argument("mlp_from_json: bad output_activation");
  spec.hidden_act = ha == "relu" ? Act::kRelu : Act::kTanh;
  spec.output_dim = js.at("output_dim").get<std::uint32_t>();
  spec.output_act = oa == "linear" ? OutAct::kLinear : OutAct::kTanh;
  spec.validate();

  MlpParams p;
  p.spec = spec;
  p.flat.assign(MlpParams::count_params(spec), 0.0);
  const auto& layers = j.at("layers");
  if (layers.size() != spec.layer_count())
    throw std::invalid_argument("mlp_from_json: layer count mismatch");
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    auto lv = p.layer(l);
    const auto& jl = layers.at(l);
    const auto& rows = jl.at("w");
    if (rows.size() != lv.rows)
      throw std::invalid_argument("mlp_from_json: weight rows mismatch");
    for (std::uint32_t r = 0; r < lv.rows; ++r) {
      const auto& row = rows.at(r);
      if (row.size() != lv.cols)
        throw std::invalid_argument("mlp_from_json: weight cols mismatch");
      for (std::uint32_t c = 0; c < lv.cols; ++c)
        lv.w[std::size_t(r) * lv.cols + c] = row.at(c).get<double>();
    }
    const auto& b = jl.at("b");
    if (b.size() != lv.rows)
      throw std::invalid_argument("mlp_from_json: bias size mismatch");
    for (std::uint32_t r = 0; r < lv.rows; ++r) lv.b[r] = b.at(r).get<double>();
  }
  return p;
}

inline void mlp_save(const MlpParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("mlp_save: cannot open " + path);
  out << mlp_to_json(p).dump(2) << '\n';
}

inline MlpParams mlp_load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mlp_load: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return mlp_from_json(j);
}

}  // namespace swlab
