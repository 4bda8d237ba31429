// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Radiance field: two perceptrons (coarse and fine) mapping an encoded
// position and view direction to density and color.

#include "nerfin/core.hpp"
#include "nerfin/grad.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace nerfin {

enum class Level { coarse, fine };

struct FieldConfig {
  int pos_levels = 8;
  int dir_levels = 4;
  int hidden_width = 128;
  int hidden_layers = 6;
  int skip_layer = 3;  ///< layer whose input is re-concatenated with the position encoding
  double near = 2.0;
  double far = 6.0;
  int n_coarse = 64;
  int n_fine = 128;
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;

  int pos_dim() const { return 6 * pos_levels; }
  int dir_dim() const { return 6 * dir_levels; }
  int color_width() const { return std::max(1, hidden_width / 2); }

  void validate() const {
    if (pos_levels < 1 || dir_levels < 0) throw std::invalid_argument("field config: encoding levels out of range");
    if (hidden_width < 1 || hidden_layers < 1) throw std::invalid_argument("field config: empty network");
    if (!(near < far)) throw std::invalid_argument("field config: near must be < far");
    if (n_coarse < 2 || n_fine < 0) throw std::invalid_argument("field config: n_coarse must be >= 2");
  }

  bool operator==(const FieldConfig&) const = default;
};

/// gamma(p) = (sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)).
inline Eigen::VectorXd positional_encode(const Eigen::VectorXd& p, int levels) {
  if (levels < 0) throw std::invalid_argument("positional_encode: negative level count");
  const Index n = p.size();
  Eigen::VectorXd out(n * 2 * levels);
  for (int k = 0; k < levels; ++k) {
    const double freq = std::ldexp(std::numbers::pi, k);
    out.segment(2 * k * n, n) = (freq * p.array()).sin();
    out.segment((2 * k + 1) * n, n) = (freq * p.array()).cos();
  }
  return out;
}

/// Row-wise positional_encode of an n x 3 point matrix.
template <typename Scalar>
Tensor<Scalar> encode_rows(const Tensor<Scalar>& points, int levels) {
  const Index n = points.rows(), d = points.cols();
  Tensor<Scalar> out(n, d * 2 * levels);
  for (int k = 0; k < levels; ++k) {
    const auto freq = static_cast<Scalar>(std::ldexp(std::numbers::pi, k));
    const Tensor<Scalar> scaled = points * freq;
    out.middleCols(2 * k * d, d) = detail::lanewise(scaled, [](const auto& x) { return x.sin(); });
    out.middleCols((2 * k + 1) * d, d) = detail::lanewise(scaled, [](const auto& x) { return x.cos(); });
  }
  return out;
}

/// Shapes of one network's parameters, in storage order.
inline std::vector<Shape> network_shapes(const FieldConfig& cfg) {
  std::vector<Shape> shapes;
  const Index w = cfg.hidden_width;
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    Index in = l == 0 ? cfg.pos_dim() : w;
    if (l == cfg.skip_layer && l > 0) in += cfg.pos_dim();
    shapes.push_back({in, w});
    shapes.push_back({1, w});
  }
  shapes.push_back({w, 1});  // density head
  shapes.push_back({1, 1});
  shapes.push_back({w, w});  // feature
  shapes.push_back({1, w});
  shapes.push_back({w + cfg.dir_dim(), cfg.color_width()});
  shapes.push_back({1, cfg.color_width()});
  shapes.push_back({cfg.color_width(), 3});
  shapes.push_back({1, 3});
  return shapes;
}

template <typename Scalar>
class RadianceField {
 public:
  FieldConfig config;
  /// Coarse network parameters followed by fine network parameters.
  std::vector<Tensor<Scalar>> theta;

  /// Uniform(+-1/sqrt(fan_in)) initialisation of both networks from config.seed.
  static RadianceField init(const FieldConfig& cfg) {
    cfg.validate();
    RadianceField f;
    f.config = cfg;
    Rng rng(cfg.seed);
    const auto shapes = network_shapes(cfg);
    for (int net = 0; net < 2; ++net) {
      for (std::size_t i = 0; i < shapes.size(); ++i) {
        const Shape s = shapes[i];
        // biases share their weight's fan-in
        const Index fan_in = (i % 2 == 0) ? s[0] : shapes[i - 1][0];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor<Scalar> t(s[0], s[1]);
        for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<Scalar>(rng.uniform(-bound, bound));
        f.theta.push_back(std::move(t));
      }
    }
    return f;
  }

  std::size_t per_network() const { return theta.size() / 2; }

  std::span<const Tensor<Scalar>> network(Level level) const {
    const std::size_t n = per_network();
    return std::span<const Tensor<Scalar>>(theta).subspan(level == Level::coarse ? 0 : n, n);
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& t : theta) n += t.size();
    return n;
  }

  template <typename Other>
  RadianceField<Other> cast() const {
    RadianceField<Other> out;
    out.config = config;
    for (const auto& t : theta) out.theta.push_back(t.template cast<Other>());
    return out;
  }
};

/// The parameters of one network placed on a tape.
template <typename Scalar>
struct NetworkVars {
  std::vector<Var<Scalar>> params;
};

template <typename Scalar>
struct FieldVars {
  NetworkVars<Scalar> coarse;
  NetworkVars<Scalar> fine;
  /// Every parameter Var in RadianceField::theta order.
  std::vector<Var<Scalar>> all;

  const NetworkVars<Scalar>& network(Level level) const { return level == Level::coarse ? coarse : fine; }
};

/// Places the field's parameters on `tape` as gradient-tracked leaves.
template <typename Scalar>
FieldVars<Scalar> bind(Tape<Scalar>& tape, const RadianceField<Scalar>& field) {
  FieldVars<Scalar> vars;
  const std::size_t n = field.per_network();
  for (std::size_t i = 0; i < field.theta.size(); ++i) {
    Var<Scalar> v = tape.parameter(field.theta[i]);
    vars.all.push_back(v);
    (i < n ? vars.coarse : vars.fine).params.push_back(v);
  }
  return vars;
}

/// Gradients of every bound parameter, in theta order.
template <typename Scalar>
std::vector<Tensor<Scalar>> gradients(const Tape<Scalar>& tape, const FieldVars<Scalar>& vars) {
  std::vector<Tensor<Scalar>> g;
  g.reserve(vars.all.size());
  for (const auto& v : vars.all) g.push_back(tape.gradient(v));
  return g;
}

template <typename Scalar>
struct PointOutput {
  Var<Scalar> sigma;  ///< n x 1, nonnegative
  Var<Scalar> rgb;    ///< n x 3, in [0, 1]
};

/// Runs one network on encoded inputs (n x pos_dim, n x dir_dim). Density
/// depends on position only.
template <typename Scalar>
PointOutput<Scalar> evaluate_network(const NetworkVars<Scalar>& net, const FieldConfig& cfg,
                                     const Var<Scalar>& enc_pos, const Var<Scalar>& enc_dir) {
  const auto& p = net.params;
  std::size_t k = 0;
  Var<Scalar> h = enc_pos;
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    if (l == cfg.skip_layer && l > 0) h = concat({enc_pos, h}, Axis::cols);
    h = relu(linear(h, p[k], p[k + 1]));
    k += 2;
  }
  Var<Scalar> sigma = softplus(linear(h, p[k], p[k + 1]));
  k += 2;
  Var<Scalar> feature = linear(h, p[k], p[k + 1]);
  k += 2;
  Var<Scalar> color_in = cfg.dir_dim() > 0 ? concat({feature, enc_dir}, Axis::cols) : feature;
  Var<Scalar> hc = relu(linear(color_in, p[k], p[k + 1]));
  k += 2;
  Var<Scalar> rgb = sigmoid(linear(hc, p[k], p[k + 1]));
  return {sigma, rgb};
}

/// Color and density of the field at one point.
template <typename Scalar>
std::pair<Vec3, double> query_field(const RadianceField<Scalar>& field, const Vec3& x, const Vec3& d, Level level) {
  Tape<Scalar> tape(false);
  const FieldVars<Scalar> vars = bind(tape, field);
  const Tensor<Scalar> xp = x.transpose().cast<Scalar>();
  const Tensor<Scalar> dp = d.transpose().cast<Scalar>();
  const auto out = evaluate_network(vars.network(level), field.config,
                                    tape.constant(encode_rows(xp, field.config.pos_levels)),
                                    tape.constant(encode_rows(dp, field.config.dir_levels)));
  const Vec3 c = out.rgb.value().row(0).transpose().template cast<double>();
  return {c, static_cast<double>(out.sigma.value()(0, 0))};
}

}  // namespace nerfin
