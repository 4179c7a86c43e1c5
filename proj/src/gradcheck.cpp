// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "uaglnet/decoder.hpp"
#include "uaglnet/encoder.hpp"
#include "uaglnet/fusion.hpp"
#include "uaglnet/losses.hpp"
#include "uaglnet/ops.hpp"

namespace uaglnet {

double gradient_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / scale;
}

template <typename T>
std::vector<T> finite_difference_gradient(const std::function<T()>& f, Tensor<T>& x, T h) {
  auto values = x.data_mut();
  std::vector<T> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T saved = values[i];
    values[i] = saved + h;
    const T up = f();
    values[i] = saved - h;
    const T down = f();
    values[i] = saved;
    grad[i] = (up - down) / (T(2) * h);
  }
  return grad;
}

template std::vector<float> finite_difference_gradient(const std::function<float()>&,
                                                       Tensor<float>&, float);
template std::vector<double> finite_difference_gradient(const std::function<double()>&,
                                                        Tensor<double>&, double);

double check_gradient_instance(const GradInstance& instance, Rng& rng, double h) {
  auto inputs = instance.inputs;
  for (auto& in : inputs) {
    in.requires_grad_(true);
    in.zero_grad();
  }
  TensorD probe;
  {
    NoGradGuard guard;
    probe = instance.fn(inputs);
  }
  const TensorD weights = rand_uniform<double>(probe.shape(), rng, -1.0, 1.0);
  auto objective = [&] { return sum(mul(instance.fn(inputs), weights)); };
  backward(objective());

  const std::function<double()> f = [&] {
    NoGradGuard guard;
    return objective().item();
  };
  double worst = 0.0;
  for (auto& in : inputs) {
    const auto analytic = in.grad_tensor();
    const auto numeric = finite_difference_gradient(f, in, h);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      worst = std::max(worst, gradient_error(analytic[static_cast<Index>(i)], numeric[i]));
    }
  }
  return worst;
}

GradCheckResult run_gradcheck(const GradCase& c, int instances, std::uint64_t seed,
                              double tolerance) {
  GradCheckResult r;
  r.name = c.name;
  Rng rng = Rng::derive(seed, std::hash<std::string>{}(c.name));
  for (int i = 0; i < instances; ++i) {
    const auto instance = c.make(rng);
    r.max_error = std::max(r.max_error, check_gradient_instance(instance, rng));
    ++r.instances;
  }
  r.passed = r.max_error < tolerance;
  return r;
}

std::vector<GradCheckResult> run_gradchecks(int instances, std::uint64_t seed,
                                            const std::string& filter, double tolerance) {
  std::vector<GradCheckResult> out;
  for (const auto& c : gradcheck_registry()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    out.push_back(run_gradcheck(c, instances, seed, tolerance));
  }
  return out;
}

namespace {

using Inputs = std::vector<TensorD>;
using Fn = std::function<TensorD(const Inputs&)>;

TensorD uniform(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  return rand_uniform<double>(shape, rng, lo, hi);
}

// Uniform draws that stay at least `margin` away from every kink point.
TensorD away_from(Rng& rng, Shape shape, double lo, double hi, std::vector<double> kinks,
                  double margin = 0.05) {
  const Index n = numel_of(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::any_of(kinks.begin(), kinks.end(),
                         [&](double k) { return std::abs(x - k) < margin; }));
  }
  return TensorD(std::move(shape), std::move(v));
}

// Distinct values whose largest and smallest entries are well separated from
// the runners-up, so max/min have a unique argument under perturbation.
TensorD separated(Rng& rng, Shape shape) {
  for (;;) {
    auto t = uniform(rng, shape);
    std::vector<double> v(t.data().begin(), t.data().end());
    std::sort(v.begin(), v.end());
    if (v.size() < 2 || (v[1] - v[0] > 0.02 && v[v.size() - 1] - v[v.size() - 2] > 0.02)) return t;
  }
}

TensorD binary(Rng& rng, Shape shape) {
  const Index n = numel_of(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
  return TensorD(std::move(shape), std::move(v));
}

GradCase simple(std::string name, std::function<Inputs(Rng&)> gen, Fn fn) {
  return {std::move(name), [gen = std::move(gen), fn = std::move(fn)](Rng& rng) {
            return GradInstance{gen(rng), fn};
          }};
}

GradCase unary(std::string name, std::function<TensorD(const TensorD&)> op, double lo = -2,
               double hi = 2, std::vector<double> kinks = {}) {
  return simple(
      std::move(name),
      [lo, hi, kinks](Rng& rng) { return Inputs{away_from(rng, Shape{3, 4}, lo, hi, kinks)}; },
      [op = std::move(op)](const Inputs& in) { return op(in[0]); });
}

// Parameterized cases: the instance inputs are the layer input(s) followed by
// every parameter the builder created.
template <typename Params>
struct ParamCase {
  ParamStore<double> store;
  Params params;
};

void append_params(Inputs& inputs, const ParamStore<double>& store) {
  for (const auto& [_, t] : store.entries()) inputs.push_back(t);
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.widths = {4, 8, 8, 8};
  cfg.heads_stage3 = 2;
  cfg.heads_stage4 = 2;
  cfg.fusion_dim = 4;
  cfg.tile = 32;
  return cfg;
}

std::vector<GradCase> build_registry() {
  std::vector<GradCase> r;

  // Elementwise, broadcasting and reductions.
  r.push_back(simple("add", [](Rng& g) { return Inputs{uniform(g, {2, 3}), uniform(g, {2, 3})}; },
                     [](const Inputs& in) { return add(in[0], in[1]); }));
  r.push_back(simple("add_broadcast",
                     [](Rng& g) { return Inputs{uniform(g, {2, 3, 4}), uniform(g, {1, 3, 1})}; },
                     [](const Inputs& in) { return add(in[0], in[1]); }));
  r.push_back(simple("sub", [](Rng& g) { return Inputs{uniform(g, {3, 2}), uniform(g, {2})}; },
                     [](const Inputs& in) { return sub(in[0], in[1]); }));
  r.push_back(simple("mul", [](Rng& g) { return Inputs{uniform(g, {4, 3}), uniform(g, {4, 1})}; },
                     [](const Inputs& in) { return mul(in[0], in[1]); }));
  r.push_back(simple("div",
                     [](Rng& g) {
                       return Inputs{uniform(g, {3, 3}), away_from(g, {3, 3}, -2, 2, {0}, 0.5)};
                     },
                     [](const Inputs& in) { return div(in[0], in[1]); }));
  r.push_back(unary("scale", [](const TensorD& x) { return scale(x, -1.7); }));
  r.push_back(unary("add_scalar", [](const TensorD& x) { return add_scalar(x, 0.3); }));
  r.push_back(unary("rsub_scalar", [](const TensorD& x) { return rsub_scalar(1.0, x); }));
  r.push_back(unary("neg", [](const TensorD& x) { return neg(x); }));
  r.push_back(unary("square", [](const TensorD& x) { return square(x); }));
  r.push_back(unary("exp", [](const TensorD& x) { return exp(x); }));
  r.push_back(unary("log", [](const TensorD& x) { return log(x); }, 0.2, 3.0));
  r.push_back(unary("abs", [](const TensorD& x) { return abs(x); }, -2, 2, {0}));
  r.push_back(unary("clamp", [](const TensorD& x) { return clamp(x, -1.0, 1.0); }, -2, 2, {-1, 1}));
  r.push_back(unary("sigmoid", [](const TensorD& x) { return sigmoid(x); }, -4, 4));
  r.push_back(unary("softplus", [](const TensorD& x) { return softplus(x); }, -4, 4));
  r.push_back(unary("gelu", [](const TensorD& x) { return gelu(x); }, -3, 3));
  r.push_back(simple("broadcast_to", [](Rng& g) { return Inputs{uniform(g, {3, 1})}; },
                     [](const Inputs& in) { return broadcast_to(in[0], Shape{2, 3, 4}); }));
  r.push_back(unary("sum", [](const TensorD& x) { return sum(x); }));
  r.push_back(unary("mean", [](const TensorD& x) { return mean(x); }));
  r.push_back(simple("mean_axis", [](Rng& g) { return Inputs{uniform(g, {3, 4, 2})}; },
                     [](const Inputs& in) { return mean_axis(in[0], 1); }));
  r.push_back(simple("max_all", [](Rng& g) { return Inputs{separated(g, {3, 4})}; },
                     [](const Inputs& in) { return max_all(in[0]); }));
  r.push_back(simple("min_all", [](Rng& g) { return Inputs{separated(g, {3, 4})}; },
                     [](const Inputs& in) { return min_all(in[0]); }));

  // Shape manipulation.
  r.push_back(simple("reshape", [](Rng& g) { return Inputs{uniform(g, {2, 6})}; },
                     [](const Inputs& in) { return reshape(in[0], Shape{3, 4}); }));
  r.push_back(simple("transpose2d", [](Rng& g) { return Inputs{uniform(g, {3, 5})}; },
                     [](const Inputs& in) { return transpose2d(in[0]); }));
  r.push_back(simple("slice", [](Rng& g) { return Inputs{uniform(g, {4, 5, 3})}; },
                     [](const Inputs& in) { return slice(in[0], 1, 1, 3); }));
  r.push_back(simple("concat",
                     [](Rng& g) { return Inputs{uniform(g, {2, 3, 3}), uniform(g, {4, 3, 3})}; },
                     [](const Inputs& in) { return concat(in, 0); }));
  r.push_back(simple("tokens", [](Rng& g) { return Inputs{uniform(g, {3, 2, 4})}; },
                     [](const Inputs& in) { return from_tokens(scale(to_tokens(in[0]), 2.0), 2, 4); }));

  // Linear algebra and normalization.
  r.push_back(simple("matmul", [](Rng& g) { return Inputs{uniform(g, {3, 4}), uniform(g, {4, 2})}; },
                     [](const Inputs& in) { return matmul(in[0], in[1]); }));
  r.push_back(simple("linear",
                     [](Rng& g) {
                       return Inputs{uniform(g, {5, 3}), uniform(g, {3, 4}), uniform(g, {4})};
                     },
                     [](const Inputs& in) { return linear(in[0], in[1], in[2]); }));
  r.push_back(simple("softmax_last", [](Rng& g) { return Inputs{uniform(g, {3, 5}, -3, 3)}; },
                     [](const Inputs& in) { return softmax(in[0], -1); }));
  r.push_back(simple("softmax_axis0", [](Rng& g) { return Inputs{uniform(g, {4, 2, 3}, -3, 3)}; },
                     [](const Inputs& in) { return softmax(in[0], 0); }));
  r.push_back(simple("layer_norm_last",
                     [](Rng& g) {
                       return Inputs{uniform(g, {4, 6}, -2, 2), uniform(g, {6}, 0.5, 1.5),
                                     uniform(g, {6})};
                     },
                     [](const Inputs& in) { return layer_norm(in[0], in[1], in[2], 1e-6, -1); }));
  r.push_back(simple("layer_norm_channels",
                     [](Rng& g) {
                       return Inputs{uniform(g, {5, 3, 3}, -2, 2), uniform(g, {5}, 0.5, 1.5),
                                     uniform(g, {5})};
                     },
                     [](const Inputs& in) { return layer_norm(in[0], in[1], in[2], 1e-6, 0); }));

  // Convolutions and resampling.
  r.push_back(simple("conv2d",
                     [](Rng& g) {
                       return Inputs{uniform(g, {2, 5, 6}), uniform(g, {3, 2, 3, 3}), uniform(g, {3})};
                     },
                     [](const Inputs& in) {
                       return conv2d(in[0], in[1], std::optional<TensorD>(in[2]), 1, 1);
                     }));
  r.push_back(simple("conv2d_stride2",
                     [](Rng& g) { return Inputs{uniform(g, {2, 7, 6}), uniform(g, {3, 2, 3, 3})}; },
                     [](const Inputs& in) {
                       return conv2d(in[0], in[1], std::optional<TensorD>(), 2, 1);
                     }));
  r.push_back(simple("conv2d_patch",
                     [](Rng& g) {
                       return Inputs{uniform(g, {3, 4, 4}), uniform(g, {2, 3, 2, 2}), uniform(g, {2})};
                     },
                     [](const Inputs& in) {
                       return conv2d(in[0], in[1], std::optional<TensorD>(in[2]), 2, 0);
                     }));
  r.push_back(simple("depthwise_conv2d",
                     [](Rng& g) {
                       return Inputs{uniform(g, {3, 5, 5}), uniform(g, {3, 1, 5, 5}), uniform(g, {3})};
                     },
                     [](const Inputs& in) {
                       return depthwise_conv2d(in[0], in[1], std::optional<TensorD>(in[2]), 2);
                     }));
  r.push_back(simple("pointwise_conv2d",
                     [](Rng& g) {
                       return Inputs{uniform(g, {3, 3, 4}), uniform(g, {2, 3, 1, 1}), uniform(g, {2})};
                     },
                     [](const Inputs& in) {
                       return pointwise_conv2d(in[0], in[1], std::optional<TensorD>(in[2]));
                     }));
  r.push_back(simple("bilinear_x2", [](Rng& g) { return Inputs{uniform(g, {2, 3, 4})}; },
                     [](const Inputs& in) { return bilinear_upsample(in[0], 2); }));
  r.push_back(simple("bilinear_x4", [](Rng& g) { return Inputs{uniform(g, {1, 2, 3})}; },
                     [](const Inputs& in) { return bilinear_upsample(in[0], 4); }));

  // Encoder layers.
  r.push_back({"mkfm", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<MkfmParams<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = MkfmParams<double>::make(b, 8, 4);
                 Inputs in{uniform(g, {8, 5, 5})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) { return mkfm(x[0], c->params); }};
               }});
  r.push_back({"mhsa", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<MhsaParams<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = MhsaParams<double>::make(b, 6, 2);
                 Inputs in{uniform(g, {5, 6})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) { return mhsa(x[0], c->params); }};
               }});
  r.push_back({"cib_block", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<CibParams<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = CibParams<double>::make(b, 4, 2, 2, 2, 1e-6);
                 Inputs in{uniform(g, {4, 3, 3})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) {
                                       return cib_block(x[0], c->params, ForwardContext{});
                                     }};
               }});
  r.push_back({"transformer_block", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<TransformerBlockParams<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = TransformerBlockParams<double>::make(b, 4, 2, 2, 1e-6);
                 Inputs in{uniform(g, {4, 2, 2})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) {
                                       return transformer_block(x[0], c->params, ForwardContext{});
                                     }};
               }});

  // Fusion.
  r.push_back({"residual_refine", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<RefineParams<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = RefineParams<double>::make(b, 3);
                 Inputs in{uniform(g, {3, 4, 4})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) {
                                       return residual_refine(x[0], c->params);
                                     }};
               }});
  r.push_back({"upconv", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<ConvNormParams<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = ConvNormParams<double>::make(b, 4, 2, 1e-6);
                 Inputs in{uniform(g, {4, 2, 3})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) { return upconv(x[0], c->params); }};
               }});
  r.push_back({"fuse", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<FusionParams<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = FusionParams<double>::make(b, tiny_config());
                 Inputs in{uniform(g, {4, 8, 8}), uniform(g, {8, 4, 4}), uniform(g, {8, 2, 2}),
                           uniform(g, {8, 1, 1})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) {
                                       FeaturePyramid<double> pyr;
                                       for (int i = 0; i < 4; ++i) pyr.levels[i] = x[i];
                                       const auto pair = fuse(pyr, c->params);
                                       return concat(std::vector<TensorD>{pair.local, pair.global}, 0);
                                     }};
               }});

  // Decoder.
  r.push_back({"predict_distribution", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<GaussianHeads<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = GaussianHeads<double>::make(b, 4);
                 Inputs in{uniform(g, {4, 3, 3})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) {
                                       const auto f = predict_distribution(x[0], c->params);
                                       return concat(std::vector<TensorD>{f.mu, f.sigma}, 0);
                                     }};
               }});
  r.push_back(simple("reparameterize",
                     [](Rng& g) {
                       return Inputs{uniform(g, {1, 3, 3}), uniform(g, {1, 3, 3}, 0.1, 2.0)};
                     },
                     [](const Inputs& in) {
                       Rng frozen(7);
                       const auto eps = randn<double>(in[0].shape(), frozen);
                       return reparameterize(GaussianField<double>{in[0], in[1]}, eps);
                     }));
  r.push_back(simple("sample_variance",
                     [](Rng& g) {
                       Inputs s;
                       for (int t = 0; t < 4; ++t) s.push_back(uniform(g, {1, 3, 3}));
                       return s;
                     },
                     [](const Inputs& in) { return sample_variance(in); }));
  r.push_back(simple("minmax_normalize", [](Rng& g) { return Inputs{separated(g, {1, 3, 4})}; },
                     [](const Inputs& in) { return minmax_normalize(in[0]); }));
  r.push_back(simple("aggregate",
                     [](Rng& g) {
                       return Inputs{uniform(g, {3, 2, 2}), uniform(g, {3, 2, 2}),
                                     uniform(g, {1, 2, 2}, 0, 1), uniform(g, {1, 2, 2}, 0, 1)};
                     },
                     [](const Inputs& in) { return aggregate(in[0], in[1], in[2], in[3]); }));
  r.push_back({"segmentation_head", [](Rng& g) {
                 auto c = std::make_shared<ParamCase<Conv2dLayer<double>>>();
                 ParamBuilder<double> b(c->store, g);
                 c->params = Conv2dLayer<double>::make(b, 3, 1, 1, 1, 0);
                 Inputs in{uniform(g, {3, 2, 2})};
                 append_params(in, c->store);
                 return GradInstance{in, [c](const Inputs& x) {
                                       return segmentation_head(x[0], c->params);
                                     }};
               }});

  // Objectives. Targets are fixed per instance and not differentiated.
  const auto with_target = [](std::string name, Shape shape, double lo, double hi,
                              std::function<TensorD(const TensorD&, const TensorD&)> loss) {
    return GradCase{std::move(name), [=](Rng& g) {
                      const auto target = binary(g, shape);
                      return GradInstance{Inputs{uniform(g, shape, lo, hi)},
                                          [=](const Inputs& in) { return loss(in[0], target); }};
                    }};
  };
  r.push_back(with_target("bce_loss", {2, 4, 4}, -4, 4,
                          [](const TensorD& s, const TensorD& y) { return bce_loss(s, y); }));
  r.push_back(with_target("bce_prob_loss", {1, 4, 4}, 0.05, 0.95,
                          [](const TensorD& p, const TensorD& y) { return bce_prob_loss(p, y); }));
  r.push_back(with_target("dice_loss", {2, 4, 4}, -3, 3,
                          [](const TensorD& s, const TensorD& y) { return dice_loss(s, y); }));
  r.push_back(with_target("boundary_loss", {2, 6, 6}, -3, 3,
                          [](const TensorD& s, const TensorD& y) { return boundary_loss(s, y); }));
  r.push_back(with_target("seg_loss", {1, 6, 6}, -3, 3, [](const TensorD& s, const TensorD& y) {
    return seg_loss(s, y, 1.0).total;
  }));
  r.push_back(simple("kl_standard_normal",
                     [](Rng& g) {
                       return Inputs{uniform(g, {1, 3, 3}, -2, 2), uniform(g, {1, 3, 3}, 0.3, 2.5)};
                     },
                     [](const Inputs& in) {
                       return kl_standard_normal(GaussianField<double>{in[0], in[1]});
                     }));
  r.push_back({"uncertainty_loss", [](Rng& g) {
                 const auto target = binary(g, {2, 8, 8});
                 return GradInstance{
                     Inputs{uniform(g, {2, 2, 2}, -2, 2), uniform(g, {2, 2, 2}, 0.3, 2.0)},
                     [target](const Inputs& in) {
                       Rng frozen(11);
                       return uncertainty_loss(GaussianField<double>{in[0], in[1]}, target, 0.2,
                                               frozen)
                           .total;
                     }};
               }});
  r.push_back({"total_loss", [](Rng& g) {
                 const auto target = binary(g, {2, 8, 8});
                 Inputs in{uniform(g, {2, 8, 8}, -3, 3)};
                 for (int i = 0; i < 2; ++i) {
                   in.push_back(uniform(g, {2, 2, 2}, -2, 2));
                   in.push_back(uniform(g, {2, 2, 2}, 0.3, 2.0));
                 }
                 return GradInstance{in, [target](const Inputs& x) {
                                       Rng frozen(13);
                                       return total_loss(x[0], target,
                                                         GaussianField<double>{x[1], x[2]},
                                                         GaussianField<double>{x[3], x[4]},
                                                         LossWeights{}, frozen)
                                           .total;
                                     }};
               }});
  return r;
}

}  // namespace

const std::vector<GradCase>& gradcheck_registry() {
  static const std::vector<GradCase> registry = build_registry();
  return registry;
}

}  // namespace uaglnet
