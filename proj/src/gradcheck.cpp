#include "stpose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "stpose/models.hpp"
#include "stpose/rng.hpp"
#include "stpose/tensor.hpp"

namespace stpose {

namespace {

struct EvalOut {
  double loss = 0;
  std::uint64_t pool_sig = 0;
};

// A check owns its input layout and a builder that turns concrete input
// vectors into a scalar loss; with grads_out set it also returns dloss/dinput
// per coordinate from one reverse pass.
struct CheckSpec {
  std::string name;
  double tol = 0;
  std::vector<Shape> input_shapes;
  std::function<void(std::vector<std::vector<double>>&, Rng&)> init;  // optional
  std::function<EvalOut(const std::vector<std::vector<double>>&,
                        std::vector<std::vector<double>>*)>
      build;
};

void default_init(std::vector<std::vector<double>>& inputs, Rng& rng) {
  for (auto& v : inputs)
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

CheckResult run_spec(const CheckSpec& spec, const GradcheckOptions& opt, std::uint64_t seed) {
  CheckResult res;
  res.name = spec.name;

  Rng rng = Rng::substream(seed, Rng::tag(("gradcheck." + spec.name).c_str()));
  std::vector<std::vector<double>> inputs(spec.input_shapes.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].resize(numel(spec.input_shapes[i]));
  if (spec.init) spec.init(inputs, rng);
  else default_init(inputs, rng);

  std::vector<std::vector<double>> grads;
  const EvalOut base = spec.build(inputs, &grads);
  if (!std::isfinite(base.loss)) {
    res.pass = false;
    res.detail = "base loss is not finite";
    return res;
  }
  if (grads.size() != inputs.size()) throw ContractError(spec.name + ": builder grad count mismatch");
  if (spec.name == opt.perturb_check)
    for (auto& g : grads)
      for (double& v : g) v *= opt.perturb_factor;

  std::size_t total = 0;
  for (const auto& v : inputs) total += v.size();
  if (total == 0) throw ContractError(spec.name + ": no inputs to perturb");

  const long want = std::min<long>(opt.max_coords, static_cast<long>(total));
  for (long c = 0; c < want; ++c) {
    // global coordinate sample; collisions are harmless repeats
    std::size_t flat =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
    std::size_t which = 0;
    while (flat >= inputs[which].size()) flat -= inputs[which++].size();

    std::vector<std::vector<double>> work = inputs;
    work[which][flat] = inputs[which][flat] + opt.fd_step;
    const EvalOut plus = spec.build(work, nullptr);
    work[which][flat] = inputs[which][flat] - opt.fd_step;
    const EvalOut minus = spec.build(work, nullptr);

    if (plus.pool_sig != base.pool_sig || minus.pool_sig != base.pool_sig) {
      ++res.skipped;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2 * opt.fd_step);
    const double analytic = grads[which][flat];
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    ++res.checked;
    res.worst_rel_err = std::max(res.worst_rel_err, rel);
    if (rel > spec.tol && res.pass) {
      res.pass = false;
      res.detail = "input " + std::to_string(which) + " coord " + std::to_string(flat) +
                   ": analytic " + std::to_string(analytic) + " vs numeric " +
                   std::to_string(numeric) + " (rel " + std::to_string(rel) + ")";
    }
  }
  return res;
}

std::vector<CheckResult> run_specs(const std::vector<CheckSpec>& specs,
                                   const GradcheckOptions& opt) {
  std::vector<CheckResult> out;
  for (const CheckSpec& spec : specs) {
    CheckResult agg;
    agg.name = spec.name;
    for (int s = 0; s < opt.seeds; ++s) {
      const CheckResult r = run_spec(spec, opt, static_cast<std::uint64_t>(s));
      agg.checked += r.checked;
      agg.skipped += r.skipped;
      agg.worst_rel_err = std::max(agg.worst_rel_err, r.worst_rel_err);
      if (!r.pass && agg.pass) {
        agg.pass = false;
        agg.detail = "seed " + std::to_string(s) + ": " + r.detail;
      }
    }
    if (agg.checked == 0 && agg.pass) {
      agg.pass = false;
      agg.detail = "every sampled coordinate was skipped";
    }
    out.push_back(std::move(agg));
  }
  return out;
}

// Scalarize a non-scalar result against a fixed random target so every output
// coordinate influences the loss.
Tensor<double> against_target(Tape<double>& tape, const Tensor<double>& y,
                              const std::vector<double>& target) {
  if (y.numel() != target.size()) throw ContractError("gradcheck: target size mismatch");
  return l2_loss(y, tape.leaf(y.shape(), target));
}

std::vector<double> random_target(std::size_t n, std::uint64_t salt) {
  Rng rng = Rng::substream(salt, Rng::tag("gradcheck.target"));
  std::vector<double> t(n);
  for (double& v : t) v = rng.uniform(-1.0, 1.0);
  return t;
}

std::vector<std::vector<double>> collect_grads(const std::vector<Tensor<double>>& leaves) {
  std::vector<std::vector<double>> g;
  for (const Tensor<double>& t : leaves) g.emplace_back(t.grad().begin(), t.grad().end());
  return g;
}

}  // namespace

std::vector<CheckResult> check_ops(const GradcheckOptions& opt) {
  std::vector<CheckSpec> specs;

  auto add_spec = [&](std::string name, std::vector<Shape> shapes,
                      std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)>
                          graph) {
    CheckSpec s;
    s.name = std::move(name);
    s.tol = opt.op_tol;
    s.input_shapes = shapes;
    s.build = [graph = std::move(graph), shapes = std::move(shapes)](
                  const std::vector<std::vector<double>>& inputs,
                  std::vector<std::vector<double>>* grads_out) {
      Tape<double> tape;
      std::vector<Tensor<double>> leaves;
      for (std::size_t i = 0; i < inputs.size(); ++i)
        leaves.push_back(tape.leaf(shapes[i], inputs[i], true));
      Tensor<double> loss = graph(tape, leaves);
      EvalOut out{loss.value()[0], tape.pool_signature()};
      if (grads_out) {
        tape.backward(loss);
        *grads_out = collect_grads(leaves);
      }
      return out;
    };
    specs.push_back(std::move(s));
  };

  // conv2d: 2x7x7 input, 3 filters of 2x3x3, stride 2 -> 3x3x3
  add_spec("op.conv2d", {{2, 7, 7}, {3, 2, 3, 3}, {3}},
           [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
             Tensor<double> y = conv2d(in[0], in[1], in[2], 2);
             return against_target(tape, y, random_target(3 * 3 * 3, 11));
           });

  // maxpool2d: 2x6x6, k=2, s=2; init separates window ties so the 1e-5 step
  // cannot flip an argmax
  {
    CheckSpec s;
    s.name = "op.maxpool2d";
    s.tol = opt.op_tol;
    s.input_shapes = {{2, 6, 6}};
    s.init = [](std::vector<std::vector<double>>& inputs, Rng& rng) {
      default_init(inputs, rng);
      for (int ch = 0; ch < 2; ++ch)
        for (int wy = 0; wy < 3; ++wy)
          for (int wx = 0; wx < 3; ++wx) {
            double* v = inputs[0].data() + ch * 36;
            const int idx[4] = {(2 * wy) * 6 + 2 * wx, (2 * wy) * 6 + 2 * wx + 1,
                                (2 * wy + 1) * 6 + 2 * wx, (2 * wy + 1) * 6 + 2 * wx + 1};
            int best = 0;
            for (int i = 1; i < 4; ++i)
              if (v[idx[i]] > v[idx[best]]) best = i;
            double second = -1e30;
            for (int i = 0; i < 4; ++i)
              if (i != best) second = std::max(second, v[idx[i]]);
            if (v[idx[best]] - second < 1e-3) v[idx[best]] = second + 2e-3;
          }
    };
    s.build = [](const std::vector<std::vector<double>>& inputs,
                 std::vector<std::vector<double>>* grads_out) {
      Tape<double> tape;
      std::vector<Tensor<double>> leaves{tape.leaf({2, 6, 6}, inputs[0], true)};
      Tensor<double> y = maxpool2d(leaves[0], 2, 2);
      Tensor<double> loss = against_target(tape, y, random_target(2 * 3 * 3, 12));
      EvalOut out{loss.value()[0], tape.pool_signature()};
      if (grads_out) {
        tape.backward(loss);
        *grads_out = collect_grads(leaves);
      }
      return out;
    };
    specs.push_back(std::move(s));
  }

  // fully_connected with implicit flatten of a 2x3x4 input
  add_spec("op.fully_connected", {{2, 3, 4}, {5, 24}, {5}},
           [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
             return against_target(tape, fully_connected(in[0], in[1], in[2]),
                                   random_target(5, 13));
           });

  // lstm_cell: phi 6, state 4, all twelve gate parameters
  add_spec("op.lstm_cell",
           {{6}, {4}, {4},
            {4, 4}, {4, 6}, {4},   // i
            {4, 4}, {4, 6}, {4},   // f
            {4, 4}, {4, 6}, {4},   // o
            {4, 4}, {4, 6}, {4}},  // c
           [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
             LstmGateParams<double> g;
             g.whi = in[3]; g.wxi = in[4]; g.bi = in[5];
             g.whf = in[6]; g.wxf = in[7]; g.bf = in[8];
             g.who = in[9]; g.wxo = in[10]; g.bo = in[11];
             g.whc = in[12]; g.wxc = in[13]; g.bc = in[14];
             LstmState<double> prev{in[1], in[2]};
             LstmState<double> next = lstm_cell(in[0], prev, g);
             return add(against_target(tape, next.h, random_target(4, 14)),
                        against_target(tape, next.c, random_target(4, 15)));
           });

  // dropout in train mode with a mask pinned by a fixed seed
  {
    CheckSpec s;
    s.name = "op.dropout";
    s.tol = opt.op_tol;
    s.input_shapes = {{24}};
    s.build = [](const std::vector<std::vector<double>>& inputs,
                 std::vector<std::vector<double>>* grads_out) {
      Tape<double> tape;
      std::vector<Tensor<double>> leaves{tape.leaf({24}, inputs[0], true)};
      Rng mask_rng = Rng::substream(99, Rng::tag("gradcheck.mask"));
      Tensor<double> y = dropout(leaves[0], 0.3, RunMode::train, mask_rng);
      Tensor<double> loss = against_target(tape, y, random_target(24, 16));
      EvalOut out{loss.value()[0], tape.pool_signature()};
      if (grads_out) {
        tape.backward(loss);
        *grads_out = collect_grads(leaves);
      }
      return out;
    };
    specs.push_back(std::move(s));
  }

  add_spec("op.elementwise_mean", {{7}, {7}},
           [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
             return against_target(tape, elementwise_mean(in[0], in[1]), random_target(7, 17));
           });
  add_spec("op.concat", {{3}, {5}}, [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    return against_target(tape, concat(in[0], in[1]), random_target(8, 18));
  });
  add_spec("op.add", {{7}, {7}}, [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    return against_target(tape, add(in[0], in[1]), random_target(7, 19));
  });
  add_spec("op.mul", {{7}, {7}}, [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    return against_target(tape, mul(in[0], in[1]), random_target(7, 20));
  });
  add_spec("op.affine", {{9}}, [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    return against_target(tape, affine(in[0], -1.0, 1.0), random_target(9, 21));
  });
  add_spec("op.tanh", {{9}}, [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    return against_target(tape, tanh(in[0]), random_target(9, 22));
  });
  add_spec("op.sigmoid", {{9}}, [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    return against_target(tape, sigmoid(in[0]), random_target(9, 23));
  });
  add_spec("op.slice", {{10}}, [](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    return against_target(tape, slice(in[0], 3, 4), random_target(4, 24));
  });
  add_spec("op.l2_loss", {{6}, {6}}, [](Tape<double>&, std::vector<Tensor<double>>& in) {
    return l2_loss(in[0], in[1]);
  });

  return run_specs(specs, opt);
}

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.size = 16;
  a.joints = 2;
  a.layers = 4;
  a.seq_len = 2;
  a.conv1_out = 4;
  a.conv1_k = 5;
  a.conv2_out = 8;
  a.conv2_k = 3;
  a.pool = 2;
  a.fc_dim = 32;
  a.lstm_dim = 16;
  a.fusion_hidden = 8;
  a.dropout = 0.3;
  a.validate();
  return a;
}

std::vector<float> random_frame(const ArchConfig& a, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(a.size) * a.size);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

SlicedVolume random_volume(const ArchConfig& a, Rng& rng) {
  SlicedVolume vol;
  vol.size = a.size;
  vol.layers = a.layers;
  vol.v.resize(static_cast<std::size_t>(a.layers) * a.size * a.size);
  for (auto& b : vol.v) b = rng.uniform() < 0.2 ? 1 : 0;
  return vol;
}

template <class Net>
std::vector<Shape> param_shapes(Net& net) {
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i < net.params().size(); ++i)
    shapes.push_back({net.params().at(i).numel()});
  return shapes;
}

template <class Net>
void load_params(Net& net, const std::vector<std::vector<double>>& inputs) {
  if (net.params().size() != inputs.size()) throw ContractError("gradcheck: param count drifted");
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    Param<double>& p = net.params().at(i);
    if (p.numel() != inputs[i].size()) throw ContractError("gradcheck: param size drifted");
    p.value = inputs[i];
  }
  net.params().zero_grad();
}

template <class Net>
std::vector<std::vector<double>> param_grads(Net& net) {
  std::vector<std::vector<double>> g;
  for (std::size_t i = 0; i < net.params().size(); ++i) g.push_back(net.params().at(i).grad);
  return g;
}

}  // namespace

std::vector<CheckResult> check_networks(const GradcheckOptions& opt) {
  const ArchConfig arch = tiny_arch();
  std::vector<CheckSpec> specs;

  // Fixed per-suite data; only the parameters are perturbed.
  Rng data_rng = Rng::substream(7, Rng::tag("gradcheck.data"));
  const std::vector<float> frame_a = random_frame(arch, data_rng);
  const std::vector<float> frame_b = random_frame(arch, data_rng);
  const SlicedVolume volume = random_volume(arch, data_rng);
  const std::size_t dim = static_cast<std::size_t>(arch.out_dim());

  {
    CheckSpec s;
    s.name = "net.spatial";
    s.tol = opt.net_tol;
    SpatialNet<double> probe(arch, 1);
    s.input_shapes = param_shapes(probe);
    s.build = [arch, frame_a, volume, dim](const std::vector<std::vector<double>>& inputs,
                                           std::vector<std::vector<double>>* grads_out) {
      SpatialNet<double> net(arch, 1);
      load_params(net, inputs);
      Tape<double> tape;
      Rng drop = Rng::substream(42, Rng::tag("gradcheck.drop"));
      auto fw = net.forward(tape, frame_a, volume, RunMode::train, &drop);
      Tensor<double> loss = add(add(against_target(tape, fw.main, random_target(dim, 31)),
                                    against_target(tape, fw.aux_depth, random_target(dim, 32))),
                                against_target(tape, fw.aux_volume, random_target(dim, 33)));
      EvalOut out{loss.value()[0], tape.pool_signature()};
      if (grads_out) {
        tape.backward(loss);
        *grads_out = param_grads(net);
      }
      return out;
    };
    specs.push_back(std::move(s));
  }

  {
    CheckSpec s;
    s.name = "net.temporal";
    s.tol = opt.net_tol;
    TemporalNet<double> probe(arch, 1);
    s.input_shapes = param_shapes(probe);
    s.build = [arch, frame_a, frame_b, dim](const std::vector<std::vector<double>>& inputs,
                                            std::vector<std::vector<double>>* grads_out) {
      TemporalNet<double> net(arch, 1);
      load_params(net, inputs);
      Tape<double> tape;
      auto fw = net.forward(tape, {&frame_a, &frame_b});
      Tensor<double> loss = affine(add(against_target(tape, fw.preds[0], random_target(dim, 34)),
                                       against_target(tape, fw.preds[1], random_target(dim, 35))),
                                   0.5, 0.0);
      EvalOut out{loss.value()[0], tape.pool_signature()};
      if (grads_out) {
        tape.backward(loss);
        *grads_out = param_grads(net);
      }
      return out;
    };
    specs.push_back(std::move(s));
  }

  {
    CheckSpec s;
    s.name = "net.fusion";
    s.tol = opt.net_tol;
    FusionNet<double> probe(arch, 1);
    s.input_shapes = param_shapes(probe);
    s.build = [arch, dim](const std::vector<std::vector<double>>& inputs,
                          std::vector<std::vector<double>>* grads_out) {
      FusionNet<double> net(arch, 1);
      load_params(net, inputs);
      Tape<double> tape;
      Tensor<double> jt = tape.leaf({dim}, random_target(dim, 36));
      Tensor<double> js = tape.leaf({dim}, random_target(dim, 37));
      auto fw = net.forward(tape, jt, js);
      Tensor<double> loss = against_target(tape, fw.out, random_target(dim, 38));
      EvalOut out{loss.value()[0], tape.pool_signature()};
      if (grads_out) {
        tape.backward(loss);
        *grads_out = param_grads(net);
      }
      return out;
    };
    specs.push_back(std::move(s));
  }

  for (auto kind : {BranchNet<double>::Kind::depth, BranchNet<double>::Kind::volume}) {
    CheckSpec s;
    s.name = kind == BranchNet<double>::Kind::depth ? "net.branch_depth" : "net.branch_volume";
    s.tol = opt.net_tol;
    BranchNet<double> probe(arch, kind, 1);
    s.input_shapes = param_shapes(probe);
    s.build = [arch, kind, frame_a, volume, dim](const std::vector<std::vector<double>>& inputs,
                                                 std::vector<std::vector<double>>* grads_out) {
      BranchNet<double> net(arch, kind, 1);
      load_params(net, inputs);
      Tape<double> tape;
      Rng drop = Rng::substream(43, Rng::tag("gradcheck.drop"));
      auto fw = kind == BranchNet<double>::Kind::depth
                    ? net.forward(tape, frame_a, RunMode::train, &drop)
                    : net.forward(tape, volume, RunMode::train, &drop);
      Tensor<double> loss = against_target(tape, fw.pred, random_target(dim, 39));
      EvalOut out{loss.value()[0], tape.pool_signature()};
      if (grads_out) {
        tape.backward(loss);
        *grads_out = param_grads(net);
      }
      return out;
    };
    specs.push_back(std::move(s));
  }

  return run_specs(specs, opt);
}

std::vector<CheckResult> check_all(const GradcheckOptions& opt) {
  std::vector<CheckResult> all = check_ops(opt);
  std::vector<CheckResult> nets = check_networks(opt);
  all.insert(all.end(), nets.begin(), nets.end());
  return all;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

}  // namespace stpose
