#include "dsgate/gating.hpp"

#include <algorithm>

#include "dsgate/init.hpp"

namespace dsgate {

std::int64_t dsg_out_channels(std::int64_t channels, std::int64_t bottlenecks) {
    return (channels / 2) * (2 + bottlenecks);
}

DsgParams::DsgParams(std::int64_t channels_, std::int64_t bottlenecks_)
    : weight({dsg_out_channels(channels_, bottlenecks_), channels_, 1, 1}, 0.0),
      bias({1, dsg_out_channels(channels_, bottlenecks_), 1, 1}, 0.0),
      channels(channels_),
      bottlenecks(bottlenecks_) {
    if (channels < 2 || bottlenecks < 1) {
        throw ConfigError("DsgParams: need channels >= 2 and bottlenecks >= 1");
    }
}

DsgParams::DsgParams(std::int64_t channels_, std::int64_t bottlenecks_, Tensor4 w, Tensor4 b)
    : weight(std::move(w)), bias(std::move(b)), channels(channels_), bottlenecks(bottlenecks_) {
    if (channels < 2 || bottlenecks < 1) {
        throw ConfigError("DsgParams: need channels >= 2 and bottlenecks >= 1");
    }
    const std::int64_t cp = out_channels();
    const Dims want_w{cp, channels, 1, 1};
    const Dims want_b{1, cp, 1, 1};
    if (!(weight.dims() == want_w)) {
        throw ConfigError("DsgParams: weight " + weight.dims().str() + " must be " +
                          want_w.str() + " for C=" + std::to_string(channels) +
                          ", n=" + std::to_string(bottlenecks));
    }
    if (!(bias.dims() == want_b)) {
        throw ConfigError("DsgParams: bias " + bias.dims().str() + " must be " + want_b.str());
    }
}

DsgParams DsgParams::init(std::int64_t channels, std::int64_t bottlenecks, std::mt19937_64& rng) {
    const std::int64_t cp = dsg_out_channels(channels, bottlenecks);
    Tensor4 w = uniform_fan_in({cp, channels, 1, 1}, channels, rng);
    Tensor4 b = uniform_fan_in({1, cp, 1, 1}, channels, rng);
    return DsgParams(channels, bottlenecks, std::move(w), std::move(b));
}

MsgParams::MsgParams(std::int64_t channels_, std::int64_t groups_, double alpha_, double beta_)
    : gate_w({groups_, channels_, 1, 1}, 0.0),
      gate_b({1, groups_, 1, 1}, 0.0),
      scale_w({groups_, channels_, 1, 1}, 0.0),
      scale_b({1, groups_, 1, 1}, 0.0),
      temp_w({groups_, channels_, 1, 1}, 0.0),
      temp_b({1, groups_, 1, 1}, 0.0),
      alpha(alpha_),
      beta(beta_),
      channels(channels_),
      groups(groups_) {
    if (groups < 2) throw ConfigError("MsgParams: groups must be >= 2");
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw ConfigError("MsgParams: alpha and beta must be > 0");
    }
}

MsgParams MsgParams::init(std::int64_t channels, std::int64_t groups, std::mt19937_64& rng,
                          double alpha, double beta) {
    MsgParams p(channels, groups, alpha, beta);
    p.gate_w = uniform_fan_in(p.gate_w.dims(), channels, rng);
    p.gate_b = uniform_fan_in(p.gate_b.dims(), channels, rng);
    p.scale_w = uniform_fan_in(p.scale_w.dims(), channels, rng);
    p.scale_b = uniform_fan_in(p.scale_b.dims(), channels, rng);
    p.temp_w = uniform_fan_in(p.temp_w.dims(), channels, rng);
    p.temp_b = uniform_fan_in(p.temp_b.dims(), channels, rng);
    return p;
}

Tensor4 NoiseSource::draw(Dims dims) {
    Tensor4 t(dims, 0.0);
    if (mode_ == Mode::eval) return t;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal_(rng_);
    return t;
}

namespace {

Var bind_one(const Tensor4& t, bool trainable) {
    return trainable ? Var::leaf(t) : Var::constant(t);
}

}  // namespace

DsgVars bind(const DsgParams& p, bool trainable) {
    return {bind_one(p.weight, trainable), bind_one(p.bias, trainable)};
}

MsgVars bind(const MsgParams& p, bool trainable) {
    return {bind_one(p.gate_w, trainable),  bind_one(p.gate_b, trainable),
            bind_one(p.scale_w, trainable), bind_one(p.scale_b, trainable),
            bind_one(p.temp_w, trainable),  bind_one(p.temp_b, trainable)};
}

DsgResult dsg_forward(const Var& y, const Var& x_cat, const DsgVars& p) {
    const std::int64_t cprime = p.weight.value().dims().b;
    if (x_cat.value().dims().c != cprime) {
        throw ShapeError("dsg_forward: x_cat " + x_cat.value().dims().str() + " must carry C'=" +
                         std::to_string(cprime) + " channels (weight " +
                         p.weight.value().dims().str() + ")");
    }
    const Var gate = activation(Act::sigmoid, pointwise_conv(y, p.weight, p.bias));
    return {scale_channels(x_cat, gate), gate};
}

std::vector<std::vector<int>> group_assign(std::int64_t bottlenecks, std::int64_t groups) {
    if (bottlenecks < 1) throw ConfigError("group_assign: bottlenecks must be >= 1");
    const std::int64_t paths = bottlenecks + 2;
    if (groups < 1 || groups > paths) {
        throw ConfigError("group_assign: groups " + std::to_string(groups) +
                          " outside [1," + std::to_string(paths) + "]");
    }
    const std::int64_t base = paths / groups;
    const std::int64_t extra = paths % groups;
    std::vector<std::vector<int>> out(static_cast<std::size_t>(groups));
    int next = 0;
    for (std::int64_t g = 0; g < groups; ++g) {
        const std::int64_t size = base + (g < extra ? 1 : 0);
        for (std::int64_t i = 0; i < size; ++i) out[static_cast<std::size_t>(g)].push_back(next++);
    }
    return out;
}

MsgResult msg_forward(const Var& y, const std::vector<Var>& paths, const MsgVars& vars,
                      double alpha, double beta, bool literal_scale_term,
                      const std::vector<std::vector<int>>& groups, NoiseSource& noise) {
    const std::int64_t g_count = vars.gate_w.value().dims().b;
    if (static_cast<std::int64_t>(groups.size()) != g_count) {
        throw ConfigError("msg_forward: " + std::to_string(groups.size()) + " groups for G=" +
                          std::to_string(g_count));
    }
    // The group map must cover every path index exactly once.
    std::vector<int> owner(paths.size(), -1);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (int idx : groups[g]) {
            if (idx < 0 || idx >= static_cast<int>(paths.size())) {
                throw ConfigError("msg_forward: group map index " + std::to_string(idx) +
                                  " outside [0," + std::to_string(paths.size()) + ")");
            }
            if (owner[static_cast<std::size_t>(idx)] != -1) {
                throw ConfigError("msg_forward: group map assigns path " + std::to_string(idx) +
                                  " twice");
            }
            owner[static_cast<std::size_t>(idx)] = static_cast<int>(g);
        }
    }
    for (std::size_t i = 0; i < owner.size(); ++i) {
        if (owner[i] == -1) {
            throw ConfigError("msg_forward: group map leaves path " + std::to_string(i) +
                              " unassigned");
        }
    }

    const Var z_gate = pointwise_conv(y, vars.gate_w, vars.gate_b);
    const Var z_scale = pointwise_conv(y, vars.scale_w, vars.scale_b);
    const Var temperature = affine(
        activation(Act::sigmoid, pointwise_conv(y, vars.temp_w, vars.temp_b)), alpha, beta);

    Var operand;
    if (literal_scale_term) {
        operand = add(z_gate, z_scale);
    } else {
        const Var eps = Var::constant(noise.draw(z_scale.value().dims()));
        operand = add(z_gate, mul(activation(Act::softplus, z_scale), eps));
    }
    const Var weights = softmax_channels(operand, temperature);

    const std::vector<std::int64_t> ones(static_cast<std::size_t>(g_count), 1);
    const std::vector<Var> slices = split_channels(weights, ones);

    MsgResult out;
    out.weights = weights;
    out.temperature = temperature;
    out.paths.reserve(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        out.paths.push_back(scale_per_batch(paths[i], slices[static_cast<std::size_t>(owner[i])]));
    }
    return out;
}

MsgResult msg_forward(const Var& y, const std::vector<Var>& paths, const MsgVars& vars,
                      const MsgParams& hyper, const std::vector<std::vector<int>>& groups,
                      NoiseSource& noise) {
    return msg_forward(y, paths, vars, hyper.alpha, hyper.beta, hyper.literal_scale_term, groups,
                       noise);
}

AddedParamCount added_param_count(std::int64_t channels, std::int64_t bottlenecks,
                                  std::int64_t groups) {
    const std::int64_t cp = dsg_out_channels(channels, bottlenecks);
    return {cp * channels + cp, 3 * (groups * channels + groups)};
}

}  // namespace dsgate
