#include "dsgate/c2f.hpp"

#include "dsgate/init.hpp"

namespace dsgate {

const char* gate_stat_name(GateStat s) {
    switch (s) {
        case GateStat::dso: return "dso";
        case GateStat::mean: return "mean";
        case GateStat::max: return "max";
    }
    return "?";
}

GateStat gate_stat_from_name(const std::string& name) {
    if (name == "dso") return GateStat::dso;
    if (name == "mean") return GateStat::mean;
    if (name == "max") return GateStat::max;
    throw DomainError("unknown gate statistic '" + name + "' (expected dso|mean|max)");
}

void C2fConfig::validate() const {
    if (c_in < 1 || c_out < 1) throw ConfigError("C2fConfig: channel counts must be >= 1");
    if (n < 1) throw ConfigError("C2fConfig: bottleneck count must be >= 1");
    if (hidden() < 1) {
        throw ConfigError("C2fConfig: hidden width floor(c_out*e) must be >= 1, got " +
                          std::to_string(hidden()));
    }
    if (use_msg) {
        if (groups < 2 || groups > n + 2) {
            throw ConfigError("C2fConfig: groups " + std::to_string(groups) + " outside [2," +
                              std::to_string(n + 2) + "]");
        }
        if (!(alpha > 0.0) || !(beta > 0.0)) {
            throw ConfigError("C2fConfig: alpha and beta must be > 0");
        }
    }
}

std::vector<std::pair<std::string, Tensor4*>> BlockParams::named(const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor4*>> out;
    out.emplace_back(prefix + "conv1.weight", &conv1_w);
    out.emplace_back(prefix + "conv1.bias", &conv1_b);
    for (std::size_t k = 0; k < bottlenecks.size(); ++k) {
        const std::string bk = prefix + "b" + std::to_string(k) + ".";
        out.emplace_back(bk + "conv1.weight", &bottlenecks[k].w1);
        out.emplace_back(bk + "conv1.bias", &bottlenecks[k].b1);
        out.emplace_back(bk + "conv2.weight", &bottlenecks[k].w2);
        out.emplace_back(bk + "conv2.bias", &bottlenecks[k].b2);
    }
    out.emplace_back(prefix + "conv2.weight", &conv2_w);
    out.emplace_back(prefix + "conv2.bias", &conv2_b);
    if (dsg) {
        out.emplace_back(prefix + "dsg.weight", &dsg->weight);
        out.emplace_back(prefix + "dsg.bias", &dsg->bias);
    }
    if (msg) {
        out.emplace_back(prefix + "msg.gate.weight", &msg->gate_w);
        out.emplace_back(prefix + "msg.gate.bias", &msg->gate_b);
        out.emplace_back(prefix + "msg.scale.weight", &msg->scale_w);
        out.emplace_back(prefix + "msg.scale.bias", &msg->scale_b);
        out.emplace_back(prefix + "msg.temp.weight", &msg->temp_w);
        out.emplace_back(prefix + "msg.temp.bias", &msg->temp_b);
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor4*>> BlockParams::named(
    const std::string& prefix) const {
    auto mut = const_cast<BlockParams*>(this)->named(prefix);
    std::vector<std::pair<std::string, const Tensor4*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

namespace {

BlockParams make_block(const C2fConfig& cfg, std::mt19937_64* rng) {
    cfg.validate();
    const std::int64_t h = cfg.hidden();
    const std::int64_t c1 = cfg.width();
    const std::int64_t cp = cfg.cat_channels();
    auto tensor = [&](Dims dims, std::int64_t fan_in) {
        return rng ? uniform_fan_in(dims, fan_in, *rng) : Tensor4(dims, 0.0);
    };
    BlockParams p;
    p.conv1_w = tensor({c1, cfg.c_in, 1, 1}, cfg.c_in);
    p.conv1_b = tensor({1, c1, 1, 1}, cfg.c_in);
    for (std::int64_t k = 0; k < cfg.n; ++k) {
        BottleneckParams bk;
        bk.w1 = tensor({h, h, 3, 3}, h * 9);
        bk.b1 = tensor({1, h, 1, 1}, h * 9);
        bk.w2 = tensor({h, h, 3, 3}, h * 9);
        bk.b2 = tensor({1, h, 1, 1}, h * 9);
        p.bottlenecks.push_back(std::move(bk));
    }
    p.conv2_w = tensor({cfg.c_out, cp, 1, 1}, cp);
    p.conv2_b = tensor({1, cfg.c_out, 1, 1}, cp);
    if (cfg.use_dsg) {
        p.dsg = rng ? DsgParams::init(c1, cfg.n, *rng) : DsgParams(c1, cfg.n);
    }
    if (cfg.use_msg) {
        p.msg = rng ? MsgParams::init(c1, cfg.groups, *rng, cfg.alpha, cfg.beta)
                    : MsgParams(c1, cfg.groups, cfg.alpha, cfg.beta);
        p.msg->literal_scale_term = cfg.msg_literal_scale;
    }
    return p;
}

}  // namespace

BlockParams init_block(const C2fConfig& cfg, std::mt19937_64& rng) { return make_block(cfg, &rng); }

BlockParams zero_block(const C2fConfig& cfg) { return make_block(cfg, nullptr); }

BlockVars bind(const BlockParams& p, bool trainable) {
    auto one = [&](const Tensor4& t) { return trainable ? Var::leaf(t) : Var::constant(t); };
    BlockVars v;
    v.conv1_w = one(p.conv1_w);
    v.conv1_b = one(p.conv1_b);
    for (const BottleneckParams& bk : p.bottlenecks) {
        v.bottlenecks.push_back({one(bk.w1), one(bk.b1), one(bk.w2), one(bk.b2)});
    }
    v.conv2_w = one(p.conv2_w);
    v.conv2_b = one(p.conv2_b);
    if (p.dsg) v.dsg = bind(*p.dsg, trainable);
    if (p.msg) v.msg = bind(*p.msg, trainable);
    return v;
}

Var bottleneck_forward(const Var& x, const BottleneckVars& p, bool shortcut, Act act) {
    const Var f = activation(act, conv3x3_same(activation(act, conv3x3_same(x, p.w1, p.b1)),
                                               p.w2, p.b2));
    return shortcut ? add(x, f) : f;
}

namespace {

// Depth-ordered path list: the two split halves, then each bottleneck output
// chained from the second half.
std::vector<Var> build_paths(const Var& t, const BlockVars& p, const C2fConfig& cfg) {
    const std::int64_t h = cfg.hidden();
    std::vector<Var> paths = split_channels(t, {h, h});
    Var cur = paths[1];
    for (const BottleneckVars& bk : p.bottlenecks) {
        cur = bottleneck_forward(cur, bk, cfg.shortcut, cfg.act);
        paths.push_back(cur);
    }
    return paths;
}

Var gate_input(const Var& t, GateStat stat) {
    const Var mu = reduce_mean(t);
    if (stat == GateStat::mean) return mu;
    const Var m = reduce_max(t);
    if (stat == GateStat::max) return m;
    return dso_combine(mu, sub(m, mu));
}

}  // namespace

Var c2f_baseline_forward(const Var& x, const BlockVars& p, const C2fConfig& cfg) {
    cfg.validate();
    const Var t = activation(cfg.act, pointwise_conv(x, p.conv1_w, p.conv1_b));
    const std::vector<Var> paths = build_paths(t, p, cfg);
    const Var x_cat = concat_channels(paths);
    return activation(cfg.act, pointwise_conv(x_cat, p.conv2_w, p.conv2_b));
}

Var c2f_ds_forward(const Var& x, const BlockVars& p, const C2fConfig& cfg, NoiseSource& noise) {
    cfg.validate();
    if (cfg.use_dsg && !p.dsg) throw ConfigError("c2f_ds_forward: use_dsg set but no DSG params");
    if (cfg.use_msg && !p.msg) throw ConfigError("c2f_ds_forward: use_msg set but no MSG params");

    const Var t = activation(cfg.act, pointwise_conv(x, p.conv1_w, p.conv1_b));
    Var y;
    if (cfg.use_dsg || cfg.use_msg) y = gate_input(t, cfg.gate_stat);

    std::vector<Var> paths = build_paths(t, p, cfg);
    if (cfg.use_msg) {
        paths = msg_forward(y, paths, *p.msg, cfg.alpha, cfg.beta, cfg.msg_literal_scale,
                            group_assign(cfg.n, cfg.groups), noise)
                    .paths;
    }
    Var x_cat = concat_channels(paths);
    if (cfg.use_dsg) {
        x_cat = dsg_forward(y, x_cat, *p.dsg).gated;
    }
    return activation(cfg.act, pointwise_conv(x_cat, p.conv2_w, p.conv2_b));
}

BlockParamCount block_param_count(const C2fConfig& cfg) {
    cfg.validate();
    const std::int64_t h = cfg.hidden();
    const std::int64_t c1 = cfg.width();
    const std::int64_t cp = cfg.cat_channels();
    BlockParamCount out;
    out.conv1 = c1 * cfg.c_in + c1;
    out.bottlenecks = cfg.n * 2 * (h * h * 9 + h);
    out.conv2 = cfg.c_out * cp + cfg.c_out;
    const AddedParamCount added = added_param_count(c1, cfg.n, cfg.groups);
    if (cfg.use_dsg) out.dsg = added.dsg;
    if (cfg.use_msg) out.msg = added.msg;
    out.total = out.conv1 + out.bottlenecks + out.conv2 + out.dsg + out.msg;
    return out;
}

void assign_named(std::vector<std::pair<std::string, Tensor4*>> dst, const NamedTensors& src) {
    if (dst.size() != src.size()) {
        throw FormatError("parameter bundle holds " + std::to_string(src.size()) +
                          " tensors, expected " + std::to_string(dst.size()));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].first != src[i].first) {
            throw FormatError("parameter bundle name mismatch at entry " + std::to_string(i) +
                              ": '" + src[i].first + "' vs expected '" + dst[i].first + "'");
        }
        if (!(dst[i].second->dims() == src[i].second.dims())) {
            throw FormatError("parameter '" + dst[i].first + "' has shape " +
                              src[i].second.dims().str() + ", expected " +
                              dst[i].second->dims().str());
        }
        *dst[i].second = src[i].second;
    }
}

}  // namespace dsgate
