#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsgate/gating.hpp"
#include "dsgate/tensor_io.hpp"

namespace dsgate {

// Which channel statistic drives the gates (the ablation axis; the synergy
// response is the default).
enum class GateStat { dso, mean, max };

const char* gate_stat_name(GateStat s);
GateStat gate_stat_from_name(const std::string& name);

struct C2fConfig {
    std::int64_t c_in = 8;
    std::int64_t c_out = 8;
    std::int64_t n = 2;        // bottleneck count
    double expansion = 0.5;    // hidden h = floor(c_out * expansion)
    bool use_dsg = false;
    bool use_msg = false;
    std::int64_t groups = 3;
    bool shortcut = true;
    Act act = Act::silu;
    GateStat gate_stat = GateStat::dso;
    double alpha = 1.9;
    double beta = 0.1;
    bool msg_literal_scale = false;

    std::int64_t hidden() const { return static_cast<std::int64_t>(c_out * expansion); }
    std::int64_t width() const { return 2 * hidden(); }                 // C, post-conv1
    std::int64_t cat_channels() const { return hidden() * (2 + n); }    // C'
    void validate() const;
};

struct BottleneckParams {
    Tensor4 w1, b1, w2, b2;  // two 3x3 same-padding convolutions, h -> h
};

struct BlockParams {
    Tensor4 conv1_w, conv1_b;  // 1x1, c_in -> C
    std::vector<BottleneckParams> bottlenecks;
    Tensor4 conv2_w, conv2_b;  // 1x1, C' -> c_out
    std::optional<DsgParams> dsg;
    std::optional<MsgParams> msg;

    // Parameter views in the fixed manifest order; drives init, counting,
    // serialization and optimizer updates alike.
    std::vector<std::pair<std::string, Tensor4*>> named(const std::string& prefix = "");
    std::vector<std::pair<std::string, const Tensor4*>> named(const std::string& prefix = "") const;
};

BlockParams init_block(const C2fConfig& cfg, std::mt19937_64& rng);
BlockParams zero_block(const C2fConfig& cfg);

struct BottleneckVars {
    Var w1, b1, w2, b2;
};
struct BlockVars {
    Var conv1_w, conv1_b;
    std::vector<BottleneckVars> bottlenecks;
    Var conv2_w, conv2_b;
    std::optional<DsgVars> dsg;
    std::optional<MsgVars> msg;
};
BlockVars bind(const BlockParams& p, bool trainable = true);

Var bottleneck_forward(const Var& x, const BottleneckVars& p, bool shortcut, Act act);

// Plain split-transform-concatenate block, no gating; the control arm.
Var c2f_baseline_forward(const Var& x, const BlockVars& p, const C2fConfig& cfg);

// Gated block: DSO statistics of the post-conv1 map feed both gates, MSG
// scales the depth paths before concatenation, DSG gates the concatenated
// result. With both flags off this reproduces the baseline bitwise.
Var c2f_ds_forward(const Var& x, const BlockVars& p, const C2fConfig& cfg, NoiseSource& noise);

struct BlockParamCount {
    std::int64_t conv1 = 0;
    std::int64_t bottlenecks = 0;
    std::int64_t conv2 = 0;
    std::int64_t dsg = 0;
    std::int64_t msg = 0;
    std::int64_t total = 0;
};
BlockParamCount block_param_count(const C2fConfig& cfg);

// Copies tensors from a loaded bundle into zero-initialized params; names and
// shapes must match the fixed order exactly.
void assign_named(std::vector<std::pair<std::string, Tensor4*>> dst, const NamedTensors& src);

}  // namespace dsgate
