#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dsgate/autodiff.hpp"

namespace dsgate {

// Gated channel count at the concatenation point: floor(C/2) * (2 + n).
std::int64_t dsg_out_channels(std::int64_t channels, std::int64_t bottlenecks);

// Channel gate parameters: a 1x1 projection C -> C' and its bias.
struct DsgParams {
    Tensor4 weight;  // (C', C, 1, 1)
    Tensor4 bias;    // (1, C', 1, 1)
    std::int64_t channels;
    std::int64_t bottlenecks;

    // Zero-initialized; gate sits at 0.5 everywhere.
    DsgParams(std::int64_t channels, std::int64_t bottlenecks);
    // Takes ownership of externally built tensors; shapes must match
    // (C', C, 1, 1) / (1, C', 1, 1) or construction fails.
    DsgParams(std::int64_t channels, std::int64_t bottlenecks, Tensor4 w, Tensor4 b);

    std::int64_t out_channels() const { return dsg_out_channels(channels, bottlenecks); }
    static DsgParams init(std::int64_t channels, std::int64_t bottlenecks, std::mt19937_64& rng);
};

// Depth-group gate parameters: three parallel G-way 1x1 projections (gate
// logits, noise scale, temperature) plus the fixed temperature bounds.
struct MsgParams {
    Tensor4 gate_w, gate_b;    // (G, C, 1, 1) / (1, G, 1, 1)
    Tensor4 scale_w, scale_b;
    Tensor4 temp_w, temp_b;
    double alpha = 1.9;
    double beta = 0.1;
    std::int64_t channels;
    std::int64_t groups;
    // When set, the softmax operand adds the raw scale logits instead of the
    // sampled noise (the formula as printed; kept for fidelity testing).
    bool literal_scale_term = false;

    MsgParams(std::int64_t channels, std::int64_t groups, double alpha = 1.9, double beta = 0.1);
    static MsgParams init(std::int64_t channels, std::int64_t groups, std::mt19937_64& rng,
                          double alpha = 1.9, double beta = 0.1);
};

// Seedable standard-normal source. Identical seed and draw sequence give
// identical values; eval mode yields zeros and consumes no RNG state.
class NoiseSource {
public:
    enum class Mode { train, eval };

    explicit NoiseSource(std::uint64_t seed, Mode mode = Mode::train)
        : rng_(seed), mode_(mode) {}

    Tensor4 draw(Dims dims);
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
    Mode mode_;
};

// Parameters bound into graph variables (leaves when trainable).
struct DsgVars {
    Var weight, bias;
};
struct MsgVars {
    Var gate_w, gate_b, scale_w, scale_b, temp_w, temp_b;
};
DsgVars bind(const DsgParams& p, bool trainable = true);
MsgVars bind(const MsgParams& p, bool trainable = true);

struct DsgResult {
    Var gated;  // gate applied to the concatenated features
    Var gate;   // sigmoid weights in (0,1), (B,C',1,1)
};
DsgResult dsg_forward(const Var& y, const Var& x_cat, const DsgVars& p);

struct MsgResult {
    std::vector<Var> paths;  // each input path scaled by its group weight
    Var weights;             // softmax output on the G-simplex, (B,G,1,1)
    Var temperature;         // (B,G,1,1), strictly inside (beta, alpha+beta)
};
// Hyperparameters read from the matching MsgParams. literal_scale_term adds
// the raw scale logits to the gate logits instead of the sampled noise.
MsgResult msg_forward(const Var& y, const std::vector<Var>& paths, const MsgVars& vars,
                      double alpha, double beta, bool literal_scale_term,
                      const std::vector<std::vector<int>>& groups, NoiseSource& noise);
MsgResult msg_forward(const Var& y, const std::vector<Var>& paths, const MsgVars& vars,
                      const MsgParams& hyper, const std::vector<std::vector<int>>& groups,
                      NoiseSource& noise);

// Contiguous partition of the depth-ordered path indices 0..n+1 into G
// groups whose sizes differ by at most one, larger groups first.
std::vector<std::vector<int>> group_assign(std::int64_t bottlenecks, std::int64_t groups);

struct AddedParamCount {
    std::int64_t dsg;
    std::int64_t msg;
};
AddedParamCount added_param_count(std::int64_t channels, std::int64_t bottlenecks,
                                  std::int64_t groups);

}  // namespace dsgate
