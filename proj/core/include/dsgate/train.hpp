#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsgate/c2f.hpp"
#include "dsgate/dataset.hpp"

namespace dsgate {

// Desk-scale classifier: 3x3 stem, one gated block, global average pool,
// linear head over the four scene classes.
struct ToyConfig {
    C2fConfig block{.c_in = 8, .c_out = 8, .n = 2, .use_dsg = true, .use_msg = true};
    std::int64_t stem_out = 8;
    std::int64_t classes = 4;
    // Route through the ungated control block (requires both gates off).
    bool use_baseline_block = false;

    void validate() const;
    std::string digest() const;  // hash of every field, for provenance
};

struct ToyParams {
    Tensor4 stem_w, stem_b;
    BlockParams block;
    Tensor4 head_w, head_b;

    std::vector<std::pair<std::string, Tensor4*>> named();
    std::vector<std::pair<std::string, const Tensor4*>> named() const;
};

ToyParams init_toy(const ToyConfig& cfg, std::uint64_t seed);
ToyParams zero_toy(const ToyConfig& cfg);
ToyParams toy_from_named(const ToyConfig& cfg, const NamedTensors& src);

struct ToyVars {
    Var stem_w, stem_b;
    BlockVars block;
    Var head_w, head_b;
};
ToyVars bind(const ToyParams& p, bool trainable = true);

// Class logits (B, classes, 1, 1).
Var toy_logits(const Var& images, const ToyVars& p, const ToyConfig& cfg, NoiseSource& noise);

struct EpochRecord {
    int epoch;
    double loss;       // mean cross-entropy over the epoch's training batches
    double train_acc;
    double val_acc;
};

struct TrainMetrics {
    std::vector<EpochRecord> records;  // entry 0 is the untouched initialization
    std::uint64_t seed = 0;
    std::string config_digest;
};

struct TrainOptions {
    int epochs = 20;
    double lr = 0.05;
    int batch = 32;
    double momentum = 0.9;
    std::uint64_t seed = 7;
};

struct TrainResult {
    ToyParams params;
    TrainMetrics metrics;
};

// Momentum SGD on softmax cross-entropy. MSG noise is live during training
// batches and disabled for every evaluation pass. Aborts with EvalError if
// the loss leaves the finite range.
TrainResult train(const ToyConfig& cfg, const std::vector<SceneSample>& train_data,
                  const std::vector<SceneSample>& val_data, const TrainOptions& opt);

struct EvalResult {
    double accuracy = 0.0;
    // confusion[true][pred]; rows sum to the per-class sample counts
    std::vector<std::vector<std::int64_t>> confusion;
};
EvalResult evaluate(const ToyConfig& cfg, const ToyParams& params,
                    const std::vector<SceneSample>& data, int batch = 64);

struct AblateRow {
    std::string value;
    double val_acc;
};

// One training run per value on shared data and seed; axis is one of
// "groups", "alpha", "operator".
std::vector<AblateRow> ablate(const std::string& axis, const std::vector<std::string>& values,
                              const ToyConfig& base, const std::vector<SceneSample>& train_data,
                              const std::vector<SceneSample>& val_data, const TrainOptions& opt);

// Deterministic seed derivation for the independent RNG streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dsgate
