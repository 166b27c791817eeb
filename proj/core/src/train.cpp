#include "dsgate/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dsgate/init.hpp"

namespace dsgate {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 over the xor of seed and stream tag
    std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL);
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void ToyConfig::validate() const {
    block.validate();
    if (stem_out != block.c_in) {
        throw ConfigError("ToyConfig: stem output " + std::to_string(stem_out) +
                          " must match block input " + std::to_string(block.c_in));
    }
    if (classes < 2) throw ConfigError("ToyConfig: need at least two classes");
    if (use_baseline_block && (block.use_dsg || block.use_msg)) {
        throw ConfigError("ToyConfig: the baseline block cannot carry gates");
    }
}

std::string ToyConfig::digest() const {
    std::ostringstream os;
    os << block.c_in << "|" << block.c_out << "|" << block.n << "|" << block.expansion << "|"
       << block.use_dsg << "|" << block.use_msg << "|" << block.groups << "|" << block.shortcut
       << "|" << act_name(block.act) << "|" << gate_stat_name(block.gate_stat) << "|"
       << block.alpha << "|" << block.beta << "|" << block.msg_literal_scale << "|" << stem_out
       << "|" << classes << "|" << use_baseline_block;
    const std::string s = os.str();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::pair<std::string, Tensor4*>> ToyParams::named() {
    std::vector<std::pair<std::string, Tensor4*>> out;
    out.emplace_back("stem.weight", &stem_w);
    out.emplace_back("stem.bias", &stem_b);
    for (auto& entry : block.named("block.")) out.push_back(entry);
    out.emplace_back("head.weight", &head_w);
    out.emplace_back("head.bias", &head_b);
    return out;
}

std::vector<std::pair<std::string, const Tensor4*>> ToyParams::named() const {
    auto mut = const_cast<ToyParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor4*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

namespace {

ToyParams make_toy(const ToyConfig& cfg, std::mt19937_64* rng) {
    cfg.validate();
    ToyParams p;
    if (rng) {
        p.stem_w = uniform_fan_in({cfg.stem_out, 1, 3, 3}, 9, *rng);
        p.stem_b = uniform_fan_in({1, cfg.stem_out, 1, 1}, 9, *rng);
        p.block = init_block(cfg.block, *rng);
        p.head_w = uniform_fan_in({cfg.classes, cfg.block.c_out, 1, 1}, cfg.block.c_out, *rng);
        p.head_b = uniform_fan_in({1, cfg.classes, 1, 1}, cfg.block.c_out, *rng);
    } else {
        p.stem_w = Tensor4({cfg.stem_out, 1, 3, 3}, 0.0);
        p.stem_b = Tensor4({1, cfg.stem_out, 1, 1}, 0.0);
        p.block = zero_block(cfg.block);
        p.head_w = Tensor4({cfg.classes, cfg.block.c_out, 1, 1}, 0.0);
        p.head_b = Tensor4({1, cfg.classes, 1, 1}, 0.0);
    }
    return p;
}

}  // namespace

ToyParams init_toy(const ToyConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(mix_seed(seed, 1));
    return make_toy(cfg, &rng);
}

ToyParams zero_toy(const ToyConfig& cfg) { return make_toy(cfg, nullptr); }

ToyParams toy_from_named(const ToyConfig& cfg, const NamedTensors& src) {
    ToyParams p = zero_toy(cfg);
    assign_named(p.named(), src);
    return p;
}

ToyVars bind(const ToyParams& p, bool trainable) {
    auto one = [&](const Tensor4& t) { return trainable ? Var::leaf(t) : Var::constant(t); };
    return {one(p.stem_w), one(p.stem_b), bind(p.block, trainable), one(p.head_w), one(p.head_b)};
}

Var toy_logits(const Var& images, const ToyVars& p, const ToyConfig& cfg, NoiseSource& noise) {
    const Var stem = activation(cfg.block.act, conv3x3_same(images, p.stem_w, p.stem_b));
    const Var feat = cfg.use_baseline_block ? c2f_baseline_forward(stem, p.block, cfg.block)
                                            : c2f_ds_forward(stem, p.block, cfg.block, noise);
    return pointwise_conv(reduce_mean(feat), p.head_w, p.head_b);
}

namespace {

Tensor4 stack_images(const std::vector<SceneSample>& data, const std::vector<int>& idx,
                     std::size_t from, std::size_t to) {
    const Dims one = data[0].image.dims();
    Tensor4 out({static_cast<std::int64_t>(to - from), one.c, one.h, one.w}, 0.0);
    const std::size_t stride = one.count();
    for (std::size_t i = from; i < to; ++i) {
        const auto& src = data[static_cast<std::size_t>(idx[i])].image.data();
        std::copy(src.begin(), src.end(), out.data().begin() + (i - from) * stride);
    }
    return out;
}

std::vector<int> stack_labels(const std::vector<SceneSample>& data, const std::vector<int>& idx,
                              std::size_t from, std::size_t to) {
    std::vector<int> out;
    out.reserve(to - from);
    for (std::size_t i = from; i < to; ++i) {
        out.push_back(static_cast<int>(data[static_cast<std::size_t>(idx[i])].label));
    }
    return out;
}

int argmax_class(const Tensor4& logits, std::int64_t b) {
    int best = 0;
    double best_v = logits.at(b, 0, 0, 0);
    for (std::int64_t k = 1; k < logits.dims().c; ++k) {
        if (logits.at(b, k, 0, 0) > best_v) {  // ties keep the lowest class
            best_v = logits.at(b, k, 0, 0);
            best = static_cast<int>(k);
        }
    }
    return best;
}

// Leaves in the same fixed order as ToyParams::named().
std::vector<Var> ordered_leaves(const ToyVars& v) {
    std::vector<Var> out{v.stem_w, v.stem_b, v.block.conv1_w, v.block.conv1_b};
    for (const auto& bk : v.block.bottlenecks) {
        out.insert(out.end(), {bk.w1, bk.b1, bk.w2, bk.b2});
    }
    out.insert(out.end(), {v.block.conv2_w, v.block.conv2_b});
    if (v.block.dsg) out.insert(out.end(), {v.block.dsg->weight, v.block.dsg->bias});
    if (v.block.msg) {
        out.insert(out.end(), {v.block.msg->gate_w, v.block.msg->gate_b, v.block.msg->scale_w,
                               v.block.msg->scale_b, v.block.msg->temp_w, v.block.msg->temp_b});
    }
    out.insert(out.end(), {v.head_w, v.head_b});
    return out;
}

struct PassResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Full forward over `data` without updates; eval-mode noise.
PassResult eval_pass(const ToyConfig& cfg, const ToyParams& params,
                     const std::vector<SceneSample>& data, int batch) {
    NoiseSource noise(0, NoiseSource::Mode::eval);
    const ToyVars vars = bind(params, /*trainable=*/false);
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::size_t from = 0; from < data.size(); from += static_cast<std::size_t>(batch)) {
        const std::size_t to = std::min(data.size(), from + static_cast<std::size_t>(batch));
        const Var images = Var::constant(stack_images(data, idx, from, to));
        const std::vector<int> labels = stack_labels(data, idx, from, to);
        const Var logits = toy_logits(images, vars, cfg, noise);
        const Var loss = cross_entropy_mean(logits, labels);
        loss_sum += loss.value()[0] * static_cast<double>(to - from);
        for (std::size_t b = 0; b < labels.size(); ++b) {
            if (argmax_class(logits.value(), static_cast<std::int64_t>(b)) == labels[b]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(data.size()),
            static_cast<double>(correct) / static_cast<double>(data.size())};
}

}  // namespace

TrainResult train(const ToyConfig& cfg, const std::vector<SceneSample>& train_data,
                  const std::vector<SceneSample>& val_data, const TrainOptions& opt) {
    cfg.validate();
    if (train_data.empty()) throw ConfigError("train: empty training set");
    if (opt.epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (!(opt.lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (opt.batch < 1) throw ConfigError("train: batch must be >= 1");

    TrainResult result{init_toy(cfg, opt.seed), {}};
    result.metrics.seed = opt.seed;
    result.metrics.config_digest = cfg.digest();

    NoiseSource noise(mix_seed(opt.seed, 2), NoiseSource::Mode::train);
    std::mt19937_64 shuffle_rng(mix_seed(opt.seed, 3));

    auto params_named = result.params.named();
    std::vector<Tensor4> velocity;
    velocity.reserve(params_named.size());
    for (auto& [name, t] : params_named) velocity.emplace_back(t->dims(), 0.0);

    {
        const PassResult init_train = eval_pass(cfg, result.params, train_data, 64);
        const PassResult init_val =
            val_data.empty() ? PassResult{} : eval_pass(cfg, result.params, val_data, 64);
        result.metrics.records.push_back({0, init_train.loss, init_train.accuracy,
                                          init_val.accuracy});
    }

    std::vector<int> order(train_data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(opt.batch)) {
            const std::size_t to =
                std::min(order.size(), from + static_cast<std::size_t>(opt.batch));
            const Var images = Var::constant(stack_images(train_data, order, from, to));
            const std::vector<int> labels = stack_labels(train_data, order, from, to);

            const ToyVars vars = bind(result.params, /*trainable=*/true);
            const Var logits = toy_logits(images, vars, cfg, noise);
            const Var loss = cross_entropy_mean(logits, labels);
            const double batch_loss = loss.value()[0];
            if (!std::isfinite(batch_loss)) {
                throw EvalError("train: loss diverged to " + std::to_string(batch_loss) +
                                " at epoch " + std::to_string(epoch) + ", batch offset " +
                                std::to_string(from));
            }
            loss_sum += batch_loss * static_cast<double>(to - from);
            for (std::size_t b = 0; b < labels.size(); ++b) {
                if (argmax_class(logits.value(), static_cast<std::int64_t>(b)) == labels[b]) {
                    ++correct;
                }
            }
            loss.backward();

            const std::vector<Var> leaves = ordered_leaves(vars);
            if (leaves.size() != params_named.size()) {
                throw ConfigError("train: leaf order out of sync with the parameter manifest");
            }
            for (std::size_t pi = 0; pi < params_named.size(); ++pi) {
                Tensor4& p = *params_named[pi].second;
                Tensor4& vel = velocity[pi];
                const Tensor4& g = leaves[pi].grad();
                for (std::size_t i = 0; i < p.size(); ++i) {
                    vel[i] = opt.momentum * vel[i] + g[i];
                    p[i] -= opt.lr * vel[i];
                }
            }
        }
        const double train_loss = loss_sum / static_cast<double>(train_data.size());
        const double train_acc =
            static_cast<double>(correct) / static_cast<double>(train_data.size());
        const double val_acc =
            val_data.empty() ? 0.0 : eval_pass(cfg, result.params, val_data, 64).accuracy;
        result.metrics.records.push_back({epoch, train_loss, train_acc, val_acc});
    }
    return result;
}

EvalResult evaluate(const ToyConfig& cfg, const ToyParams& params,
                    const std::vector<SceneSample>& data, int batch) {
    cfg.validate();
    if (data.empty()) throw ConfigError("evaluate: empty dataset");
    NoiseSource noise(0, NoiseSource::Mode::eval);
    const ToyVars vars = bind(params, /*trainable=*/false);
    EvalResult out;
    out.confusion.assign(static_cast<std::size_t>(cfg.classes),
                         std::vector<std::int64_t>(static_cast<std::size_t>(cfg.classes), 0));
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::int64_t correct = 0;
    for (std::size_t from = 0; from < data.size(); from += static_cast<std::size_t>(batch)) {
        const std::size_t to = std::min(data.size(), from + static_cast<std::size_t>(batch));
        const Var images = Var::constant(stack_images(data, idx, from, to));
        const std::vector<int> labels = stack_labels(data, idx, from, to);
        const Var logits = toy_logits(images, vars, cfg, noise);
        for (std::size_t b = 0; b < labels.size(); ++b) {
            const int pred = argmax_class(logits.value(), static_cast<std::int64_t>(b));
            out.confusion[static_cast<std::size_t>(labels[b])][static_cast<std::size_t>(pred)]++;
            if (pred == labels[b]) ++correct;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return out;
}

std::vector<AblateRow> ablate(const std::string& axis, const std::vector<std::string>& values,
                              const ToyConfig& base, const std::vector<SceneSample>& train_data,
                              const std::vector<SceneSample>& val_data, const TrainOptions& opt) {
    if (values.empty()) throw ConfigError("ablate: no values given");
    std::vector<AblateRow> rows;
    rows.reserve(values.size());
    for (const std::string& value : values) {
        ToyConfig cfg = base;
        if (axis == "groups") {
            cfg.block.groups = std::stoll(value);
        } else if (axis == "alpha") {
            cfg.block.alpha = std::stod(value);
        } else if (axis == "operator") {
            cfg.block.gate_stat = gate_stat_from_name(value);
        } else {
            throw ConfigError("ablate: unknown axis '" + axis +
                              "' (expected groups|alpha|operator)");
        }
        const TrainResult run = train(cfg, train_data, val_data, opt);
        rows.push_back({value, run.metrics.records.back().val_acc});
    }
    return rows;
}

}  // namespace dsgate
