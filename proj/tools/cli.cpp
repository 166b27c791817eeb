#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "dsgate/check.hpp"
#include "dsgate/dso.hpp"
#include "dsgate/train.hpp"

namespace dsgate::cli {

namespace {

std::string fmt_g(double v, int precision = 12) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

void with_output(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    if (path == "-") {
        fn(std::cout);
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    fn(out);
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// --- toy model config sidecar ------------------------------------------------

void write_toy_config(const std::filesystem::path& dir, const ToyConfig& cfg) {
    std::ofstream out(dir / "config.txt", std::ios::trunc);
    if (!out) throw FormatError((dir / "config.txt").string() + ": cannot open for writing");
    out << "c_in=" << cfg.block.c_in << "\n"
        << "c_out=" << cfg.block.c_out << "\n"
        << "n=" << cfg.block.n << "\n"
        << "expansion=" << fmt_g(cfg.block.expansion, 17) << "\n"
        << "use_dsg=" << cfg.block.use_dsg << "\n"
        << "use_msg=" << cfg.block.use_msg << "\n"
        << "groups=" << cfg.block.groups << "\n"
        << "shortcut=" << cfg.block.shortcut << "\n"
        << "act=" << act_name(cfg.block.act) << "\n"
        << "gate_stat=" << gate_stat_name(cfg.block.gate_stat) << "\n"
        << "alpha=" << fmt_g(cfg.block.alpha, 17) << "\n"
        << "beta=" << fmt_g(cfg.block.beta, 17) << "\n"
        << "literal_scale=" << cfg.block.msg_literal_scale << "\n"
        << "stem_out=" << cfg.stem_out << "\n"
        << "classes=" << cfg.classes << "\n"
        << "baseline=" << cfg.use_baseline_block << "\n";
}

ToyConfig read_toy_config(const std::filesystem::path& dir) {
    std::ifstream in(dir / "config.txt");
    if (!in) throw FormatError((dir / "config.txt").string() + ": cannot open for reading");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError((dir / "config.txt").string() + ": malformed line '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) {
            throw FormatError((dir / "config.txt").string() + ": missing key '" +
                              std::string(key) + "'");
        }
        return it->second;
    };
    ToyConfig cfg;
    cfg.block.c_in = std::stoll(need("c_in"));
    cfg.block.c_out = std::stoll(need("c_out"));
    cfg.block.n = std::stoll(need("n"));
    cfg.block.expansion = std::stod(need("expansion"));
    cfg.block.use_dsg = need("use_dsg") == "1";
    cfg.block.use_msg = need("use_msg") == "1";
    cfg.block.groups = std::stoll(need("groups"));
    cfg.block.shortcut = need("shortcut") == "1";
    cfg.block.act = act_from_name(need("act"));
    cfg.block.gate_stat = gate_stat_from_name(need("gate_stat"));
    cfg.block.alpha = std::stod(need("alpha"));
    cfg.block.beta = std::stod(need("beta"));
    cfg.block.msg_literal_scale = need("literal_scale") == "1";
    cfg.stem_out = std::stoll(need("stem_out"));
    cfg.classes = std::stoll(need("classes"));
    cfg.use_baseline_block = need("baseline") == "1";
    cfg.validate();
    return cfg;
}

bool run_gradcheck(std::uint64_t seed, int op_trials, int block_configs, double step,
                   double tolerance, std::ostream& os) {
    bool all_pass = true;
    for (const OpCheckLine& line : gradcheck_battery(seed, op_trials, block_configs, step,
                                                     tolerance)) {
        os << line.name << " checked=" << line.report.checked
           << " max_rel_err=" << fmt_g(line.report.max_rel_err, 6)
           << (line.report.pass ? " PASS" : " FAIL") << "\n";
        all_pass = all_pass && line.report.pass;
    }
    return all_pass;
}

void write_metrics_csv(std::ostream& os, const TrainMetrics& m) {
    os << "epoch,loss,train_acc,val_acc\n";
    for (const EpochRecord& r : m.records) {
        os << r.epoch << "," << fmt_g(r.loss) << "," << fmt_g(r.train_acc) << ","
           << fmt_g(r.val_acc) << "\n";
    }
}

}  // namespace

Range parse_range(const std::string& text) {
    const auto bad = [&](const std::string& why) {
        return UsageError("range '" + text + "': " + why + " (expected min:max:steps)");
    };
    std::vector<std::string> fields;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ':')) fields.push_back(item);
    if (fields.size() != 3) throw bad("needs three ':'-separated fields");
    Range r{};
    try {
        std::size_t used = 0;
        r.min = std::stod(fields[0], &used);
        if (used != fields[0].size()) throw bad("malformed minimum");
        r.max = std::stod(fields[1], &used);
        if (used != fields[1].size()) throw bad("malformed maximum");
        r.steps = std::stoi(fields[2], &used);
        if (used != fields[2].size()) throw bad("malformed step count");
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        throw bad("not numeric");
    }
    if (r.min > r.max) throw bad("min > max");
    if (r.steps < 2) throw bad("steps < 2");
    return r;
}

int run(std::vector<std::string> args) {
    CLI::App app{"dual-statistic synergy operator and gating workbench"};
    app.require_subcommand(1);

    // surface ----------------------------------------------------------------
    auto* surface = app.add_subcommand("surface", "Emit the (mu, d) response surface as CSV");
    std::string s_mu = "0:3:61", s_d = "0:3:61", s_out = "-";
    double s_band = 0.2, s_thr = 1.0;
    std::uint64_t s_seed = 7;
    surface->add_option("--mu", s_mu, "mu range, min:max:steps")->capture_default_str();
    surface->add_option("--d", s_d, "d range, min:max:steps")->capture_default_str();
    surface->add_option("--band-ratio", s_band, "relative width of the d=mu band")
        ->capture_default_str();
    surface->add_option("--phi-threshold", s_thr, "response threshold inside the band")
        ->capture_default_str();
    surface->add_option("--out", s_out, "output CSV path, - for stdout")->capture_default_str();
    surface->add_option("--seed", s_seed, "RNG seed (unused; accepted for uniformity)")
        ->envname("DS_SEED")
        ->capture_default_str();
    surface->callback([&] {
        const Range rm = parse_range(s_mu);
        const Range rd = parse_range(s_d);
        const RegionConfig cfg{s_band, s_thr};
        const auto grid =
            surface_grid(rm.min, rm.max, rm.steps, rd.min, rd.max, rd.steps, cfg);
        with_output(s_out, [&](std::ostream& os) { write_surface_csv(os, grid); });
    });

    // stats ------------------------------------------------------------------
    auto* stats = app.add_subcommand("stats", "Channel statistics of a DST1 tensor");
    std::string t_input, t_out = "-";
    std::uint64_t t_seed = 7;
    stats->add_option("--input", t_input, "input .dst tensor")->required();
    stats->add_option("--out", t_out, "output CSV path, - for stdout")->capture_default_str();
    stats->add_option("--seed", t_seed, "RNG seed (unused; accepted for uniformity)")
        ->envname("DS_SEED")
        ->capture_default_str();
    stats->callback([&] {
        const Tensor4 x = load_tensor(t_input);
        const ChannelStats s = channel_stats(x);
        with_output(t_out, [&](std::ostream& os) {
            os << "b,c,mu,m,d,phi\n";
            const Dims d = x.dims();
            for (std::int64_t b = 0; b < d.b; ++b)
                for (std::int64_t c = 0; c < d.c; ++c) {
                    os << b << "," << c << "," << fmt_g(s.mu.at(b, c, 0, 0)) << ","
                       << fmt_g(s.m.at(b, c, 0, 0)) << "," << fmt_g(s.d.at(b, c, 0, 0)) << ","
                       << fmt_g(s.phi.at(b, c, 0, 0)) << "\n";
                }
        });
    });

    // gradcheck ----------------------------------------------------------------
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op");
    std::uint64_t g_seed = 7;
    int g_trials = 20, g_configs = 20;
    double g_step = 1e-4, g_tol = 1e-5;
    gradcheck->add_option("--seed", g_seed, "RNG seed")->envname("DS_SEED")->capture_default_str();
    gradcheck->add_option("--op-trials", g_trials, "random inputs per op")->capture_default_str();
    gradcheck->add_option("--configs", g_configs, "random full-block configurations")
        ->capture_default_str();
    gradcheck->add_option("--step", g_step, "finite-difference step scale")->capture_default_str();
    gradcheck->add_option("--tolerance", g_tol, "max relative error")->capture_default_str();
    gradcheck->callback([&] {
        if (!run_gradcheck(g_seed, g_trials, g_configs, g_step, g_tol, std::cout)) {
            throw EvalError("gradient check failed");
        }
    });

    // gen-data -----------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic scene dataset");
    std::uint64_t d_seed = 7;
    int d_count = 2048;
    std::string d_out;
    gen->add_option("--seed", d_seed, "RNG seed")->envname("DS_SEED")->capture_default_str();
    gen->add_option("--count", d_count, "sample count (>= 4)")->capture_default_str();
    gen->add_option("--out", d_out, "output directory")->required();
    gen->callback([&] {
        save_dataset(d_out, gen_dataset(d_seed, d_count));
        std::cout << "wrote " << d_count << " samples to " << d_out << "\n";
    });

    // train ----------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "Train the toy classifier");
    std::string r_data, r_val_data, r_params_out, r_metrics = "-", r_stat = "dso";
    int r_count = 2048, r_val_count = 512, r_epochs = 20, r_batch = 32;
    double r_lr = 0.05, r_momentum = 0.9, r_alpha = 1.9, r_beta = 0.1;
    std::uint64_t r_seed = 7;
    std::int64_t r_groups = 3;
    bool r_no_dsg = false, r_no_msg = false, r_baseline = false, r_literal = false;
    tr->add_option("--data", r_data, "training dataset directory (default: generated)");
    tr->add_option("--val-data", r_val_data, "validation dataset directory (default: generated)");
    tr->add_option("--count", r_count, "generated training samples")->capture_default_str();
    tr->add_option("--val-count", r_val_count, "generated validation samples")
        ->capture_default_str();
    tr->add_option("--epochs", r_epochs, "training epochs")->capture_default_str();
    tr->add_option("--lr", r_lr, "learning rate")->capture_default_str();
    tr->add_option("--batch", r_batch, "batch size")->capture_default_str();
    tr->add_option("--momentum", r_momentum, "SGD momentum")->capture_default_str();
    tr->add_option("--seed", r_seed, "RNG seed")->envname("DS_SEED")->capture_default_str();
    tr->add_flag("--no-dsg", r_no_dsg, "disable the channel gate");
    tr->add_flag("--no-msg", r_no_msg, "disable the depth-group gate");
    tr->add_flag("--baseline", r_baseline, "use the ungated control block");
    tr->add_flag("--literal-scale", r_literal, "add raw scale logits instead of sampled noise");
    tr->add_option("--groups", r_groups, "depth groups")->capture_default_str();
    tr->add_option("--alpha", r_alpha, "temperature span")->capture_default_str();
    tr->add_option("--beta", r_beta, "temperature floor")->capture_default_str();
    tr->add_option("--stat", r_stat, "gate statistic: dso|mean|max")->capture_default_str();
    tr->add_option("--out", r_params_out, "directory for the trained parameter bundle");
    tr->add_option("--metrics", r_metrics, "metrics CSV path, - for stdout")
        ->capture_default_str();
    tr->callback([&] {
        ToyConfig cfg;
        cfg.block.use_dsg = !r_no_dsg && !r_baseline;
        cfg.block.use_msg = !r_no_msg && !r_baseline;
        cfg.use_baseline_block = r_baseline;
        cfg.block.groups = r_groups;
        cfg.block.alpha = r_alpha;
        cfg.block.beta = r_beta;
        cfg.block.gate_stat = gate_stat_from_name(r_stat);
        cfg.block.msg_literal_scale = r_literal;

        const auto train_set = r_data.empty() ? gen_dataset(r_seed, r_count)
                                              : load_dataset(r_data);
        const auto val_set = r_val_data.empty() ? gen_dataset(r_seed + 1, r_val_count)
                                                : load_dataset(r_val_data);
        TrainOptions opt;
        opt.epochs = r_epochs;
        opt.lr = r_lr;
        opt.batch = r_batch;
        opt.momentum = r_momentum;
        opt.seed = r_seed;
        const TrainResult result = train(cfg, train_set, val_set, opt);
        with_output(r_metrics, [&](std::ostream& os) { write_metrics_csv(os, result.metrics); });
        if (!r_params_out.empty()) {
            save_bundle(r_params_out, result.params.named());
            write_toy_config(r_params_out, cfg);
        }
    });

    // eval -----------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "Evaluate a trained parameter bundle");
    std::string e_params, e_data, e_out = "-";
    std::uint64_t e_seed = 7;
    ev->add_option("--params", e_params, "parameter bundle directory")->required();
    ev->add_option("--data", e_data, "dataset directory")->required();
    ev->add_option("--out", e_out, "output path, - for stdout")->capture_default_str();
    ev->add_option("--seed", e_seed, "RNG seed (unused; accepted for uniformity)")
        ->envname("DS_SEED")
        ->capture_default_str();
    ev->callback([&] {
        const ToyConfig cfg = read_toy_config(e_params);
        const ToyParams params = toy_from_named(cfg, load_bundle(e_params));
        const EvalResult r = evaluate(cfg, params, load_dataset(e_data));
        with_output(e_out, [&](std::ostream& os) {
            os << "accuracy," << fmt_g(r.accuracy) << "\n";
            os << "class";
            for (std::int64_t k = 0; k < cfg.classes; ++k) os << ",pred" << k;
            os << "\n";
            for (std::size_t t = 0; t < r.confusion.size(); ++t) {
                os << t;
                for (std::int64_t v : r.confusion[t]) os << "," << v;
                os << "\n";
            }
        });
    });

    // ablate ---------------------------------------------------------------
    auto* ab = app.add_subcommand("ablate", "Replay one ablation axis at toy scale");
    std::string a_axis, a_values, a_out = "-", a_stat = "dso";
    int a_epochs = 8, a_count = 512, a_val_count = 128, a_batch = 32;
    double a_lr = 0.05, a_momentum = 0.9;
    std::uint64_t a_seed = 7;
    ab->add_option("--axis", a_axis, "groups|alpha|operator")->required();
    ab->add_option("--values", a_values, "comma-separated values for the axis")->required();
    ab->add_option("--epochs", a_epochs, "training epochs per value")->capture_default_str();
    ab->add_option("--count", a_count, "generated training samples")->capture_default_str();
    ab->add_option("--val-count", a_val_count, "generated validation samples")
        ->capture_default_str();
    ab->add_option("--lr", a_lr, "learning rate")->capture_default_str();
    ab->add_option("--batch", a_batch, "batch size")->capture_default_str();
    ab->add_option("--seed", a_seed, "RNG seed")->envname("DS_SEED")->capture_default_str();
    ab->add_option("--out", a_out, "output CSV path, - for stdout")->capture_default_str();
    ab->callback([&] {
        ToyConfig base;
        base.block.use_dsg = true;
        base.block.use_msg = true;
        // One dataset for every row; only the ablated knob varies.
        const auto train_set = gen_dataset(a_seed, a_count);
        const auto val_set = gen_dataset(a_seed + 1, a_val_count);
        TrainOptions opt;
        opt.epochs = a_epochs;
        opt.lr = a_lr;
        opt.batch = a_batch;
        opt.momentum = a_momentum;
        opt.seed = a_seed;
        const auto rows = ablate(a_axis, split_csv(a_values), base, train_set, val_set, opt);
        with_output(a_out, [&](std::ostream& os) {
            os << "value,val_acc\n";
            for (const AblateRow& row : rows) {
                os << row.value << "," << fmt_g(row.val_acc) << "\n";
            }
        });
    });

    // params ---------------------------------------------------------------
    auto* pc = app.add_subcommand("params", "Added parameter counts of the two gates");
    std::int64_t p_channels = 64, p_bottlenecks = 2, p_groups = 3;
    std::uint64_t p_seed = 7;
    pc->add_option("--channels", p_channels, "channel count C at the gate input")
        ->capture_default_str();
    pc->add_option("--bottlenecks", p_bottlenecks, "bottleneck count n")->capture_default_str();
    pc->add_option("--groups", p_groups, "depth groups G")->capture_default_str();
    pc->add_option("--seed", p_seed, "RNG seed (unused; accepted for uniformity)")
        ->envname("DS_SEED")
        ->capture_default_str();
    pc->callback([&] {
        const AddedParamCount counts = added_param_count(p_channels, p_bottlenecks, p_groups);
        std::cout << "dsg=" << counts.dsg << " msg=" << counts.msg << "\n";
    });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace dsgate::cli
