#include "dsgate/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace dsgate {

const char* act_name(Act a) {
    switch (a) {
        case Act::sigmoid: return "sigmoid";
        case Act::softplus: return "softplus";
        case Act::silu: return "silu";
    }
    return "?";
}

Act act_from_name(const std::string& name) {
    if (name == "sigmoid") return Act::sigmoid;
    if (name == "softplus") return Act::softplus;
    if (name == "silu") return Act::silu;
    throw DomainError("unknown activation '" + name + "' (expected sigmoid|softplus|silu)");
}

namespace {

double sigmoid_stable(double v) {
    if (v >= 0.0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

double softplus_stable(double v) {
    return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
}

}  // namespace

struct Var::Node {
    Tensor4 value;
    Tensor4 grad;  // allocated to value's dims only on tracked nodes
    std::vector<Var> parents;
    BackwardFn backward;
    bool requires_grad = false;

    explicit Node(Tensor4 v) : value(std::move(v)) {}
};

Var Var::leaf(Tensor4 value) {
    Var v;
    v.node_ = std::make_shared<Node>(std::move(value));
    v.node_->requires_grad = true;
    v.node_->grad = Tensor4(v.node_->value.dims(), 0.0);
    return v;
}

Var Var::constant(Tensor4 value) {
    Var v;
    v.node_ = std::make_shared<Node>(std::move(value));
    return v;
}

Var Var::apply(Tensor4 value, std::vector<Var> parents, BackwardFn backward) {
    Var v;
    v.node_ = std::make_shared<Node>(std::move(value));
    bool tracked = false;
    for (const Var& p : parents) {
        tracked = tracked || (p.defined() && p.requires_grad());
    }
    if (tracked) {
        v.node_->requires_grad = true;
        v.node_->grad = Tensor4(v.node_->value.dims(), 0.0);
        v.node_->parents = std::move(parents);
        v.node_->backward = std::move(backward);
    }
    return v;
}

const Tensor4& Var::value() const& { return node_->value; }
Tensor4 Var::value() && { return node_->value; }
const Tensor4& Var::grad() const& { return node_->grad; }
Tensor4 Var::grad() && { return node_->grad; }
bool Var::requires_grad() const { return node_->requires_grad; }

void Var::add_grad(const Tensor4& g) {
    if (!node_->requires_grad) return;
    require_same_dims(node_->grad, g, "add_grad");
    auto& acc = node_->grad.data();
    const auto& src = g.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
}

void Var::backward() const {
    if (!node_) throw EvalError("backward on empty Var");
    if (node_->value.size() != 1) {
        throw ShapeError("backward requires a scalar node, got " + node_->value.dims().str());
    }
    if (!node_->requires_grad) return;

    // Topological order: every input appears before its consumers.
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next].node_.get();
            ++next;
            if (p != nullptr && p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : topo) n->grad.fill(0.0);
    node_->grad.data()[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(n->grad, n->parents);
    }
}

// --- ops --------------------------------------------------------------------

Var pointwise_conv(const Var& x, const Var& weight, const Var& bias) {
    const Dims xd = x.value().dims();
    const Dims wd = weight.value().dims();
    const Dims bd = bias.value().dims();
    if (wd.h != 1 || wd.w != 1 || wd.c != xd.c) {
        throw ShapeError("pointwise_conv: weight " + wd.str() + " incompatible with input " +
                         xd.str());
    }
    if (bd.b != 1 || bd.c != wd.b || bd.h != 1 || bd.w != 1) {
        throw ShapeError("pointwise_conv: bias " + bd.str() + " incompatible with weight " +
                         wd.str());
    }
    const std::int64_t cout = wd.b;
    const std::int64_t cin = wd.c;
    const std::int64_t plane = xd.h * xd.w;
    Tensor4 out({xd.b, cout, xd.h, xd.w}, 0.0);
    const double* xp = x.value().data().data();
    const double* wp = weight.value().data().data();
    const double* bp = bias.value().data().data();
    double* op = out.data().data();
    for (std::int64_t b = 0; b < xd.b; ++b)
        for (std::int64_t co = 0; co < cout; ++co) {
            double* orow = op + (b * cout + co) * plane;
            const double bias_v = bp[co];
            for (std::int64_t i = 0; i < plane; ++i) orow[i] = bias_v;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
                const double wv = wp[co * cin + ci];
                const double* xrow = xp + (b * cin + ci) * plane;
                for (std::int64_t i = 0; i < plane; ++i) orow[i] += wv * xrow[i];
            }
        }
    return Var::apply(std::move(out), {x, weight, bias},
                      [xd, cout, cin, plane](const Tensor4& g, std::vector<Var>& parents) {
                          const double* xp = parents[0].value().data().data();
                          const double* wp = parents[1].value().data().data();
                          const double* gp = g.data().data();
                          Tensor4 gx(parents[0].value().dims(), 0.0);
                          Tensor4 gw(parents[1].value().dims(), 0.0);
                          Tensor4 gb(parents[2].value().dims(), 0.0);
                          double* gxp = gx.data().data();
                          double* gwp = gw.data().data();
                          double* gbp = gb.data().data();
                          for (std::int64_t b = 0; b < xd.b; ++b)
                              for (std::int64_t co = 0; co < cout; ++co) {
                                  const double* grow = gp + (b * cout + co) * plane;
                                  double acc_b = 0.0;
                                  for (std::int64_t i = 0; i < plane; ++i) acc_b += grow[i];
                                  gbp[co] += acc_b;
                                  for (std::int64_t ci = 0; ci < cin; ++ci) {
                                      const double wv = wp[co * cin + ci];
                                      const double* xrow = xp + (b * cin + ci) * plane;
                                      double* gxrow = gxp + (b * cin + ci) * plane;
                                      double acc_w = 0.0;
                                      for (std::int64_t i = 0; i < plane; ++i) {
                                          gxrow[i] += wv * grow[i];
                                          acc_w += grow[i] * xrow[i];
                                      }
                                      gwp[co * cin + ci] += acc_w;
                                  }
                              }
                          parents[0].add_grad(gx);
                          parents[1].add_grad(gw);
                          parents[2].add_grad(gb);
                      });
}

Var conv3x3_same(const Var& x, const Var& weight, const Var& bias) {
    const Dims xd = x.value().dims();
    const Dims wd = weight.value().dims();
    const Dims bd = bias.value().dims();
    if (wd.h != 3 || wd.w != 3 || wd.c != xd.c) {
        throw ShapeError("conv3x3_same: weight " + wd.str() + " incompatible with input " +
                         xd.str());
    }
    if (bd.b != 1 || bd.c != wd.b || bd.h != 1 || bd.w != 1) {
        throw ShapeError("conv3x3_same: bias " + bd.str() + " incompatible with weight " +
                         wd.str());
    }
    const std::int64_t cout = wd.b;
    const std::int64_t cin = wd.c;
    const std::int64_t H = xd.h, W = xd.w;
    const std::int64_t plane = H * W;
    Tensor4 out({xd.b, cout, H, W}, 0.0);
    const double* xp = x.value().data().data();
    const double* wp = weight.value().data().data();
    const double* bp = bias.value().data().data();
    double* op = out.data().data();
    // One (ci, ky, kx) tap at a time: contiguous shifted-row accumulation.
    for (std::int64_t b = 0; b < xd.b; ++b)
        for (std::int64_t co = 0; co < cout; ++co) {
            double* oplane = op + (b * cout + co) * plane;
            const double bias_v = bp[co];
            for (std::int64_t i = 0; i < plane; ++i) oplane[i] = bias_v;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
                const double* xplane = xp + (b * cin + ci) * plane;
                const double* w9 = wp + (co * cin + ci) * 9;
                for (std::int64_t ky = 0; ky < 3; ++ky)
                    for (std::int64_t kx = 0; kx < 3; ++kx) {
                        const double wv = w9[ky * 3 + kx];
                        const std::int64_t h0 = std::max<std::int64_t>(0, 1 - ky);
                        const std::int64_t h1 = std::min(H, H + 1 - ky);
                        const std::int64_t w0 = std::max<std::int64_t>(0, 1 - kx);
                        const std::int64_t w1 = std::min(W, W + 1 - kx);
                        for (std::int64_t h = h0; h < h1; ++h) {
                            double* orow = oplane + h * W;
                            const double* xrow = xplane + (h + ky - 1) * W + (kx - 1);
                            for (std::int64_t w = w0; w < w1; ++w) orow[w] += wv * xrow[w];
                        }
                    }
            }
        }
    return Var::apply(
        std::move(out), {x, weight, bias},
        [xd, cout, cin, H, W, plane](const Tensor4& g, std::vector<Var>& parents) {
            const double* xp = parents[0].value().data().data();
            const double* wp = parents[1].value().data().data();
            const double* gp = g.data().data();
            Tensor4 gx(parents[0].value().dims(), 0.0);
            Tensor4 gw(parents[1].value().dims(), 0.0);
            Tensor4 gb(parents[2].value().dims(), 0.0);
            double* gxp = gx.data().data();
            double* gwp = gw.data().data();
            double* gbp = gb.data().data();
            for (std::int64_t b = 0; b < xd.b; ++b)
                for (std::int64_t co = 0; co < cout; ++co) {
                    const double* gplane = gp + (b * cout + co) * plane;
                    double acc_b = 0.0;
                    for (std::int64_t i = 0; i < plane; ++i) acc_b += gplane[i];
                    gbp[co] += acc_b;
                    for (std::int64_t ci = 0; ci < cin; ++ci) {
                        const double* xplane = xp + (b * cin + ci) * plane;
                        double* gxplane = gxp + (b * cin + ci) * plane;
                        const double* w9 = wp + (co * cin + ci) * 9;
                        double* gw9 = gwp + (co * cin + ci) * 9;
                        for (std::int64_t ky = 0; ky < 3; ++ky)
                            for (std::int64_t kx = 0; kx < 3; ++kx) {
                                const double wv = w9[ky * 3 + kx];
                                double acc_w = 0.0;
                                const std::int64_t h0 = std::max<std::int64_t>(0, 1 - ky);
                                const std::int64_t h1 = std::min(H, H + 1 - ky);
                                const std::int64_t w0 = std::max<std::int64_t>(0, 1 - kx);
                                const std::int64_t w1 = std::min(W, W + 1 - kx);
                                for (std::int64_t h = h0; h < h1; ++h) {
                                    const double* grow = gplane + h * W;
                                    const double* xrow = xplane + (h + ky - 1) * W + (kx - 1);
                                    double* gxrow = gxplane + (h + ky - 1) * W + (kx - 1);
                                    for (std::int64_t w = w0; w < w1; ++w) {
                                        gxrow[w] += wv * grow[w];
                                        acc_w += grow[w] * xrow[w];
                                    }
                                }
                                gw9[ky * 3 + kx] += acc_w;
                            }
                    }
                }
            parents[0].add_grad(gx);
            parents[1].add_grad(gw);
            parents[2].add_grad(gb);
        });
}

Var activation(Act kind, const Var& x) {
    x.value().require_finite("activation input");
    const Tensor4& xv = x.value();
    Tensor4 out(xv.dims(), 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        switch (kind) {
            case Act::sigmoid: out[i] = sigmoid_stable(v); break;
            case Act::softplus: out[i] = softplus_stable(v); break;
            case Act::silu: out[i] = v * sigmoid_stable(v); break;
        }
    }
    return Var::apply(std::move(out), {x}, [kind](const Tensor4& g, std::vector<Var>& parents) {
        const Tensor4& xv = parents[0].value();
        Tensor4 gx(xv.dims(), 0.0);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            const double s = sigmoid_stable(v);
            double deriv = 0.0;
            switch (kind) {
                case Act::sigmoid: deriv = s * (1.0 - s); break;
                case Act::softplus: deriv = s; break;
                case Act::silu: deriv = s * (1.0 + v * (1.0 - s)); break;
            }
            gx[i] = g[i] * deriv;
        }
        parents[0].add_grad(gx);
    });
}

Var reduce_mean(const Var& x) {
    const Dims xd = x.value().dims();
    const Tensor4& xv = x.value();
    Tensor4 out({xd.b, xd.c, 1, 1}, 0.0);
    const double inv = 1.0 / static_cast<double>(xd.h * xd.w);
    for (std::int64_t b = 0; b < xd.b; ++b)
        for (std::int64_t c = 0; c < xd.c; ++c) {
            double acc = 0.0;
            for (std::int64_t h = 0; h < xd.h; ++h)
                for (std::int64_t w = 0; w < xd.w; ++w) acc += xv.at(b, c, h, w);
            out.at(b, c, 0, 0) = acc * inv;
        }
    return Var::apply(std::move(out), {x}, [xd, inv](const Tensor4& g, std::vector<Var>& parents) {
        Tensor4 gx(xd, 0.0);
        for (std::int64_t b = 0; b < xd.b; ++b)
            for (std::int64_t c = 0; c < xd.c; ++c) {
                const double go = g.at(b, c, 0, 0) * inv;
                for (std::int64_t h = 0; h < xd.h; ++h)
                    for (std::int64_t w = 0; w < xd.w; ++w) gx.at(b, c, h, w) = go;
            }
        parents[0].add_grad(gx);
    });
}

Var reduce_max(const Var& x) {
    const Dims xd = x.value().dims();
    const Tensor4& xv = x.value();
    Tensor4 out({xd.b, xd.c, 1, 1}, 0.0);
    // First row-major attaining position per (b,c); ties keep the earliest.
    std::vector<std::size_t> argmax(static_cast<std::size_t>(xd.b * xd.c), 0);
    for (std::int64_t b = 0; b < xd.b; ++b)
        for (std::int64_t c = 0; c < xd.c; ++c) {
            double best = xv.at(b, c, 0, 0);
            std::size_t best_at = xv.index(b, c, 0, 0);
            for (std::int64_t h = 0; h < xd.h; ++h)
                for (std::int64_t w = 0; w < xd.w; ++w) {
                    const double v = xv.at(b, c, h, w);
                    if (v > best) {
                        best = v;
                        best_at = xv.index(b, c, h, w);
                    }
                }
            out.at(b, c, 0, 0) = best;
            argmax[static_cast<std::size_t>(b * xd.c + c)] = best_at;
        }
    return Var::apply(std::move(out), {x},
                      [xd, argmax = std::move(argmax)](const Tensor4& g, std::vector<Var>& parents) {
                          Tensor4 gx(xd, 0.0);
                          for (std::int64_t b = 0; b < xd.b; ++b)
                              for (std::int64_t c = 0; c < xd.c; ++c) {
                                  gx.data()[argmax[static_cast<std::size_t>(b * xd.c + c)]] =
                                      g.at(b, c, 0, 0);
                              }
                          parents[0].add_grad(gx);
                      });
}

Var softmax_channels(const Var& z, const Var& temperature) {
    const Dims zd = z.value().dims();
    const Dims td = temperature.value().dims();
    if (!(zd == td)) {
        throw ShapeError("softmax_channels: logits " + zd.str() + " vs temperature " + td.str());
    }
    if (zd.h != 1 || zd.w != 1) {
        throw ShapeError("softmax_channels: expected (B,K,1,1) operands, got " + zd.str());
    }
    const Tensor4& zv = z.value();
    const Tensor4& tv = temperature.value();
    for (std::size_t i = 0; i < tv.size(); ++i) {
        if (!(tv[i] > 0.0)) {
            throw DomainError("softmax_channels: temperature must be > 0, got " +
                              std::to_string(tv[i]));
        }
    }
    Tensor4 out(zd, 0.0);
    for (std::int64_t b = 0; b < zd.b; ++b) {
        double umax = -std::numeric_limits<double>::infinity();
        for (std::int64_t k = 0; k < zd.c; ++k) {
            umax = std::max(umax, zv.at(b, k, 0, 0) / tv.at(b, k, 0, 0));
        }
        double denom = 0.0;
        for (std::int64_t k = 0; k < zd.c; ++k) {
            const double e = std::exp(zv.at(b, k, 0, 0) / tv.at(b, k, 0, 0) - umax);
            out.at(b, k, 0, 0) = e;
            denom += e;
        }
        for (std::int64_t k = 0; k < zd.c; ++k) out.at(b, k, 0, 0) /= denom;
    }
    Tensor4 saved = out;
    return Var::apply(
        std::move(out), {z, temperature},
        [zd, saved = std::move(saved)](const Tensor4& g, std::vector<Var>& parents) {
            const Tensor4& zv = parents[0].value();
            const Tensor4& tv = parents[1].value();
            Tensor4 gz(zd, 0.0);
            Tensor4 gt(zd, 0.0);
            for (std::int64_t b = 0; b < zd.b; ++b) {
                double dot = 0.0;
                for (std::int64_t k = 0; k < zd.c; ++k) {
                    dot += g.at(b, k, 0, 0) * saved.at(b, k, 0, 0);
                }
                for (std::int64_t k = 0; k < zd.c; ++k) {
                    const double du = saved.at(b, k, 0, 0) * (g.at(b, k, 0, 0) - dot);
                    const double t = tv.at(b, k, 0, 0);
                    gz.at(b, k, 0, 0) = du / t;
                    gt.at(b, k, 0, 0) = -du * zv.at(b, k, 0, 0) / (t * t);
                }
            }
            parents[0].add_grad(gz);
            parents[1].add_grad(gt);
        });
}

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: needs at least one part");
    const Dims first = parts[0].value().dims();
    std::int64_t ctotal = 0;
    for (const Var& p : parts) {
        const Dims pd = p.value().dims();
        if (pd.b != first.b || pd.h != first.h || pd.w != first.w) {
            throw ShapeError("concat_channels: part " + pd.str() +
                             " incompatible with first part " + first.str());
        }
        ctotal += pd.c;
    }
    Tensor4 out({first.b, ctotal, first.h, first.w}, 0.0);
    std::int64_t coff = 0;
    for (const Var& p : parts) {
        const Tensor4& pv = p.value();
        const Dims pd = pv.dims();
        for (std::int64_t b = 0; b < pd.b; ++b)
            for (std::int64_t c = 0; c < pd.c; ++c)
                for (std::int64_t h = 0; h < pd.h; ++h)
                    for (std::int64_t w = 0; w < pd.w; ++w)
                        out.at(b, coff + c, h, w) = pv.at(b, c, h, w);
        coff += pd.c;
    }
    return Var::apply(std::move(out), parts, [](const Tensor4& g, std::vector<Var>& parents) {
        std::int64_t coff = 0;
        for (Var& p : parents) {
            const Dims pd = p.value().dims();
            Tensor4 gp(pd, 0.0);
            for (std::int64_t b = 0; b < pd.b; ++b)
                for (std::int64_t c = 0; c < pd.c; ++c)
                    for (std::int64_t h = 0; h < pd.h; ++h)
                        for (std::int64_t w = 0; w < pd.w; ++w)
                            gp.at(b, c, h, w) = g.at(b, coff + c, h, w);
            p.add_grad(gp);
            coff += pd.c;
        }
    });
}

std::vector<Var> split_channels(const Var& x, const std::vector<std::int64_t>& sizes) {
    const Dims xd = x.value().dims();
    std::int64_t total = 0;
    for (std::int64_t s : sizes) {
        if (s < 1) throw ShapeError("split_channels: sizes must be >= 1");
        total += s;
    }
    if (total != xd.c) {
        throw ShapeError("split_channels: sizes sum to " + std::to_string(total) +
                         " but input has " + std::to_string(xd.c) + " channels " + xd.str());
    }
    std::vector<Var> outs;
    outs.reserve(sizes.size());
    std::int64_t coff = 0;
    for (std::int64_t s : sizes) {
        Tensor4 part({xd.b, s, xd.h, xd.w}, 0.0);
        const Tensor4& xv = x.value();
        for (std::int64_t b = 0; b < xd.b; ++b)
            for (std::int64_t c = 0; c < s; ++c)
                for (std::int64_t h = 0; h < xd.h; ++h)
                    for (std::int64_t w = 0; w < xd.w; ++w)
                        part.at(b, c, h, w) = xv.at(b, coff + c, h, w);
        const std::int64_t off = coff;
        outs.push_back(Var::apply(std::move(part), {x},
                                  [xd, off, s](const Tensor4& g, std::vector<Var>& parents) {
                                      Tensor4 gx(xd, 0.0);
                                      for (std::int64_t b = 0; b < xd.b; ++b)
                                          for (std::int64_t c = 0; c < s; ++c)
                                              for (std::int64_t h = 0; h < xd.h; ++h)
                                                  for (std::int64_t w = 0; w < xd.w; ++w)
                                                      gx.at(b, off + c, h, w) = g.at(b, c, h, w);
                                      parents[0].add_grad(gx);
                                  }));
        coff += s;
    }
    return outs;
}

Var add(const Var& a, const Var& b) {
    require_same_dims(a.value(), b.value(), "add");
    Tensor4 out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return Var::apply(std::move(out), {a, b}, [](const Tensor4& g, std::vector<Var>& parents) {
        parents[0].add_grad(g);
        parents[1].add_grad(g);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_dims(a.value(), b.value(), "sub");
    Tensor4 out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return Var::apply(std::move(out), {a, b}, [](const Tensor4& g, std::vector<Var>& parents) {
        parents[0].add_grad(g);
        Tensor4 neg(g.dims(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
        parents[1].add_grad(neg);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_dims(a.value(), b.value(), "mul");
    Tensor4 out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return Var::apply(std::move(out), {a, b}, [](const Tensor4& g, std::vector<Var>& parents) {
        const Tensor4& av = parents[0].value();
        const Tensor4& bv = parents[1].value();
        Tensor4 ga(av.dims(), 0.0);
        Tensor4 gb(bv.dims(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] = g[i] * bv[i];
            gb[i] = g[i] * av[i];
        }
        parents[0].add_grad(ga);
        parents[1].add_grad(gb);
    });
}

Var affine(const Var& x, double scale, double shift) {
    Tensor4 out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * out[i] + shift;
    return Var::apply(std::move(out), {x}, [scale](const Tensor4& g, std::vector<Var>& parents) {
        Tensor4 gx(g.dims(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = scale * g[i];
        parents[0].add_grad(gx);
    });
}

Var scale_channels(const Var& x, const Var& gate) {
    const Dims xd = x.value().dims();
    const Dims gd = gate.value().dims();
    if (gd.b != xd.b || gd.c != xd.c || gd.h != 1 || gd.w != 1) {
        throw ShapeError("scale_channels: gate " + gd.str() + " incompatible with input " +
                         xd.str());
    }
    const Tensor4& xv = x.value();
    const Tensor4& gv = gate.value();
    Tensor4 out(xd, 0.0);
    for (std::int64_t b = 0; b < xd.b; ++b)
        for (std::int64_t c = 0; c < xd.c; ++c) {
            const double s = gv.at(b, c, 0, 0);
            for (std::int64_t h = 0; h < xd.h; ++h)
                for (std::int64_t w = 0; w < xd.w; ++w) out.at(b, c, h, w) = s * xv.at(b, c, h, w);
        }
    return Var::apply(std::move(out), {x, gate},
                      [xd](const Tensor4& g, std::vector<Var>& parents) {
                          const Tensor4& xv = parents[0].value();
                          const Tensor4& gv = parents[1].value();
                          Tensor4 gx(xd, 0.0);
                          Tensor4 gg(gv.dims(), 0.0);
                          for (std::int64_t b = 0; b < xd.b; ++b)
                              for (std::int64_t c = 0; c < xd.c; ++c) {
                                  const double s = gv.at(b, c, 0, 0);
                                  double acc = 0.0;
                                  for (std::int64_t h = 0; h < xd.h; ++h)
                                      for (std::int64_t w = 0; w < xd.w; ++w) {
                                          const double go = g.at(b, c, h, w);
                                          gx.at(b, c, h, w) = s * go;
                                          acc += go * xv.at(b, c, h, w);
                                      }
                                  gg.at(b, c, 0, 0) = acc;
                              }
                          parents[0].add_grad(gx);
                          parents[1].add_grad(gg);
                      });
}

Var scale_per_batch(const Var& x, const Var& s) {
    const Dims xd = x.value().dims();
    const Dims sd = s.value().dims();
    if (sd.b != xd.b || sd.c != 1 || sd.h != 1 || sd.w != 1) {
        throw ShapeError("scale_per_batch: scale " + sd.str() + " incompatible with input " +
                         xd.str());
    }
    const Tensor4& xv = x.value();
    const Tensor4& sv = s.value();
    Tensor4 out(xd, 0.0);
    for (std::int64_t b = 0; b < xd.b; ++b) {
        const double f = sv.at(b, 0, 0, 0);
        for (std::int64_t c = 0; c < xd.c; ++c)
            for (std::int64_t h = 0; h < xd.h; ++h)
                for (std::int64_t w = 0; w < xd.w; ++w) out.at(b, c, h, w) = f * xv.at(b, c, h, w);
    }
    return Var::apply(std::move(out), {x, s}, [xd](const Tensor4& g, std::vector<Var>& parents) {
        const Tensor4& xv = parents[0].value();
        const Tensor4& sv = parents[1].value();
        Tensor4 gx(xd, 0.0);
        Tensor4 gs(sv.dims(), 0.0);
        for (std::int64_t b = 0; b < xd.b; ++b) {
            const double f = sv.at(b, 0, 0, 0);
            double acc = 0.0;
            for (std::int64_t c = 0; c < xd.c; ++c)
                for (std::int64_t h = 0; h < xd.h; ++h)
                    for (std::int64_t w = 0; w < xd.w; ++w) {
                        const double go = g.at(b, c, h, w);
                        gx.at(b, c, h, w) = f * go;
                        acc += go * xv.at(b, c, h, w);
                    }
            gs.at(b, 0, 0, 0) = acc;
        }
        parents[0].add_grad(gx);
        parents[1].add_grad(gs);
    });
}

Var dso_combine(const Var& mu, const Var& d) {
    require_same_dims(mu.value(), d.value(), "dso_combine");
    const Tensor4& mv = mu.value();
    const Tensor4& dv = d.value();
    Tensor4 out(mv.dims(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = mv[i] * dv[i] + mv[i] + dv[i];
    }
    return Var::apply(std::move(out), {mu, d}, [](const Tensor4& g, std::vector<Var>& parents) {
        const Tensor4& mv = parents[0].value();
        const Tensor4& dv = parents[1].value();
        Tensor4 gm(mv.dims(), 0.0);
        Tensor4 gd(dv.dims(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gm[i] = g[i] * (dv[i] + 1.0);
            gd[i] = g[i] * (mv[i] + 1.0);
        }
        parents[0].add_grad(gm);
        parents[1].add_grad(gd);
    });
}

Var cross_entropy_mean(const Var& logits, const std::vector<int>& labels) {
    const Dims ld = logits.value().dims();
    if (ld.h != 1 || ld.w != 1) {
        throw ShapeError("cross_entropy_mean: expected (B,K,1,1) logits, got " + ld.str());
    }
    if (static_cast<std::int64_t>(labels.size()) != ld.b) {
        throw ShapeError("cross_entropy_mean: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(ld.b));
    }
    for (int y : labels) {
        if (y < 0 || y >= ld.c) {
            throw DomainError("cross_entropy_mean: label " + std::to_string(y) +
                              " outside [0," + std::to_string(ld.c) + ")");
        }
    }
    const Tensor4& lv = logits.value();
    double total = 0.0;
    for (std::int64_t b = 0; b < ld.b; ++b) {
        double m = lv.at(b, 0, 0, 0);
        for (std::int64_t k = 1; k < ld.c; ++k) m = std::max(m, lv.at(b, k, 0, 0));
        double denom = 0.0;
        for (std::int64_t k = 0; k < ld.c; ++k) denom += std::exp(lv.at(b, k, 0, 0) - m);
        const double lse = m + std::log(denom);
        total += lse - lv.at(b, labels[static_cast<std::size_t>(b)], 0, 0);
    }
    Tensor4 out({1, 1, 1, 1}, total / static_cast<double>(ld.b));
    return Var::apply(std::move(out), {logits},
                      [ld, labels](const Tensor4& g, std::vector<Var>& parents) {
                          const Tensor4& lv = parents[0].value();
                          const double scale = g[0] / static_cast<double>(ld.b);
                          Tensor4 gl(ld, 0.0);
                          for (std::int64_t b = 0; b < ld.b; ++b) {
                              double m = lv.at(b, 0, 0, 0);
                              for (std::int64_t k = 1; k < ld.c; ++k)
                                  m = std::max(m, lv.at(b, k, 0, 0));
                              double denom = 0.0;
                              for (std::int64_t k = 0; k < ld.c; ++k)
                                  denom += std::exp(lv.at(b, k, 0, 0) - m);
                              for (std::int64_t k = 0; k < ld.c; ++k) {
                                  const double p = std::exp(lv.at(b, k, 0, 0) - m) / denom;
                                  const double hit =
                                      (k == labels[static_cast<std::size_t>(b)]) ? 1.0 : 0.0;
                                  gl.at(b, k, 0, 0) = (p - hit) * scale;
                              }
                          }
                          parents[0].add_grad(gl);
                      });
}

Var weighted_sum(const Var& x, const Tensor4& coeffs) {
    require_same_dims(x.value(), coeffs, "weighted_sum");
    double acc = 0.0;
    const Tensor4& xv = x.value();
    for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * coeffs[i];
    Tensor4 out({1, 1, 1, 1}, acc);
    return Var::apply(std::move(out), {x},
                      [coeffs](const Tensor4& g, std::vector<Var>& parents) {
                          Tensor4 gx(coeffs.dims(), 0.0);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = coeffs[i] * g[0];
                          parents[0].add_grad(gx);
                      });
}

}  // namespace dsgate
