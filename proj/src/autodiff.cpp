#include "dxtab/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "dxtab/kernels.hpp"

namespace dxtab::nn {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// Shape helpers: treat a tensor as a stack of (rows x cols) slices.
struct MatView {
    std::int64_t batch, rows, cols;
};

MatView as_batched(const Tensor& t) {
    const auto& s = t.shape();
    if (s.size() == 2) return {1, s[0], s[1]};
    if (s.size() == 3) return {s[0], s[1], s[2]};
    throw std::invalid_argument("matmul expects a 2-D or 3-D tensor");
}

}  // namespace

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Graph::NodeId Graph::push(Tensor value, bool needs_grad, std::function<void(Graph&)> fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward_fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Graph::ensure_grad(NodeId id) {
    Node& n = node(id);
    if (!n.grad.defined()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

Graph::NodeId Graph::input(Tensor v) { return push(std::move(v), false, nullptr); }

Graph::NodeId Graph::param(Parameter& p) {
    NodeId id = push(p.value, true, nullptr);
    node(id).bound = &p;
    return id;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const auto& k = kern::active();

    if (tb.ndim() == 2) {
        // Possibly-batched left operand against 2-D weights.
        const std::int64_t kk = tb.dim(0), n = tb.dim(1);
        std::int64_t m = 1;
        std::vector<std::int64_t> out_shape;
        if (ta.ndim() == 2) {
            m = ta.dim(0);
            out_shape = {m, n};
        } else if (ta.ndim() == 3) {
            m = ta.dim(0) * ta.dim(1);
            out_shape = {ta.dim(0), ta.dim(1), n};
        } else {
            throw std::invalid_argument("matmul: unsupported rank");
        }
        if (ta.dim(ta.ndim() - 1) != kk) throw std::invalid_argument("matmul: inner dim mismatch");
        Tensor out(out_shape);
        k.matmul_nn(out.data(), ta.data(), tb.data(), static_cast<std::size_t>(m),
                    static_cast<std::size_t>(kk), static_cast<std::size_t>(n), false);
        bool ng = needs(a) || needs(b);
        NodeId id = push(std::move(out), ng, nullptr);
        if (ng) {
            std::int64_t M = m, K = kk, N = n;
            node(id).backward_fn = [a, b, id, M, K, N](Graph& g) {
                const auto& kr = kern::active();
                const Tensor& go = g.node(id).grad;
                const Tensor& av = g.value(a);
                const Tensor& bv = g.value(b);
                if (g.needs(a)) {
                    Tensor& ga = g.ensure_grad(a);
                    kr.matmul_nt(ga.data(), go.data(), bv.data(), static_cast<std::size_t>(M),
                                 static_cast<std::size_t>(N), static_cast<std::size_t>(K), true);
                }
                if (g.needs(b)) {
                    Tensor& gb = g.ensure_grad(b);
                    kr.matmul_tn(gb.data(), av.data(), go.data(), static_cast<std::size_t>(K),
                                 static_cast<std::size_t>(M), static_cast<std::size_t>(N), true);
                }
            };
        }
        return id;
    }

    // Batched 3-D x 3-D.
    MatView va = as_batched(ta), vb = as_batched(tb);
    if (ta.ndim() != 3 || tb.ndim() != 3 || va.batch != vb.batch || va.cols != vb.rows)
        throw std::invalid_argument("matmul: batched shape mismatch");
    Tensor out({va.batch, va.rows, vb.cols});
    for (std::int64_t s = 0; s < va.batch; ++s) {
        k.matmul_nn(out.data() + s * va.rows * vb.cols, ta.data() + s * va.rows * va.cols,
                    tb.data() + s * vb.rows * vb.cols, static_cast<std::size_t>(va.rows),
                    static_cast<std::size_t>(va.cols), static_cast<std::size_t>(vb.cols), false);
    }
    bool ng = needs(a) || needs(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, b, id, va, vb](Graph& g) {
            const auto& kr = kern::active();
            const Tensor& go = g.node(id).grad;
            const Tensor& av = g.value(a);
            const Tensor& bv = g.value(b);
            const std::int64_t M = va.rows, K = va.cols, N = vb.cols;
            for (std::int64_t s = 0; s < va.batch; ++s) {
                const double* gslice = go.data() + s * M * N;
                if (g.needs(a)) {
                    kr.matmul_nt(g.ensure_grad(a).data() + s * M * K, gslice,
                                 bv.data() + s * K * N, static_cast<std::size_t>(M),
                                 static_cast<std::size_t>(N), static_cast<std::size_t>(K), true);
                }
                if (g.needs(b)) {
                    kr.matmul_tn(g.ensure_grad(b).data() + s * K * N, av.data() + s * M * K,
                                 gslice, static_cast<std::size_t>(K), static_cast<std::size_t>(M),
                                 static_cast<std::size_t>(N), true);
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::matmul_nt(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    MatView va = as_batched(ta), vb = as_batched(tb);
    if (va.batch != vb.batch || va.cols != vb.cols)
        throw std::invalid_argument("matmul_nt: shape mismatch");
    const auto& k = kern::active();
    std::vector<std::int64_t> out_shape = ta.ndim() == 3
                                              ? std::vector<std::int64_t>{va.batch, va.rows, vb.rows}
                                              : std::vector<std::int64_t>{va.rows, vb.rows};
    Tensor out(out_shape);
    for (std::int64_t s = 0; s < va.batch; ++s) {
        k.matmul_nt(out.data() + s * va.rows * vb.rows, ta.data() + s * va.rows * va.cols,
                    tb.data() + s * vb.rows * vb.cols, static_cast<std::size_t>(va.rows),
                    static_cast<std::size_t>(va.cols), static_cast<std::size_t>(vb.rows), false);
    }
    bool ng = needs(a) || needs(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, b, id, va, vb](Graph& g) {
            const auto& kr = kern::active();
            const Tensor& go = g.node(id).grad;
            const Tensor& av = g.value(a);
            const Tensor& bv = g.value(b);
            const std::int64_t M = va.rows, K = va.cols, N = vb.rows;
            for (std::int64_t s = 0; s < va.batch; ++s) {
                const double* gslice = go.data() + s * M * N;
                if (g.needs(a)) {
                    kr.matmul_nn(g.ensure_grad(a).data() + s * M * K, gslice,
                                 bv.data() + s * N * K, static_cast<std::size_t>(M),
                                 static_cast<std::size_t>(N), static_cast<std::size_t>(K), true);
                }
                if (g.needs(b)) {
                    kr.matmul_tn(g.ensure_grad(b).data() + s * N * K, gslice,
                                 av.data() + s * M * K, static_cast<std::size_t>(N),
                                 static_cast<std::size_t>(M), static_cast<std::size_t>(K), true);
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const auto& k = kern::active();

    if (ta.same_shape(tb)) {
        Tensor out = ta;
        k.vadd(out.data(), tb.data(), static_cast<std::size_t>(out.size()));
        bool ng = needs(a) || needs(b);
        NodeId id = push(std::move(out), ng, nullptr);
        if (ng) {
            node(id).backward_fn = [a, b, id](Graph& g) {
                const auto& kr = kern::active();
                const Tensor& go = g.node(id).grad;
                const auto n = static_cast<std::size_t>(go.size());
                if (g.needs(a)) kr.vadd(g.ensure_grad(a).data(), go.data(), n);
                if (g.needs(b)) kr.vadd(g.ensure_grad(b).data(), go.data(), n);
            };
        }
        return id;
    }

    // Bias broadcast over the last dim.
    if (tb.ndim() != 1 || tb.dim(0) != ta.dim(ta.ndim() - 1))
        throw std::invalid_argument("add: shapes incompatible");
    const std::int64_t d = tb.dim(0);
    const std::int64_t rows = ta.size() / d;
    Tensor out = ta;
    for (std::int64_t r = 0; r < rows; ++r)
        k.vadd(out.data() + r * d, tb.data(), static_cast<std::size_t>(d));
    bool ng = needs(a) || needs(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, b, id, rows, d](Graph& g) {
            const auto& kr = kern::active();
            const Tensor& go = g.node(id).grad;
            if (g.needs(a))
                kr.vadd(g.ensure_grad(a).data(), go.data(), static_cast<std::size_t>(go.size()));
            if (g.needs(b)) {
                Tensor& gb = g.ensure_grad(b);
                for (std::int64_t r = 0; r < rows; ++r)
                    kr.vadd(gb.data(), go.data() + r * d, static_cast<std::size_t>(d));
            }
        };
    }
    return id;
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
    const auto& k = kern::active();
    Tensor out = ta;
    k.vmul(out.data(), tb.data(), static_cast<std::size_t>(out.size()));
    bool ng = needs(a) || needs(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, b, id](Graph& g) {
            const Tensor& go = g.node(id).grad;
            const Tensor& av = g.value(a);
            const Tensor& bv = g.value(b);
            const std::int64_t n = go.size();
            if (g.needs(a)) {
                Tensor& ga = g.ensure_grad(a);
                for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
            }
            if (g.needs(b)) {
                Tensor& gb = g.ensure_grad(b);
                for (std::int64_t i = 0; i < n; ++i) gb[i] += go[i] * av[i];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::scale(NodeId a, double c) {
    const auto& k = kern::active();
    Tensor out = value(a);
    k.scale(out.data(), c, static_cast<std::size_t>(out.size()));
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id, c](Graph& g) {
            const auto& kr = kern::active();
            const Tensor& go = g.node(id).grad;
            kr.axpy(g.ensure_grad(a).data(), c, go.data(), static_cast<std::size_t>(go.size()));
        };
    }
    return id;
}

Graph::NodeId Graph::softmax(NodeId a) {
    const Tensor& ta = value(a);
    const std::int64_t d = ta.dim(ta.ndim() - 1);
    const std::int64_t rows = ta.size() / d;
    Tensor out(ta.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = ta.data() + r * d;
        double* y = out.data() + r * d;
        double mx = x[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        const double inv = 1.0 / s;
        for (std::int64_t j = 0; j < d; ++j) y[j] *= inv;
    }
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id, rows, d](Graph& g) {
            const Tensor& go = g.node(id).grad;
            const Tensor& y = g.value(id);
            Tensor& ga = g.ensure_grad(a);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* gr = go.data() + r * d;
                const double* yr = y.data() + r * d;
                double dot = 0.0;
                for (std::int64_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
                double* gar = ga.data() + r * d;
                for (std::int64_t j = 0; j < d; ++j) gar[j] += yr[j] * (gr[j] - dot);
            }
        };
    }
    return id;
}

Graph::NodeId Graph::layer_norm(NodeId a, NodeId gamma, NodeId beta, double eps) {
    const Tensor& ta = value(a);
    const Tensor& tg = value(gamma);
    const Tensor& tb = value(beta);
    const std::int64_t d = ta.dim(ta.ndim() - 1);
    if (tg.size() != d || tb.size() != d) throw std::invalid_argument("layer_norm: affine size");
    const std::int64_t rows = ta.size() / d;

    Tensor out(ta.shape());
    auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(ta.size()));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = ta.data() + r * d;
        double mu = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mu += x[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double c = x[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(r)] = inv;
        double* y = out.data() + r * d;
        double* xh = xhat->data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) {
            xh[j] = (x[j] - mu) * inv;
            y[j] = tg.data()[j] * xh[j] + tb.data()[j];
        }
    }
    bool ng = needs(a) || needs(gamma) || needs(beta);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, gamma, beta, id, rows, d, xhat, inv_std](Graph& g) {
            const Tensor& go = g.node(id).grad;
            const Tensor& tg = g.value(gamma);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* gr = go.data() + r * d;
                const double* xh = xhat->data() + r * d;
                if (g.needs(gamma)) {
                    Tensor& gg = g.ensure_grad(gamma);
                    for (std::int64_t j = 0; j < d; ++j) gg[j] += gr[j] * xh[j];
                }
                if (g.needs(beta)) {
                    Tensor& gb = g.ensure_grad(beta);
                    for (std::int64_t j = 0; j < d; ++j) gb[j] += gr[j];
                }
                if (g.needs(a)) {
                    const double inv = (*inv_std)[static_cast<std::size_t>(r)];
                    double m1 = 0.0, m2 = 0.0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double dxh = gr[j] * tg.data()[j];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    double* gar = g.ensure_grad(a).data() + r * d;
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double dxh = gr[j] * tg.data()[j];
                        gar[j] += inv * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::gelu(NodeId a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape());
    for (std::int64_t i = 0; i < ta.size(); ++i) {
        const double x = ta[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id](Graph& g) {
            const Tensor& go = g.node(id).grad;
            const Tensor& x = g.value(a);
            Tensor& ga = g.ensure_grad(a);
            for (std::int64_t i = 0; i < x.size(); ++i) {
                const double xi = x[i];
                const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
                ga[i] += go[i] * (cdf + xi * pdf);
            }
        };
    }
    return id;
}

Graph::NodeId Graph::relu(NodeId a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape());
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id](Graph& g) {
            const Tensor& go = g.node(id).grad;
            const Tensor& x = g.value(a);
            Tensor& ga = g.ensure_grad(a);
            for (std::int64_t i = 0; i < x.size(); ++i)
                if (x[i] > 0.0) ga[i] += go[i];
        };
    }
    return id;
}

Graph::NodeId Graph::embedding(NodeId table, std::vector<std::int64_t> idx) {
    const Tensor& tt = value(table);
    if (tt.ndim() != 2) throw std::invalid_argument("embedding: table must be 2-D");
    const std::int64_t d = tt.dim(1);
    const auto b = static_cast<std::int64_t>(idx.size());
    Tensor out({b, d});
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t row = idx[static_cast<std::size_t>(i)];
        if (row < 0 || row >= tt.dim(0)) throw std::out_of_range("embedding: index out of range");
        for (std::int64_t j = 0; j < d; ++j) out[i * d + j] = tt[row * d + j];
    }
    bool ng = needs(table);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        auto indices = std::make_shared<std::vector<std::int64_t>>(std::move(idx));
        node(id).backward_fn = [table, id, d, indices](Graph& g) {
            const Tensor& go = g.node(id).grad;
            Tensor& gt = g.ensure_grad(table);
            for (std::size_t i = 0; i < indices->size(); ++i) {
                const std::int64_t row = (*indices)[i];
                for (std::int64_t j = 0; j < d; ++j)
                    gt[row * d + j] += go[static_cast<std::int64_t>(i) * d + j];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::mean_all(NodeId a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (std::int64_t i = 0; i < ta.size(); ++i) s += ta[i];
    const double n = static_cast<double>(ta.size());
    bool ng = needs(a);
    NodeId id = push(Tensor::scalar(s / n), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id, n](Graph& g) {
            const double go = g.node(id).grad[0];
            Tensor& ga = g.ensure_grad(a);
            const double inc = go / n;
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += inc;
        };
    }
    return id;
}

Graph::NodeId Graph::bce_with_logits(NodeId logits, std::vector<double> labels,
                                     std::vector<double> weights) {
    const Tensor& tz = value(logits);
    const auto b = static_cast<std::size_t>(tz.size());
    if (labels.size() != b || weights.size() != b)
        throw std::invalid_argument("bce_with_logits: size mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double z = tz[static_cast<std::int64_t>(i)];
        const double y = labels[i];
        // max(z,0) - z*y + log(1+exp(-|z|)), numerically stable
        loss += weights[i] * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
    }
    loss /= static_cast<double>(b);
    bool ng = needs(logits);
    NodeId id = push(Tensor::scalar(loss), ng, nullptr);
    if (ng) {
        auto lab = std::make_shared<std::vector<double>>(std::move(labels));
        auto wts = std::make_shared<std::vector<double>>(std::move(weights));
        node(id).backward_fn = [logits, id, lab, wts](Graph& g) {
            const double go = g.node(id).grad[0];
            const Tensor& z = g.value(logits);
            Tensor& gz = g.ensure_grad(logits);
            const double inv_b = 1.0 / static_cast<double>(z.size());
            for (std::int64_t i = 0; i < z.size(); ++i) {
                const auto ui = static_cast<std::size_t>(i);
                gz[i] += go * (*wts)[ui] * (sigmoid(z[i]) - (*lab)[ui]) * inv_b;
            }
        };
    }
    return id;
}

Graph::NodeId Graph::select_token(NodeId a, std::int64_t pos) {
    const Tensor& ta = value(a);
    if (ta.ndim() != 3) throw std::invalid_argument("select_token: expects (B,S,D)");
    const std::int64_t B = ta.dim(0), S = ta.dim(1), D = ta.dim(2);
    if (pos < 0 || pos >= S) throw std::out_of_range("select_token: position");
    Tensor out({B, D});
    for (std::int64_t i = 0; i < B; ++i)
        for (std::int64_t j = 0; j < D; ++j) out[i * D + j] = ta[(i * S + pos) * D + j];
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id, S, D, pos](Graph& g) {
            const Tensor& go = g.node(id).grad;
            Tensor& ga = g.ensure_grad(a);
            const std::int64_t B = go.dim(0);
            for (std::int64_t i = 0; i < B; ++i)
                for (std::int64_t j = 0; j < D; ++j)
                    ga[(i * S + pos) * D + j] += go[i * D + j];
        };
    }
    return id;
}

Graph::NodeId Graph::concat_seq(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_seq: empty");
    const Tensor& first = value(parts[0]);
    if (first.ndim() != 3) throw std::invalid_argument("concat_seq: expects (B,S,D) parts");
    const std::int64_t B = first.dim(0), D = first.dim(2);
    std::int64_t total_s = 0;
    bool ng = false;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        if (t.ndim() != 3 || t.dim(0) != B || t.dim(2) != D)
            throw std::invalid_argument("concat_seq: incompatible part");
        total_s += t.dim(1);
        ng = ng || needs(p);
    }
    Tensor out({B, total_s, D});
    std::int64_t offset = 0;
    for (NodeId p : parts) {
        const Tensor& t = value(p);
        const std::int64_t S = t.dim(1);
        for (std::int64_t i = 0; i < B; ++i)
            for (std::int64_t s = 0; s < S; ++s)
                for (std::int64_t j = 0; j < D; ++j)
                    out[(i * total_s + offset + s) * D + j] = t[(i * S + s) * D + j];
        offset += S;
    }
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        auto parts_copy = std::make_shared<std::vector<NodeId>>(parts);
        node(id).backward_fn = [parts_copy, id, B, total_s, D](Graph& g) {
            const Tensor& go = g.node(id).grad;
            std::int64_t offset = 0;
            for (NodeId p : *parts_copy) {
                const std::int64_t S = g.value(p).dim(1);
                if (g.needs(p)) {
                    Tensor& gp = g.ensure_grad(p);
                    for (std::int64_t i = 0; i < B; ++i)
                        for (std::int64_t s = 0; s < S; ++s)
                            for (std::int64_t j = 0; j < D; ++j)
                                gp[(i * S + s) * D + j] += go[(i * total_s + offset + s) * D + j];
                }
                offset += S;
            }
        };
    }
    return id;
}

Graph::NodeId Graph::feature_tokenize(NodeId x, NodeId w, NodeId b) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(b);
    if (tx.ndim() != 2 || tw.ndim() != 2 || !tw.same_shape(tb) || tx.dim(1) != tw.dim(0))
        throw std::invalid_argument("feature_tokenize: shapes");
    const std::int64_t B = tx.dim(0), P = tx.dim(1), D = tw.dim(1);
    Tensor out({B, P, D});
    for (std::int64_t i = 0; i < B; ++i)
        for (std::int64_t j = 0; j < P; ++j) {
            const double xv = tx[i * P + j];
            const double* wr = tw.data() + j * D;
            const double* br = tb.data() + j * D;
            double* o = out.data() + (i * P + j) * D;
            for (std::int64_t c = 0; c < D; ++c) o[c] = xv * wr[c] + br[c];
        }
    bool ng = needs(x) || needs(w) || needs(b);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [x, w, b, id, B, P, D](Graph& g) {
            const Tensor& go = g.node(id).grad;
            const Tensor& tx = g.value(x);
            const Tensor& tw = g.value(w);
            for (std::int64_t i = 0; i < B; ++i)
                for (std::int64_t j = 0; j < P; ++j) {
                    const double* gr = go.data() + (i * P + j) * D;
                    if (g.needs(w)) {
                        double* gw = g.ensure_grad(w).data() + j * D;
                        const double xv = tx[i * P + j];
                        for (std::int64_t c = 0; c < D; ++c) gw[c] += xv * gr[c];
                    }
                    if (g.needs(b)) {
                        double* gb = g.ensure_grad(b).data() + j * D;
                        for (std::int64_t c = 0; c < D; ++c) gb[c] += gr[c];
                    }
                    if (g.needs(x)) {
                        const double* wr = tw.data() + j * D;
                        double s = 0.0;
                        for (std::int64_t c = 0; c < D; ++c) s += gr[c] * wr[c];
                        g.ensure_grad(x)[i * P + j] += s;
                    }
                }
        };
    }
    return id;
}

Graph::NodeId Graph::split_heads(NodeId a, std::int64_t heads) {
    const Tensor& ta = value(a);
    if (ta.ndim() != 3 || ta.dim(2) % heads != 0)
        throw std::invalid_argument("split_heads: shape");
    const std::int64_t B = ta.dim(0), S = ta.dim(1), D = ta.dim(2), dh = D / heads;
    Tensor out({B * heads, S, dh});
    for (std::int64_t i = 0; i < B; ++i)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t s = 0; s < S; ++s)
                for (std::int64_t c = 0; c < dh; ++c)
                    out[((i * heads + h) * S + s) * dh + c] = ta[(i * S + s) * D + h * dh + c];
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id, B, S, D, dh, heads](Graph& g) {
            const Tensor& go = g.node(id).grad;
            Tensor& ga = g.ensure_grad(a);
            for (std::int64_t i = 0; i < B; ++i)
                for (std::int64_t h = 0; h < heads; ++h)
                    for (std::int64_t s = 0; s < S; ++s)
                        for (std::int64_t c = 0; c < dh; ++c)
                            ga[(i * S + s) * D + h * dh + c] +=
                                go[((i * heads + h) * S + s) * dh + c];
        };
    }
    return id;
}

Graph::NodeId Graph::merge_heads(NodeId a, std::int64_t heads) {
    const Tensor& ta = value(a);
    if (ta.ndim() != 3 || ta.dim(0) % heads != 0)
        throw std::invalid_argument("merge_heads: shape");
    const std::int64_t B = ta.dim(0) / heads, S = ta.dim(1), dh = ta.dim(2), D = dh * heads;
    Tensor out({B, S, D});
    for (std::int64_t i = 0; i < B; ++i)
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t s = 0; s < S; ++s)
                for (std::int64_t c = 0; c < dh; ++c)
                    out[(i * S + s) * D + h * dh + c] = ta[((i * heads + h) * S + s) * dh + c];
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id, B, S, D, dh, heads](Graph& g) {
            const Tensor& go = g.node(id).grad;
            Tensor& ga = g.ensure_grad(a);
            for (std::int64_t i = 0; i < B; ++i)
                for (std::int64_t h = 0; h < heads; ++h)
                    for (std::int64_t s = 0; s < S; ++s)
                        for (std::int64_t c = 0; c < dh; ++c)
                            ga[((i * heads + h) * S + s) * dh + c] +=
                                go[(i * S + s) * D + h * dh + c];
        };
    }
    return id;
}

Graph::NodeId Graph::reshape(NodeId a, std::vector<std::int64_t> shape) {
    const Tensor& ta = value(a);
    if (Tensor::count(shape) != ta.size()) throw std::invalid_argument("reshape: size mismatch");
    Tensor out(std::move(shape));
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i];
    bool ng = needs(a);
    NodeId id = push(std::move(out), ng, nullptr);
    if (ng) {
        node(id).backward_fn = [a, id](Graph& g) {
            const auto& kr = kern::active();
            const Tensor& go = g.node(id).grad;
            kr.vadd(g.ensure_grad(a).data(), go.data(), static_cast<std::size_t>(go.size()));
        };
    }
    return id;
}

void Graph::backward(NodeId loss) {
    Node& ln = node(loss);
    if (ln.value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    ensure_grad(loss).fill(1.0);
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = node(id);
        if (!n.grad.defined()) continue;  // not on the path to the loss
        if (n.backward_fn) n.backward_fn(*this);
        if (n.bound != nullptr) {
            const auto& kr = kern::active();
            kr.vadd(n.bound->grad.data(), n.grad.data(), static_cast<std::size_t>(n.grad.size()));
        }
    }
}

}  // namespace dxtab::nn
