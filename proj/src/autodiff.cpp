#include "actirisk/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace actirisk::nn {

Graph::NodeId Graph::emplace(Tensor value, bool requires_grad, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = requires_grad ? std::move(back) : std::function<void()>{};
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::leaf(Tensor value, bool requires_grad) {
    return emplace(std::move(value), requires_grad, {});
}

Tensor& Graph::grad_buf(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(check(id))];
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_live = true;
    }
    return n.grad;
}

double* Graph::grad_buf_if_needed(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(check(id))];
    if (!n.requires_grad) return nullptr;
    return grad_buf(id).ptr();
}

const Tensor& Graph::grad(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(check(id))];
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_live = true;
    }
    return n.grad;
}

// ---------------------------------------------------------------------------



Graph::NodeId Graph::conv1d(NodeId input, NodeId kernel, NodeId bias) {
    const Tensor& in = value(input);
    const Tensor& ker = value(kernel);
    const Tensor& b = value(bias);
    if (in.ndim() != 3 || ker.ndim() != 3 || b.ndim() != 1) {
        throw ValidationError("conv1d: expected input [N,L,Cin], kernel [K,Cin,Cout], bias [Cout]");
    }
    const int N = in.dim(0), L = in.dim(1), Ci = in.dim(2);
    const int K = ker.dim(0), Co = ker.dim(2);
    if (ker.dim(1) != Ci) {
        throw ValidationError("conv1d: kernel input channels " + std::to_string(ker.dim(1)) +
                              " != input channels " + std::to_string(Ci));
    }
    if (b.dim(0) != Co) throw ValidationError("conv1d: bias length != output channels");
    const int pl = (K - 1) / 2;

    Tensor out = Tensor::zeros({N, L, Co});
    {
        const double* ip = in.ptr();
        const double* kp = ker.ptr();
        const double* bp = b.ptr();
        double* op = out.ptr();
        for (int n = 0; n < N; ++n) {
            const double* inN = ip + static_cast<std::size_t>(n) * L * Ci;
            double* outN = op + static_cast<std::size_t>(n) * L * Co;
            for (int l = 0; l < L; ++l) {
                double* o = outN + static_cast<std::size_t>(l) * Co;
                for (int co = 0; co < Co; ++co) o[co] = bp[co];
                const int k0 = std::max(0, pl - l);
                const int k1 = std::min(K, L + pl - l);
                for (int k = k0; k < k1; ++k) {
                    const double* src = inN + static_cast<std::size_t>(l + k - pl) * Ci;
                    const double* kk = kp + static_cast<std::size_t>(k) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double a = src[ci];
                        const double* kr = kk + static_cast<std::size_t>(ci) * Co;
                        for (int co = 0; co < Co; ++co) o[co] += a * kr[co];
                    }
                }
            }
        }
    }

    const bool rg = requires_grad(input) || requires_grad(kernel) || requires_grad(bias);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, input, kernel, bias, N, L, Ci, K,
                                                     Co, pl]() {
            const double* go = nodes_[static_cast<std::size_t>(id)].grad.ptr();
            const double* ip = value(input).ptr();
            const double* kp = value(kernel).ptr();
            double* gi = grad_buf_if_needed(input);
            double* gk = grad_buf_if_needed(kernel);
            double* gb = grad_buf_if_needed(bias);
            for (int n = 0; n < N; ++n) {
                const double* goN = go + static_cast<std::size_t>(n) * L * Co;
                const double* inN = ip + static_cast<std::size_t>(n) * L * Ci;
                double* giN = gi ? gi + static_cast<std::size_t>(n) * L * Ci : nullptr;
                for (int l = 0; l < L; ++l) {
                    const double* g = goN + static_cast<std::size_t>(l) * Co;
                    if (gb) {
                        for (int co = 0; co < Co; ++co) gb[co] += g[co];
                    }
                    const int k0 = std::max(0, pl - l);
                    const int k1 = std::min(K, L + pl - l);
                    for (int k = k0; k < k1; ++k) {
                        const std::size_t srcoff = static_cast<std::size_t>(l + k - pl) * Ci;
                        const double* kk = kp + static_cast<std::size_t>(k) * Ci * Co;
                        if (gi) {
                            double* gid = giN + srcoff;
                            for (int ci = 0; ci < Ci; ++ci) {
                                const double* kr = kk + static_cast<std::size_t>(ci) * Co;
                                double acc = 0.0;
                                for (int co = 0; co < Co; ++co) acc += g[co] * kr[co];
                                gid[ci] += acc;
                            }
                        }
                        if (gk) {
                            const double* src = inN + srcoff;
                            double* gkk = gk + static_cast<std::size_t>(k) * Ci * Co;
                            for (int ci = 0; ci < Ci; ++ci) {
                                const double a = src[ci];
                                double* gkr = gkk + static_cast<std::size_t>(ci) * Co;
                                for (int co = 0; co < Co; ++co) gkr[co] += a * g[co];
                            }
                        }
                    }
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::per_component_affine(NodeId input, NodeId scale, NodeId shift) {
    const Tensor& in = value(input);
    const Tensor& sc = value(scale);
    const Tensor& sh = value(shift);
    if (in.ndim() < 1 || sc.ndim() != 1 || sh.ndim() != 1) {
        throw ValidationError("per_component_affine: expected input [...,C], scale [C], shift [C]");
    }
    const int C = in.dim(in.ndim() - 1);
    if (sc.dim(0) != C || sh.dim(0) != C) {
        throw ValidationError("per_component_affine: channel mismatch");
    }
    const std::int64_t rows = in.size() / C;

    Tensor out = Tensor::zeros(in.shape);
    {
        const double* ip = in.ptr();
        const double* sp = sc.ptr();
        const double* hp = sh.ptr();
        double* op = out.ptr();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* i = ip + r * C;
            double* o = op + r * C;
            for (int c = 0; c < C; ++c) o[c] = i[c] * sp[c] + hp[c];
        }
    }

    const bool rg = requires_grad(input) || requires_grad(scale) || requires_grad(shift);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, input, scale, shift, C, rows]() {
            const double* go = nodes_[static_cast<std::size_t>(id)].grad.ptr();
            const double* ip = value(input).ptr();
            const double* sp = value(scale).ptr();
            double* gi = grad_buf_if_needed(input);
            double* gs = grad_buf_if_needed(scale);
            double* gh = grad_buf_if_needed(shift);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* g = go + r * C;
                const double* i = ip + r * C;
                for (int c = 0; c < C; ++c) {
                    if (gi) gi[r * C + c] += g[c] * sp[c];
                    if (gs) gs[c] += g[c] * i[c];
                    if (gh) gh[c] += g[c];
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::relu(NodeId x) {
    const Tensor& in = value(x);
    Tensor out = in;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const bool rg = requires_grad(x);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, x]() {
            const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
            const Tensor& in = value(x);
            double* gi = grad_buf_if_needed(x);
            if (!gi) return;
            for (std::int64_t i = 0; i < g.size(); ++i) {
                if (in[i] > 0.0) gi[i] += g[i];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw ValidationError("add: shape mismatch");
    Tensor out = va;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    const bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b]() {
            const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
            if (double* ga = grad_buf_if_needed(a)) {
                for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (double* gb = grad_buf_if_needed(b)) {
                for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw ValidationError("mul: shape mismatch");
    Tensor out = va;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    const bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b]() {
            const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
            const Tensor& va = value(a);
            const Tensor& vb = value(b);
            if (double* ga = grad_buf_if_needed(a)) {
                for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
            }
            if (double* gb = grad_buf_if_needed(b)) {
                for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::dropout(NodeId x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout: rate must lie in [0,1)");
    if (!training || rate == 0.0) {
        // Identity; the rng stream is left untouched.
        const Tensor& in = value(x);
        Tensor out = in;
        const bool rg = requires_grad(x);
        NodeId id = emplace(std::move(out), rg, {});
        if (rg) {
            nodes_[static_cast<std::size_t>(id)].back = [this, id, x]() {
                const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
                if (double* gi = grad_buf_if_needed(x)) {
                    for (std::int64_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                }
            };
        }
        return id;
    }
    const Tensor& in = value(x);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask = Tensor::zeros(in.shape);
    for (std::int64_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    }
    Tensor out = in;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    const bool rg = requires_grad(x);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, x, mask = std::move(mask)]() {
            const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
            if (double* gi = grad_buf_if_needed(x)) {
                for (std::int64_t i = 0; i < g.size(); ++i) gi[i] += g[i] * mask[i];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::avg_pool_axis1(NodeId x) {
    const Tensor& in = value(x);
    if (in.ndim() != 3) throw ValidationError("avg_pool_axis1: expected a rank-3 tensor");
    const int A = in.dim(0), B = in.dim(1);
    std::vector<double> w(static_cast<std::size_t>(A) * B, 1.0 / B);
    return weighted_mean_axis1(x, std::move(w));
}

Graph::NodeId Graph::weighted_mean_axis1(NodeId x, std::vector<double> weights) {
    const Tensor& in = value(x);
    if (in.ndim() != 3) throw ValidationError("weighted_mean_axis1: expected a rank-3 tensor");
    const int A = in.dim(0), B = in.dim(1), C = in.dim(2);
    if (weights.size() != static_cast<std::size_t>(A) * B) {
        throw ValidationError("weighted_mean_axis1: weights length != A*B");
    }
    for (int a = 0; a < A; ++a) {
        double s = 0.0;
        for (int b = 0; b < B; ++b) s += weights[static_cast<std::size_t>(a) * B + b];
        if (std::fabs(s - 1.0) > 1e-9) {
            throw ValidationError("weighted_mean_axis1: row weights must sum to 1");
        }
    }

    Tensor out = Tensor::zeros({A, C});
    {
        const double* ip = in.ptr();
        double* op = out.ptr();
        for (int a = 0; a < A; ++a) {
            double* o = op + static_cast<std::size_t>(a) * C;
            for (int b = 0; b < B; ++b) {
                const double w = weights[static_cast<std::size_t>(a) * B + b];
                if (w == 0.0) continue;
                const double* i = ip + (static_cast<std::size_t>(a) * B + b) * C;
                for (int c = 0; c < C; ++c) o[c] += w * i[c];
            }
        }
    }

    const bool rg = requires_grad(x);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, x, A, B, C,
                                                     weights = std::move(weights)]() {
            const double* g = nodes_[static_cast<std::size_t>(id)].grad.ptr();
            double* gi = grad_buf_if_needed(x);
            if (!gi) return;
            for (int a = 0; a < A; ++a) {
                const double* gr = g + static_cast<std::size_t>(a) * C;
                for (int b = 0; b < B; ++b) {
                    const double w = weights[static_cast<std::size_t>(a) * B + b];
                    if (w == 0.0) continue;
                    double* gid = gi + (static_cast<std::size_t>(a) * B + b) * C;
                    for (int c = 0; c < C; ++c) gid[c] += w * gr[c];
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::reshape(NodeId x, std::vector<int> new_shape) {
    const Tensor& in = value(x);
    if (shape_numel(new_shape) != in.size()) {
        throw ValidationError("reshape: element count mismatch (" + shape_str(in.shape) +
                              " -> " + shape_str(new_shape) + ")");
    }
    Tensor out;
    out.shape = std::move(new_shape);
    out.data = in.data;
    const bool rg = requires_grad(x);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, x]() {
            const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
            if (double* gi = grad_buf_if_needed(x)) {
                for (std::int64_t i = 0; i < g.size(); ++i) gi[i] += g[i];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::dense(NodeId input, NodeId weights, NodeId bias) {
    const Tensor& in = value(input);
    const Tensor& w = value(weights);
    const Tensor& b = value(bias);
    if (in.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1) {
        throw ValidationError("dense: expected input [B,I], weights [I,O], bias [O]");
    }
    const int B = in.dim(0), I = in.dim(1), O = w.dim(1);
    if (w.dim(0) != I || b.dim(0) != O) throw ValidationError("dense: shape mismatch");

    Tensor out = Tensor::zeros({B, O});
    {
        const double* ip = in.ptr();
        const double* wp = w.ptr();
        const double* bp = b.ptr();
        double* op = out.ptr();
        for (int r = 0; r < B; ++r) {
            double* o = op + static_cast<std::size_t>(r) * O;
            for (int oo = 0; oo < O; ++oo) o[oo] = bp[oo];
            const double* i = ip + static_cast<std::size_t>(r) * I;
            for (int ii = 0; ii < I; ++ii) {
                const double a = i[ii];
                const double* wr = wp + static_cast<std::size_t>(ii) * O;
                for (int oo = 0; oo < O; ++oo) o[oo] += a * wr[oo];
            }
        }
    }

    const bool rg = requires_grad(input) || requires_grad(weights) || requires_grad(bias);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, input, weights, bias, B, I, O]() {
            const double* g = nodes_[static_cast<std::size_t>(id)].grad.ptr();
            const double* ip = value(input).ptr();
            const double* wp = value(weights).ptr();
            double* gi = grad_buf_if_needed(input);
            double* gw = grad_buf_if_needed(weights);
            double* gb = grad_buf_if_needed(bias);
            for (int r = 0; r < B; ++r) {
                const double* gr = g + static_cast<std::size_t>(r) * O;
                const double* i = ip + static_cast<std::size_t>(r) * I;
                if (gb) {
                    for (int oo = 0; oo < O; ++oo) gb[oo] += gr[oo];
                }
                for (int ii = 0; ii < I; ++ii) {
                    const double* wr = wp + static_cast<std::size_t>(ii) * O;
                    if (gi) {
                        double acc = 0.0;
                        for (int oo = 0; oo < O; ++oo) acc += gr[oo] * wr[oo];
                        gi[static_cast<std::size_t>(r) * I + ii] += acc;
                    }
                    if (gw) {
                        double* gwr = gw + static_cast<std::size_t>(ii) * O;
                        const double a = i[ii];
                        for (int oo = 0; oo < O; ++oo) gwr[oo] += a * gr[oo];
                    }
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::gradient_reversal(NodeId x, double lambda) {
    if (lambda < 0.0) throw ValidationError("gradient_reversal: lambda must be >= 0");
    Tensor out = value(x);
    const bool rg = requires_grad(x);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, x, lambda]() {
            const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
            if (double* gi = grad_buf_if_needed(x)) {
                for (std::int64_t i = 0; i < g.size(); ++i) gi[i] -= lambda * g[i];
            }
        };
    }
    return id;
}

Graph::NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, Tensor* running_mean,
                         Tensor* running_var, bool training, double momentum, double eps) {
    const Tensor& in = value(x);
    const Tensor& g = value(gamma);
    const Tensor& bt = value(beta);
    if (in.ndim() < 2 || g.ndim() != 1 || bt.ndim() != 1) {
        throw ValidationError("batch_norm: expected input [...,C], gamma [C], beta [C]");
    }
    const int C = in.dim(in.ndim() - 1);
    if (g.dim(0) != C || bt.dim(0) != C) throw ValidationError("batch_norm: channel mismatch");
    if (!running_mean || !running_var || running_mean->size() != C || running_var->size() != C) {
        throw ValidationError("batch_norm: running statistics must have C entries");
    }
    const std::int64_t rows = in.size() / C;

    std::vector<double> mean(C), var(C);
    if (training) {
        for (int c = 0; c < C; ++c) mean[c] = 0.0;
        for (std::int64_t r = 0; r < rows; ++r) {
            for (int c = 0; c < C; ++c) mean[c] += in[r * C + c];
        }
        for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(rows);
        for (int c = 0; c < C; ++c) var[c] = 0.0;
        for (std::int64_t r = 0; r < rows; ++r) {
            for (int c = 0; c < C; ++c) {
                const double d = in[r * C + c] - mean[c];
                var[c] += d * d;
            }
        }
        for (int c = 0; c < C; ++c) var[c] /= static_cast<double>(rows);
        for (int c = 0; c < C; ++c) {
            (*running_mean)[c] = (1.0 - momentum) * (*running_mean)[c] + momentum * mean[c];
            (*running_var)[c] = (1.0 - momentum) * (*running_var)[c] + momentum * var[c];
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = (*running_mean)[c];
            var[c] = (*running_var)[c];
        }
    }

    Tensor xhat = Tensor::zeros(in.shape);
    std::vector<double> inv_sd(C);
    for (int c = 0; c < C; ++c) inv_sd[c] = 1.0 / std::sqrt(var[c] + eps);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < C; ++c) {
            xhat[r * C + c] = (in[r * C + c] - mean[c]) * inv_sd[c];
        }
    }
    Tensor out = Tensor::zeros(in.shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < C; ++c) out[r * C + c] = g[c] * xhat[r * C + c] + bt[c];
    }

    const bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    NodeId id = emplace(std::move(out), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, x, gamma, beta, C, rows, training,
                                                     xhat = std::move(xhat),
                                                     inv_sd = std::move(inv_sd)]() {
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            const double* gp = value(gamma).ptr();
            double* gx = grad_buf_if_needed(x);
            double* gg = grad_buf_if_needed(gamma);
            double* gb = grad_buf_if_needed(beta);
            std::vector<double> sum_g(static_cast<std::size_t>(C), 0.0);
            std::vector<double> sum_gx(static_cast<std::size_t>(C), 0.0);
            for (std::int64_t r = 0; r < rows; ++r) {
                for (int c = 0; c < C; ++c) {
                    sum_g[static_cast<std::size_t>(c)] += go[r * C + c];
                    sum_gx[static_cast<std::size_t>(c)] += go[r * C + c] * xhat[r * C + c];
                }
            }
            if (gg) {
                for (int c = 0; c < C; ++c) gg[c] += sum_gx[static_cast<std::size_t>(c)];
            }
            if (gb) {
                for (int c = 0; c < C; ++c) gb[c] += sum_g[static_cast<std::size_t>(c)];
            }
            if (gx) {
                const double inv_rows = 1.0 / static_cast<double>(rows);
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (int c = 0; c < C; ++c) {
                        const double coef = gp[c] * inv_sd[static_cast<std::size_t>(c)];
                        if (training) {
                            gx[r * C + c] +=
                                coef * (go[r * C + c] -
                                        inv_rows * sum_g[static_cast<std::size_t>(c)] -
                                        xhat[r * C + c] * inv_rows *
                                            sum_gx[static_cast<std::size_t>(c)]);
                        } else {
                            gx[r * C + c] += coef * go[r * C + c];
                        }
                    }
                }
            }
        };
    }
    return id;
}

Graph::NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> labels,
                                    std::vector<std::uint8_t> mask) {
    const Tensor& z = value(logits);
    if (z.ndim() != 2) throw ValidationError("softmax_cross_entropy: expected logits [B,C]");
    const int B = z.dim(0), C = z.dim(1);
    if (labels.size() != static_cast<std::size_t>(B) || mask.size() != static_cast<std::size_t>(B)) {
        throw ValidationError("softmax_cross_entropy: labels/mask length != batch size");
    }
    int masked = 0;
    for (int r = 0; r < B; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        ++masked;
        if (labels[static_cast<std::size_t>(r)] < 0 || labels[static_cast<std::size_t>(r)] >= C) {
            throw ValidationError("softmax_cross_entropy: label out of range");
        }
    }
    if (masked == 0) throw ValidationError("softmax_cross_entropy: no labeled samples in batch");

    Tensor probs = Tensor::zeros({B, C});
    double loss = 0.0;
    for (int r = 0; r < B; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        const double* zr = z.ptr() + static_cast<std::size_t>(r) * C;
        double mx = zr[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, zr[c]);
        double denom = 0.0;
        for (int c = 0; c < C; ++c) denom += std::exp(zr[c] - mx);
        const double lse = mx + std::log(denom);
        for (int c = 0; c < C; ++c) probs[static_cast<std::size_t>(r) * C + c] =
            std::exp(zr[c] - lse);
        loss += lse - zr[labels[static_cast<std::size_t>(r)]];
    }
    loss /= masked;

    const bool rg = requires_grad(logits);
    NodeId id = emplace(Tensor::scalar(loss), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back =
            [this, id, logits, B, C, masked, labels = std::move(labels),
             mask = std::move(mask), probs = std::move(probs)]() {
                const double up = nodes_[static_cast<std::size_t>(id)].grad[0];
                double* gz = grad_buf_if_needed(logits);
                if (!gz) return;
                const double scale = up / masked;
                for (int r = 0; r < B; ++r) {
                    if (!mask[static_cast<std::size_t>(r)]) continue;
                    for (int c = 0; c < C; ++c) {
                        const double onehot = (c == labels[static_cast<std::size_t>(r)]) ? 1.0 : 0.0;
                        gz[static_cast<std::size_t>(r) * C + c] +=
                            scale * (probs[static_cast<std::size_t>(r) * C + c] - onehot);
                    }
                }
            };
    }
    return id;
}

Graph::NodeId Graph::sum_all(NodeId x) {
    const Tensor& in = value(x);
    double s = 0.0;
    for (const double v : in.data) s += v;
    const bool rg = requires_grad(x);
    NodeId id = emplace(Tensor::scalar(s), rg, {});
    if (rg) {
        nodes_[static_cast<std::size_t>(id)].back = [this, id, x]() {
            const double up = nodes_[static_cast<std::size_t>(id)].grad[0];
            if (double* gi = grad_buf_if_needed(x)) {
                const std::int64_t n = value(x).size();
                for (std::int64_t i = 0; i < n; ++i) gi[i] += up;
            }
        };
    }
    return id;
}

void Graph::backward(NodeId loss) {
    check(loss);
    if (backward_done_) throw ValidationError("Graph::backward: already run on this graph");
    if (value(loss).size() != 1) throw ValidationError("Graph::backward: loss must be scalar");
    backward_done_ = true;
    grad_buf(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.grad_live || !n.back) continue;
        n.back();
    }
}

// ---------------------------------------------------------------------------

AdamState AdamState::init_like(const std::vector<Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.push_back(Tensor::zeros(p->shape));
        s.v.push_back(Tensor::zeros(p->shape));
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ValidationError("adam_step: parameter/gradient/state count mismatch");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g)) throw ValidationError("adam_step: gradient shape mismatch");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::int64_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            if (!std::isfinite(gj)) {
                throw NumericError("adam_step: non-finite gradient in parameter tensor " +
                                   std::to_string(i));
            }
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

} // namespace actirisk::nn
