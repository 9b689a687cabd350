#include "meada/ops.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace meada {

namespace {

Node& node(Graph& g, NodeId id) { return g.nodes[static_cast<size_t>(id)]; }

bool wants(Graph& g, NodeId id) { return node(g, id).requires_grad; }

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                      shape_str(b.shape));
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Create the output node and attach the adjoint closure, which receives the
// graph and the output id. Parents are captured by id, never by reference.
template <class Fn>
NodeId unit(Graph& g, Tensor value, bool rg, const char* op, Fn&& backward) {
    NodeId out = g.emplace(std::move(value), rg, op, nullptr);
    if (rg) node(g, out).backward_fn = [out, f = std::forward<Fn>(backward)](Graph& gr) { f(gr, out); };
    return out;
}

void axpy(Tensor& dst, double s, const Tensor& src) {
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += s * src[i];
}

}  // namespace

NodeId add(Graph& g, NodeId a, NodeId b) {
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(b);
    const bool sa = va.numel() == 1 && !va.same_shape(vb);
    const bool sb = vb.numel() == 1 && !vb.same_shape(va);
    if (!va.same_shape(vb) && !sa && !sb) mismatch("add", va, vb);
    Tensor out = sa ? vb : va;
    if (sa) {
        const double s = va[0];
        for (auto& v : out.data) v += s;
    } else if (sb) {
        const double s = vb[0];
        for (auto& v : out.data) v += s;
    } else {
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    }
    return unit(g, std::move(out), wants(g, a) || wants(g, b), "add",
                [a, b, sa, sb](Graph& gr, NodeId self) {
                    const Tensor& go = gr.nodes[self].grad;
                    if (wants(gr, a)) {
                        Tensor& da = node(gr, a).grad;
                        if (sa)
                            da[0] += go.sum();
                        else
                            axpy(da, 1.0, go);
                    }
                    if (wants(gr, b)) {
                        Tensor& db = node(gr, b).grad;
                        if (sb)
                            db[0] += go.sum();
                        else
                            axpy(db, 1.0, go);
                    }
                });
}

NodeId add_bias(Graph& g, NodeId a, NodeId bias) {
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(bias);
    if (vb.ndim() != 1 || va.ndim() < 1 || va.shape.back() != vb.shape[0])
        mismatch("add_bias", va, vb);
    Tensor out = va;
    const std::int64_t c = vb.numel();
    const std::int64_t rows = va.numel() / c;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < c; ++j) out[r * c + j] += vb[j];
    return unit(g, std::move(out), wants(g, a) || wants(g, bias), "add_bias",
                [a, bias, rows, c](Graph& gr, NodeId self) {
                    const Tensor& go = gr.nodes[self].grad;
                    if (wants(gr, a)) axpy(node(gr, a).grad, 1.0, go);
                    if (wants(gr, bias)) {
                        Tensor& db = node(gr, bias).grad;
                        for (std::int64_t r = 0; r < rows; ++r)
                            for (std::int64_t j = 0; j < c; ++j) db[j] += go[r * c + j];
                    }
                });
}

NodeId mul(Graph& g, NodeId a, NodeId b) {
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(b);
    const bool sa = va.numel() == 1 && !va.same_shape(vb);
    const bool sb = vb.numel() == 1 && !vb.same_shape(va);
    if (!va.same_shape(vb) && !sa && !sb) mismatch("mul", va, vb);
    Tensor out = sa ? vb : va;
    if (sa) {
        const double s = va[0];
        for (auto& v : out.data) v *= s;
    } else if (sb) {
        const double s = vb[0];
        for (auto& v : out.data) v *= s;
    } else {
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    }
    return unit(g, std::move(out), wants(g, a) || wants(g, b), "mul",
                [a, b, sa, sb](Graph& gr, NodeId self) {
                    const Tensor& go = gr.nodes[self].grad;
                    const Tensor& va = gr.value(a);
                    const Tensor& vb = gr.value(b);
                    if (wants(gr, a)) {
                        Tensor& da = node(gr, a).grad;
                        if (sa) {
                            double s = 0.0;
                            for (std::int64_t i = 0; i < go.numel(); ++i) s += go[i] * vb[i];
                            da[0] += s;
                        } else if (sb) {
                            axpy(da, vb[0], go);
                        } else {
                            for (std::int64_t i = 0; i < go.numel(); ++i) da[i] += go[i] * vb[i];
                        }
                    }
                    if (wants(gr, b)) {
                        Tensor& db = node(gr, b).grad;
                        if (sb) {
                            double s = 0.0;
                            for (std::int64_t i = 0; i < go.numel(); ++i) s += go[i] * va[i];
                            db[0] += s;
                        } else if (sa) {
                            axpy(db, va[0], go);
                        } else {
                            for (std::int64_t i = 0; i < go.numel(); ++i) db[i] += go[i] * va[i];
                        }
                    }
                });
}

NodeId mul_scalar(Graph& g, NodeId a, double s) {
    Tensor out = g.value(a);
    for (auto& v : out.data) v *= s;
    return unit(g, std::move(out), wants(g, a), "mul_scalar", [a, s](Graph& gr, NodeId self) {
        axpy(node(gr, a).grad, s, gr.nodes[self].grad);
    });
}

NodeId sub(Graph& g, NodeId a, NodeId b) { return add(g, a, mul_scalar(g, b, -1.0)); }

NodeId matmul(Graph& g, NodeId a, NodeId b) {
    const Tensor& va = g.value(a);
    const Tensor& vb = g.value(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.shape[1] != vb.shape[0]) mismatch("matmul", va, vb);
    const int m = va.shape[0], k = va.shape[1], n = vb.shape[1];
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = &va.data[static_cast<size_t>(i) * k];
        double* orow = &out.data[static_cast<size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double s = arow[p];
            const double* brow = &vb.data[static_cast<size_t>(p) * n];
            for (int j = 0; j < n; ++j) orow[j] += s * brow[j];
        }
    }
    return unit(g, std::move(out), wants(g, a) || wants(g, b), "matmul",
                [a, b, m, k, n](Graph& gr, NodeId self) {
                    const Tensor& go = gr.nodes[self].grad;
                    const Tensor& va = gr.value(a);
                    const Tensor& vb = gr.value(b);
                    if (wants(gr, a)) {  // dA = G * B^T
                        Tensor& da = node(gr, a).grad;
                        for (int i = 0; i < m; ++i) {
                            const double* grow = &go.data[static_cast<size_t>(i) * n];
                            double* drow = &da.data[static_cast<size_t>(i) * k];
                            for (int p = 0; p < k; ++p) {
                                const double* brow = &vb.data[static_cast<size_t>(p) * n];
                                double s = 0.0;
                                for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                                drow[p] += s;
                            }
                        }
                    }
                    if (wants(gr, b)) {  // dB = A^T * G
                        Tensor& db = node(gr, b).grad;
                        for (int i = 0; i < m; ++i) {
                            const double* arow = &va.data[static_cast<size_t>(i) * k];
                            const double* grow = &go.data[static_cast<size_t>(i) * n];
                            for (int p = 0; p < k; ++p) {
                                const double s = arow[p];
                                double* drow = &db.data[static_cast<size_t>(p) * n];
                                for (int j = 0; j < n; ++j) drow[j] += s * grow[j];
                            }
                        }
                    }
                });
}

NodeId conv2d(Graph& g, NodeId input, NodeId kernel, Pad pad) {
    const Tensor& vi = g.value(input);
    const Tensor& vk = g.value(kernel);
    if (vi.ndim() != 4 || vk.ndim() != 4 || vi.shape[3] != vk.shape[2]) mismatch("conv2d", vi, vk);
    const int N = vi.shape[0], H = vi.shape[1], W = vi.shape[2], CI = vi.shape[3];
    const int KH = vk.shape[0], KW = vk.shape[1], CO = vk.shape[3];
    int OH, OW, py, px;
    if (pad == Pad::valid) {
        OH = H - KH + 1;
        OW = W - KW + 1;
        py = px = 0;
        if (OH <= 0 || OW <= 0) mismatch("conv2d", vi, vk);
    } else {
        if (KH % 2 == 0 || KW % 2 == 0)
            throw shape_error("conv2d: same padding needs odd kernel, got " + shape_str(vk.shape));
        OH = H;
        OW = W;
        py = (KH - 1) / 2;
        px = (KW - 1) / 2;
    }
    Tensor out({N, OH, OW, CO});
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                double* opx = &out.data[((static_cast<size_t>(n) * OH + oy) * OW + ox) * CO];
                for (int kh = 0; kh < KH; ++kh) {
                    const int iy = oy + kh - py;
                    if (iy < 0 || iy >= H) continue;
                    for (int kw = 0; kw < KW; ++kw) {
                        const int ix = ox + kw - px;
                        if (ix < 0 || ix >= W) continue;
                        const double* ipx =
                            &vi.data[((static_cast<size_t>(n) * H + iy) * W + ix) * CI];
                        const double* kmat =
                            &vk.data[(static_cast<size_t>(kh) * KW + kw) * CI * CO];
                        for (int ci = 0; ci < CI; ++ci) {
                            const double a = ipx[ci];
                            const double* krow = kmat + static_cast<size_t>(ci) * CO;
                            for (int co = 0; co < CO; ++co) opx[co] += a * krow[co];
                        }
                    }
                }
            }
    return unit(
        g, std::move(out), wants(g, input) || wants(g, kernel), "conv2d",
        [input, kernel, N, H, W, CI, KH, KW, CO, OH, OW, py, px](Graph& gr, NodeId self) {
            const Tensor& go = gr.nodes[self].grad;
            const Tensor& vi = gr.value(input);
            const Tensor& vk = gr.value(kernel);
            const bool wi = wants(gr, input), wk = wants(gr, kernel);
            Tensor* di = wi ? &node(gr, input).grad : nullptr;
            Tensor* dk = wk ? &node(gr, kernel).grad : nullptr;
            for (int n = 0; n < N; ++n)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        const double* gpx =
                            &go.data[((static_cast<size_t>(n) * OH + oy) * OW + ox) * CO];
                        for (int kh = 0; kh < KH; ++kh) {
                            const int iy = oy + kh - py;
                            if (iy < 0 || iy >= H) continue;
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ix = ox + kw - px;
                                if (ix < 0 || ix >= W) continue;
                                const size_t ioff =
                                    ((static_cast<size_t>(n) * H + iy) * W + ix) * CI;
                                const size_t koff = (static_cast<size_t>(kh) * KW + kw) * CI * CO;
                                if (wi) {
                                    double* dpx = &di->data[ioff];
                                    const double* kmat = &vk.data[koff];
                                    for (int ci = 0; ci < CI; ++ci) {
                                        const double* krow = kmat + static_cast<size_t>(ci) * CO;
                                        double s = 0.0;
                                        for (int co = 0; co < CO; ++co) s += gpx[co] * krow[co];
                                        dpx[ci] += s;
                                    }
                                }
                                if (wk) {
                                    const double* ipx = &vi.data[ioff];
                                    double* dkm = &dk->data[koff];
                                    for (int ci = 0; ci < CI; ++ci) {
                                        const double a = ipx[ci];
                                        double* drow = dkm + static_cast<size_t>(ci) * CO;
                                        for (int co = 0; co < CO; ++co) drow[co] += a * gpx[co];
                                    }
                                }
                            }
                        }
                    }
        });
}

NodeId maxpool2(Graph& g, NodeId a) {
    const Tensor& va = g.value(a);
    if (va.ndim() != 4 || va.shape[1] % 2 != 0 || va.shape[2] % 2 != 0)
        throw shape_error("maxpool2: needs NHWC with even H,W, got " + shape_str(va.shape));
    const int N = va.shape[0], H = va.shape[1], W = va.shape[2], C = va.shape[3];
    const int OH = H / 2, OW = W / 2;
    Tensor out({N, OH, OW, C});
    // which of the 4 window cells won; ties go to the first in scan order
    std::vector<std::uint8_t> argmax(static_cast<size_t>(out.numel()));
    std::int64_t o = 0;
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox)
                for (int c = 0; c < C; ++c, ++o) {
                    double best = -1e308;
                    std::uint8_t which = 0;
                    for (std::uint8_t w = 0; w < 4; ++w) {
                        const int iy = 2 * oy + (w >> 1);
                        const int ix = 2 * ox + (w & 1);
                        const double v = va.at4(n, iy, ix, c);
                        if (v > best) {
                            best = v;
                            which = w;
                        }
                    }
                    out[o] = best;
                    argmax[static_cast<size_t>(o)] = which;
                }
    return unit(g, std::move(out), wants(g, a), "maxpool2",
                [a, N, OH, OW, C, argmax = std::move(argmax)](Graph& gr, NodeId self) {
                    const Tensor& go = gr.nodes[self].grad;
                    Tensor& da = node(gr, a).grad;
                    std::int64_t o = 0;
                    for (int n = 0; n < N; ++n)
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox)
                                for (int c = 0; c < C; ++c, ++o) {
                                    const std::uint8_t w = argmax[static_cast<size_t>(o)];
                                    da.at4(n, 2 * oy + (w >> 1), 2 * ox + (w & 1), c) += go[o];
                                }
                });
}

NodeId relu(Graph& g, NodeId a) {
    Tensor out = g.value(a);
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return unit(g, std::move(out), wants(g, a), "relu", [a](Graph& gr, NodeId self) {
        const Tensor& go = gr.nodes[self].grad;
        const Tensor& va = gr.value(a);
        Tensor& da = node(gr, a).grad;
        for (std::int64_t i = 0; i < go.numel(); ++i)
            if (va[i] > 0.0) da[i] += go[i];
    });
}

NodeId log(Graph& g, NodeId a) {
    Tensor out = g.value(a);
    for (auto& v : out.data) v = std::log(v);
    return unit(g, std::move(out), wants(g, a), "log", [a](Graph& gr, NodeId self) {
        const Tensor& go = gr.nodes[self].grad;
        const Tensor& va = gr.value(a);
        Tensor& da = node(gr, a).grad;
        for (std::int64_t i = 0; i < go.numel(); ++i) da[i] += go[i] / va[i];
    });
}

NodeId exp(Graph& g, NodeId a) {
    Tensor out = g.value(a);
    for (auto& v : out.data) v = std::exp(v);
    return unit(g, std::move(out), wants(g, a), "exp", [a](Graph& gr, NodeId self) {
        const Node& me = gr.nodes[static_cast<size_t>(self)];
        Tensor& da = node(gr, a).grad;
        for (std::int64_t i = 0; i < me.grad.numel(); ++i) da[i] += me.grad[i] * me.value[i];
    });
}

NodeId square(Graph& g, NodeId a) {
    Tensor out = g.value(a);
    for (auto& v : out.data) v *= v;
    return unit(g, std::move(out), wants(g, a), "square", [a](Graph& gr, NodeId self) {
        const Tensor& go = gr.nodes[self].grad;
        const Tensor& va = gr.value(a);
        Tensor& da = node(gr, a).grad;
        for (std::int64_t i = 0; i < go.numel(); ++i) da[i] += 2.0 * va[i] * go[i];
    });
}

NodeId softplus(Graph& g, NodeId a) {
    Tensor out = g.value(a);
    // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
    for (auto& v : out.data) v = (v > 0.0 ? v : 0.0) + std::log1p(std::exp(-std::fabs(v)));
    return unit(g, std::move(out), wants(g, a), "softplus", [a](Graph& gr, NodeId self) {
        const Tensor& go = gr.nodes[self].grad;
        const Tensor& va = gr.value(a);
        Tensor& da = node(gr, a).grad;
        for (std::int64_t i = 0; i < go.numel(); ++i) da[i] += go[i] * sigmoid(va[i]);
    });
}

NodeId clamp_min(Graph& g, NodeId a, double lo) {
    Tensor out = g.value(a);
    for (auto& v : out.data) v = v > lo ? v : lo;
    return unit(g, std::move(out), wants(g, a), "clamp_min", [a, lo](Graph& gr, NodeId self) {
        const Tensor& go = gr.nodes[self].grad;
        const Tensor& va = gr.value(a);
        Tensor& da = node(gr, a).grad;
        for (std::int64_t i = 0; i < go.numel(); ++i)
            if (va[i] > lo) da[i] += go[i];
    });
}

NodeId sum(Graph& g, NodeId a) {
    Tensor out({1}, {g.value(a).sum()});
    return unit(g, std::move(out), wants(g, a), "sum", [a](Graph& gr, NodeId self) {
        const double s = gr.nodes[self].grad[0];
        for (auto& v : node(gr, a).grad.data) v += s;
    });
}

NodeId mean(Graph& g, NodeId a) {
    const std::int64_t n = g.value(a).numel();
    Tensor out({1}, {g.value(a).sum() / static_cast<double>(n)});
    return unit(g, std::move(out), wants(g, a), "mean", [a, n](Graph& gr, NodeId self) {
        const double s = gr.nodes[self].grad[0] / static_cast<double>(n);
        Tensor& da = node(gr, a).grad;
        for (auto& v : da.data) v += s;
    });
}

NodeId row_sum(Graph& g, NodeId a) {
    const Tensor& va = g.value(a);
    if (va.ndim() != 2) throw shape_error("row_sum: needs [N,C], got " + shape_str(va.shape));
    const int n = va.shape[0], c = va.shape[1];
    Tensor out({n});
    for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += va.at2(r, j);
        out[r] = s;
    }
    return unit(g, std::move(out), wants(g, a), "row_sum", [a, n, c](Graph& gr, NodeId self) {
        const Tensor& go = gr.nodes[self].grad;
        Tensor& da = node(gr, a).grad;
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < c; ++j) da.at2(r, j) += go[r];
    });
}

NodeId log_softmax(Graph& g, NodeId a) {
    const Tensor& va = g.value(a);
    if (va.ndim() != 2) throw shape_error("log_softmax: needs [N,C], got " + shape_str(va.shape));
    const int n = va.shape[0], c = va.shape[1];
    Tensor out = va;
    for (int r = 0; r < n; ++r) {
        double m = -1e308;
        for (int j = 0; j < c; ++j) m = std::max(m, va.at2(r, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(va.at2(r, j) - m);
        const double lse = m + std::log(s);
        for (int j = 0; j < c; ++j) out.at2(r, j) -= lse;
    }
    return unit(g, std::move(out), wants(g, a), "log_softmax", [a, n, c](Graph& gr, NodeId self) {
        const Node& me = gr.nodes[static_cast<size_t>(self)];
        Tensor& da = node(gr, a).grad;
        for (int r = 0; r < n; ++r) {
            double gs = 0.0;
            for (int j = 0; j < c; ++j) gs += me.grad.at2(r, j);
            for (int j = 0; j < c; ++j)
                da.at2(r, j) += me.grad.at2(r, j) - std::exp(me.value.at2(r, j)) * gs;
        }
    });
}

NodeId concat(Graph& g, const std::vector<NodeId>& parts, int axis) {
    if (parts.empty()) throw shape_error("concat: no inputs");
    const Tensor& first = g.value(parts[0]);
    const int nd = first.ndim();
    if (axis < 0 || axis >= nd)
        throw shape_error("concat: axis " + std::to_string(axis) + " out of range for " +
                          shape_str(first.shape));
    Shape oshape = first.shape;
    oshape[static_cast<size_t>(axis)] = 0;
    bool rg = false;
    for (NodeId p : parts) {
        const Tensor& v = g.value(p);
        if (v.ndim() != nd) mismatch("concat", first, v);
        for (int d = 0; d < nd; ++d)
            if (d != axis && v.shape[static_cast<size_t>(d)] != first.shape[static_cast<size_t>(d)])
                mismatch("concat", first, v);
        oshape[static_cast<size_t>(axis)] += v.shape[static_cast<size_t>(axis)];
        rg = rg || wants(g, p);
    }
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= first.shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < nd; ++d) inner *= first.shape[static_cast<size_t>(d)];
    Tensor out(oshape);
    const std::int64_t ostride = oshape[static_cast<size_t>(axis)] * inner;
    std::int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& v = g.value(p);
        const std::int64_t block = v.shape[static_cast<size_t>(axis)] * inner;
        for (std::int64_t r = 0; r < outer; ++r)
            for (std::int64_t i = 0; i < block; ++i) out[r * ostride + off + i] = v[r * block + i];
        off += block;
    }
    return unit(g, std::move(out), rg, "concat", [parts, outer, ostride](Graph& gr, NodeId self) {
        const Tensor& go = gr.nodes[self].grad;
        std::int64_t off = 0;
        for (NodeId p : parts) {
            const std::int64_t blk = gr.value(p).numel() / outer;
            if (wants(gr, p)) {
                Tensor& dp = node(gr, p).grad;
                for (std::int64_t r = 0; r < outer; ++r)
                    for (std::int64_t i = 0; i < blk; ++i) dp[r * blk + i] += go[r * ostride + off + i];
            }
            off += blk;
        }
    });
}

NodeId reshape(Graph& g, NodeId a, Shape s) {
    Tensor out = g.value(a).reshaped(std::move(s));
    return unit(g, std::move(out), wants(g, a), "reshape", [a](Graph& gr, NodeId self) {
        Tensor& da = node(gr, a).grad;
        const Tensor& go = gr.nodes[self].grad;
        for (std::int64_t i = 0; i < go.numel(); ++i) da[i] += go[i];
    });
}

}  // namespace meada
