#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "gemm.hpp"
#include "sadlr/autodiff.hpp"
#include "sadlr/errors.hpp"

namespace sadlr {

namespace {

template <typename T>
void require_rank(const Tensor<T>& x, int rank, const char* op) {
    if (x.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(x.shape()));
    }
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

// Sampling table for one axis of half-pixel-center bilinear resize.
struct AxisTaps {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<double> frac;
};

AxisTaps make_taps(int in, int factor) {
    const int out = in * factor;
    AxisTaps taps;
    taps.lo.resize(static_cast<std::size_t>(out));
    taps.hi.resize(static_cast<std::size_t>(out));
    taps.frac.resize(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) / factor - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int lo = static_cast<int>(std::floor(src));
        const auto k = static_cast<std::size_t>(o);
        taps.lo[k] = lo;
        taps.hi[k] = std::min(lo + 1, in - 1);
        taps.frac[k] = src - lo;
    }
    return taps;
}

} // namespace

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: cannot multiply " + shape_string(av.shape()) + " by " + shape_string(bv.shape()));
    }
    const int m = av.dim(0);
    const int k = av.dim(1);
    const int n = bv.dim(1);
    Tensor<T> out(Shape{m, n});
    detail::gemm_nn(m, n, k, av.ptr(), bv.ptr(), out.ptr());
    const std::array<Var, 2> ins{a, b};
    return t.record(std::move(out), ins, [a, b, m, n, k](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(a)) {
            detail::gemm_nt(m, k, n, g.ptr(), tp.value(b).ptr(), tp.grad_slot(a).ptr());
        }
        if (tp.requires_grad(b)) {
            detail::gemm_tn(k, n, m, tp.value(a).ptr(), g.ptr(), tp.grad_slot(b).ptr());
        }
    });
}

template <typename T>
Var transpose(Tape<T>& t, Var a) {
    const Tensor<T>& av = t.value(a);
    require_rank(av, 2, "transpose");
    const int m = av.dim(0);
    const int n = av.dim(1);
    Tensor<T> out(Shape{n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.at(j, i) = av.at(i, j);
        }
    }
    const std::array<Var, 1> ins{a};
    return t.record(std::move(out), ins, [a, m, n](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T>& ga = tp.grad_slot(a);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                ga.at(i, j) += g.at(j, i);
            }
        }
    });
}

template <typename T>
Var reshape(Tape<T>& t, Var a, Shape shape) {
    Tensor<T> out = t.value(a).reshaped(std::move(shape));
    const std::array<Var, 1> ins{a};
    return t.record(std::move(out), ins, [a](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T>& ga = tp.grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
        }
    });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    require_same(av, bv, "add");
    Tensor<T> out = av;
    out.add_(bv);
    const std::array<Var, 2> ins{a, b};
    return t.record(std::move(out), ins, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(a)) {
            tp.grad_slot(a).add_(g);
        }
        if (tp.requires_grad(b)) {
            tp.grad_slot(b).add_(g);
        }
    });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    require_same(av, bv, "mul");
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] * bv[i];
    }
    const std::array<Var, 2> ins{a, b};
    return t.record(std::move(out), ins, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(a)) {
            Tensor<T>& ga = tp.grad_slot(a);
            const Tensor<T>& bv2 = tp.value(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * bv2[i];
            }
        }
        if (tp.requires_grad(b)) {
            Tensor<T>& gb = tp.grad_slot(b);
            const Tensor<T>& av2 = tp.value(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i] * av2[i];
            }
        }
    });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T factor) {
    Tensor<T> out = t.value(a);
    for (auto& x : out.data()) {
        x *= factor;
    }
    const std::array<Var, 1> ins{a};
    return t.record(std::move(out), ins, [a, factor](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T>& ga = tp.grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * factor;
        }
    });
}

template <typename T>
Var sum(Tape<T>& t, Var a) {
    T total = 0;
    for (T x : t.value(a).data()) {
        total += x;
    }
    const std::array<Var, 1> ins{a};
    return t.record(Tensor<T>::scalar(total), ins, [a](Tape<T>& tp, const Tensor<T>& g) {
        for (auto& x : tp.grad_slot(a).data()) {
            x += g[0];
        }
    });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
    Tensor<T> out = t.value(x);
    for (auto& v : out.data()) {
        v = v > T(0) ? v : T(0);
    }
    const std::array<Var, 1> ins{x};
    return t.record(std::move(out), ins, [x](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& xv = tp.value(x);
        Tensor<T>& gx = tp.grad_slot(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv[i] > T(0)) {
                gx[i] += g[i];
            }
        }
    });
}

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, int stride, int pad) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const Tensor<T>& bv = t.value(b);
    require_rank(xv, 3, "conv2d input");
    require_rank(wv, 4, "conv2d weight");
    const int cin = xv.dim(0);
    const int height = xv.dim(1);
    const int width = xv.dim(2);
    const int cout = wv.dim(0);
    const int k = wv.dim(2);
    if (wv.dim(1) != cin || wv.dim(3) != k) {
        throw ShapeError("conv2d: weight " + shape_string(wv.shape()) + " does not fit input " +
                         shape_string(xv.shape()));
    }
    if (bv.rank() != 1 || bv.dim(0) != cout) {
        throw ShapeError("conv2d: bias " + shape_string(bv.shape()) + " does not fit " + std::to_string(cout) +
                         " output channels");
    }
    if (k % 2 == 0) {
        throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
    }
    if (stride < 1 || pad < 0 || height + 2 * pad < k || width + 2 * pad < k) {
        throw ConfigError("conv2d: window k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                          " pad=" + std::to_string(pad) + " does not fit input " + shape_string(xv.shape()));
    }
    const int oh = (height + 2 * pad - k) / stride + 1;
    const int ow = (width + 2 * pad - k) / stride + 1;
    const int rows = cin * k * k;
    const int cols = oh * ow;

    // im2col: col[(c, ky, kx), (oy, ox)]
    std::vector<T> col(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), T(0));
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) {
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < width) {
                            dst[oy * ow + ox] = xv.at(c, iy, ix);
                        }
                    }
                }
            }
        }
    }
    Tensor<T> out(Shape{cout, oh, ow});
    for (int o = 0; o < cout; ++o) {
        std::fill_n(out.ptr() + static_cast<std::size_t>(o) * cols, cols, bv[static_cast<std::size_t>(o)]);
    }
    detail::gemm_nn(cout, cols, rows, wv.ptr(), col.data(), out.ptr());

    const std::array<Var, 3> ins{x, w, b};
    return t.record(std::move(out), ins,
                    [x, w, b, col = std::move(col), cin, height, width, cout, k, stride, pad, oh, ow, rows,
                     cols](Tape<T>& tp, const Tensor<T>& g) {
                        if (tp.requires_grad(b)) {
                            Tensor<T>& gb = tp.grad_slot(b);
                            for (int o = 0; o < cout; ++o) {
                                T s = 0;
                                const T* gr = g.ptr() + static_cast<std::size_t>(o) * cols;
                                for (int j = 0; j < cols; ++j) {
                                    s += gr[j];
                                }
                                gb[static_cast<std::size_t>(o)] += s;
                            }
                        }
                        if (tp.requires_grad(w)) {
                            detail::gemm_nt(cout, rows, cols, g.ptr(), col.data(), tp.grad_slot(w).ptr());
                        }
                        if (tp.requires_grad(x)) {
                            std::vector<T> dcol(col.size(), T(0));
                            detail::gemm_tn(rows, cols, cout, tp.value(w).ptr(), g.ptr(), dcol.data());
                            Tensor<T>& gx = tp.grad_slot(x);
                            for (int c = 0; c < cin; ++c) {
                                for (int ky = 0; ky < k; ++ky) {
                                    for (int kx = 0; kx < k; ++kx) {
                                        const T* src =
                                            dcol.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
                                        for (int oy = 0; oy < oh; ++oy) {
                                            const int iy = oy * stride - pad + ky;
                                            if (iy < 0 || iy >= height) {
                                                continue;
                                            }
                                            for (int ox = 0; ox < ow; ++ox) {
                                                const int ix = ox * stride - pad + kx;
                                                if (ix >= 0 && ix < width) {
                                                    gx.at(c, iy, ix) += src[oy * ow + ox];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& gv = t.value(gamma);
    const Tensor<T>& bv = t.value(beta);
    require_rank(xv, 3, "layer_norm");
    const int channels = xv.dim(0);
    const int plane = xv.dim(1) * xv.dim(2);
    if (gv.shape() != Shape{channels} || bv.shape() != Shape{channels}) {
        throw ShapeError("layer_norm: affine " + shape_string(gv.shape()) + "/" + shape_string(bv.shape()) +
                         " does not fit " + shape_string(xv.shape()));
    }
    if (!(eps > T(0))) {
        throw ContractError("layer_norm: eps must be positive");
    }
    Tensor<T> xhat(xv.shape());
    std::vector<T> inv_std(static_cast<std::size_t>(plane));
    Tensor<T> out(xv.shape());
    for (int p = 0; p < plane; ++p) {
        T mean = 0;
        for (int c = 0; c < channels; ++c) {
            mean += xv[static_cast<std::size_t>(c) * plane + p];
        }
        mean /= channels;
        T var = 0;
        for (int c = 0; c < channels; ++c) {
            const T d = xv[static_cast<std::size_t>(c) * plane + p] - mean;
            var += d * d;
        }
        var /= channels;
        const T inv = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(p)] = inv;
        for (int c = 0; c < channels; ++c) {
            const std::size_t i = static_cast<std::size_t>(c) * plane + p;
            xhat[i] = (xv[i] - mean) * inv;
            out[i] = gv[static_cast<std::size_t>(c)] * xhat[i] + bv[static_cast<std::size_t>(c)];
        }
    }
    const std::array<Var, 3> ins{x, gamma, beta};
    return t.record(std::move(out), ins,
                    [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), channels,
                     plane](Tape<T>& tp, const Tensor<T>& g) {
                        if (tp.requires_grad(beta)) {
                            Tensor<T>& gb = tp.grad_slot(beta);
                            for (int c = 0; c < channels; ++c) {
                                for (int p = 0; p < plane; ++p) {
                                    gb[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>(c) * plane + p];
                                }
                            }
                        }
                        if (tp.requires_grad(gamma)) {
                            Tensor<T>& gg = tp.grad_slot(gamma);
                            for (int c = 0; c < channels; ++c) {
                                for (int p = 0; p < plane; ++p) {
                                    const std::size_t i = static_cast<std::size_t>(c) * plane + p;
                                    gg[static_cast<std::size_t>(c)] += g[i] * xhat[i];
                                }
                            }
                        }
                        if (tp.requires_grad(x)) {
                            const Tensor<T>& gv2 = tp.value(gamma);
                            Tensor<T>& gx = tp.grad_slot(x);
                            for (int p = 0; p < plane; ++p) {
                                T mean_dy = 0;
                                T mean_dy_xhat = 0;
                                for (int c = 0; c < channels; ++c) {
                                    const std::size_t i = static_cast<std::size_t>(c) * plane + p;
                                    const T dy = g[i] * gv2[static_cast<std::size_t>(c)];
                                    mean_dy += dy;
                                    mean_dy_xhat += dy * xhat[i];
                                }
                                mean_dy /= channels;
                                mean_dy_xhat /= channels;
                                const T inv = inv_std[static_cast<std::size_t>(p)];
                                for (int c = 0; c < channels; ++c) {
                                    const std::size_t i = static_cast<std::size_t>(c) * plane + p;
                                    const T dy = g[i] * gv2[static_cast<std::size_t>(c)];
                                    gx[i] += inv * (dy - mean_dy - xhat[i] * mean_dy_xhat);
                                }
                            }
                        }
                    });
}

template <typename T>
Var softmax_channel(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    require_rank(xv, 3, "softmax_channel");
    if (xv.dim(0) != 2) {
        throw ShapeError("softmax_channel: expected 2 channels, got " + shape_string(xv.shape()));
    }
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * static_cast<std::size_t>(xv.dim(2));
    Tensor<T> out(xv.shape());
    for (std::size_t p = 0; p < plane; ++p) {
        const T a = xv[p];
        const T b = xv[plane + p];
        const T m = std::max(a, b);
        const T ea = std::exp(a - m);
        const T eb = std::exp(b - m);
        const T s = ea + eb;
        out[p] = ea / s;
        out[plane + p] = eb / s;
    }
    const std::array<Var, 1> ins{x};
    return t.record(std::move(out), ins, [x, plane](Tape<T>& tp, const Tensor<T>& g) {
        // Probabilities are recomputed from the logits rather than stored.
        Tensor<T>& gx = tp.grad_slot(x);
        const Tensor<T>& xv2 = tp.value(x);
        for (std::size_t p = 0; p < plane; ++p) {
            const T a = xv2[p];
            const T b = xv2[plane + p];
            const T m = std::max(a, b);
            const T ea = std::exp(a - m);
            const T eb = std::exp(b - m);
            const T y0 = ea / (ea + eb);
            const T y1 = eb / (ea + eb);
            const T dot = g[p] * y0 + g[plane + p] * y1;
            gx[p] += y0 * (g[p] - dot);
            gx[plane + p] += y1 * (g[plane + p] - dot);
        }
    });
}

template <typename T>
Var bilinear_upsample(Tape<T>& t, Var x, int factor) {
    const Tensor<T>& xv = t.value(x);
    require_rank(xv, 3, "bilinear_upsample");
    if (factor < 1) {
        throw ContractError("bilinear_upsample: factor must be >= 1");
    }
    const int channels = xv.dim(0);
    const int height = xv.dim(1);
    const int width = xv.dim(2);
    const int oh = height * factor;
    const int ow = width * factor;
    AxisTaps ty = make_taps(height, factor);
    AxisTaps tx = make_taps(width, factor);
    Tensor<T> out(Shape{channels, oh, ow});
    for (int c = 0; c < channels; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            const auto yi = static_cast<std::size_t>(oy);
            const T fy = static_cast<T>(ty.frac[yi]);
            for (int ox = 0; ox < ow; ++ox) {
                const auto xi = static_cast<std::size_t>(ox);
                const T fx = static_cast<T>(tx.frac[xi]);
                const T top = xv.at(c, ty.lo[yi], tx.lo[xi]) * (T(1) - fx) + xv.at(c, ty.lo[yi], tx.hi[xi]) * fx;
                const T bot = xv.at(c, ty.hi[yi], tx.lo[xi]) * (T(1) - fx) + xv.at(c, ty.hi[yi], tx.hi[xi]) * fx;
                out.at(c, oy, ox) = top * (T(1) - fy) + bot * fy;
            }
        }
    }
    const std::array<Var, 1> ins{x};
    return t.record(std::move(out), ins,
                    [x, ty = std::move(ty), tx = std::move(tx), channels, oh, ow](Tape<T>& tp, const Tensor<T>& g) {
                        Tensor<T>& gx = tp.grad_slot(x);
                        for (int c = 0; c < channels; ++c) {
                            for (int oy = 0; oy < oh; ++oy) {
                                const auto yi = static_cast<std::size_t>(oy);
                                const T fy = static_cast<T>(ty.frac[yi]);
                                for (int ox = 0; ox < ow; ++ox) {
                                    const auto xi = static_cast<std::size_t>(ox);
                                    const T fx = static_cast<T>(tx.frac[xi]);
                                    const T go = g.at(c, oy, ox);
                                    gx.at(c, ty.lo[yi], tx.lo[xi]) += go * (T(1) - fy) * (T(1) - fx);
                                    gx.at(c, ty.lo[yi], tx.hi[xi]) += go * (T(1) - fy) * fx;
                                    gx.at(c, ty.hi[yi], tx.lo[xi]) += go * fy * (T(1) - fx);
                                    gx.at(c, ty.hi[yi], tx.hi[xi]) += go * fy * fx;
                                }
                            }
                        }
                    });
}

template <typename T>
Var embedding_lookup(Tape<T>& t, Var table, std::span<const int> ids) {
    const Tensor<T>& tv = t.value(table);
    require_rank(tv, 2, "embedding_lookup");
    const int vocab = tv.dim(0);
    const int dim = tv.dim(1);
    if (ids.empty()) {
        throw ShapeError("embedding_lookup: empty id list");
    }
    for (int id : ids) {
        if (id < 0 || id >= vocab) {
            throw std::out_of_range("embedding_lookup: id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(vocab));
        }
    }
    const int n = static_cast<int>(ids.size());
    Tensor<T> out(Shape{dim, n});
    for (int j = 0; j < n; ++j) {
        for (int d = 0; d < dim; ++d) {
            out.at(d, j) = tv.at(ids[static_cast<std::size_t>(j)], d);
        }
    }
    std::vector<int> id_copy(ids.begin(), ids.end());
    const std::array<Var, 1> ins{table};
    return t.record(std::move(out), ins, [table, id_copy = std::move(id_copy), dim](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T>& gt = tp.grad_slot(table);
        const int n2 = static_cast<int>(id_copy.size());
        for (int j = 0; j < n2; ++j) {
            for (int d = 0; d < dim; ++d) {
                gt.at(id_copy[static_cast<std::size_t>(j)], d) += g.at(d, j);
            }
        }
    });
}

template <typename T>
Var mean_columns(Tape<T>& t, Var x, int count) {
    const Tensor<T>& xv = t.value(x);
    require_rank(xv, 2, "mean_columns");
    const int dim = xv.dim(0);
    if (count < 1 || count > xv.dim(1)) {
        throw ContractError("mean_columns: count " + std::to_string(count) + " outside [1, " +
                            std::to_string(xv.dim(1)) + "]");
    }
    Tensor<T> out(Shape{dim});
    for (int d = 0; d < dim; ++d) {
        T s = 0;
        for (int j = 0; j < count; ++j) {
            s += xv.at(d, j);
        }
        out[static_cast<std::size_t>(d)] = s / count;
    }
    const std::array<Var, 1> ins{x};
    return t.record(std::move(out), ins, [x, dim, count](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T>& gx = tp.grad_slot(x);
        for (int d = 0; d < dim; ++d) {
            const T share = g[static_cast<std::size_t>(d)] / count;
            for (int j = 0; j < count; ++j) {
                gx.at(d, j) += share;
            }
        }
    });
}

template <typename T>
Var masked_spatial_mean(Tape<T>& t, Var x, std::span<const std::uint8_t> mask) {
    const Tensor<T>& xv = t.value(x);
    require_rank(xv, 3, "masked_spatial_mean");
    const int channels = xv.dim(0);
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * static_cast<std::size_t>(xv.dim(2));
    if (mask.size() != plane) {
        throw ShapeError("masked_spatial_mean: mask of " + std::to_string(mask.size()) + " pixels vs features " +
                         shape_string(xv.shape()));
    }
    std::vector<std::uint32_t> selected;
    for (std::size_t p = 0; p < plane; ++p) {
        if (mask[p] != 0) {
            selected.push_back(static_cast<std::uint32_t>(p));
        }
    }
    Tensor<T> out(Shape{channels});
    if (selected.empty()) {
        return t.constant(std::move(out));
    }
    const T count = static_cast<T>(selected.size());
    for (int c = 0; c < channels; ++c) {
        T s = 0;
        for (auto p : selected) {
            s += xv[static_cast<std::size_t>(c) * plane + p];
        }
        out[static_cast<std::size_t>(c)] = s / count;
    }
    const std::array<Var, 1> ins{x};
    return t.record(std::move(out), ins,
                    [x, selected = std::move(selected), channels, plane, count](Tape<T>& tp, const Tensor<T>& g) {
                        Tensor<T>& gx = tp.grad_slot(x);
                        for (int c = 0; c < channels; ++c) {
                            const T share = g[static_cast<std::size_t>(c)] / count;
                            for (auto p : selected) {
                                gx[static_cast<std::size_t>(c) * plane + p] += share;
                            }
                        }
                    });
}

template <typename T>
Var broadcast_spatial(Tape<T>& t, Var v, int height, int width) {
    const Tensor<T>& vv = t.value(v);
    require_rank(vv, 1, "broadcast_spatial");
    const int channels = vv.dim(0);
    const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    Tensor<T> out(Shape{channels, height, width});
    for (int c = 0; c < channels; ++c) {
        std::fill_n(out.ptr() + static_cast<std::size_t>(c) * plane, plane, vv[static_cast<std::size_t>(c)]);
    }
    const std::array<Var, 1> ins{v};
    return t.record(std::move(out), ins, [v, channels, plane](Tape<T>& tp, const Tensor<T>& g) {
        Tensor<T>& gv = tp.grad_slot(v);
        for (int c = 0; c < channels; ++c) {
            T s = 0;
            const T* row = g.ptr() + static_cast<std::size_t>(c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                s += row[p];
            }
            gv[static_cast<std::size_t>(c)] += s;
        }
    });
}

template <typename T>
Var concat_channels(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    require_rank(av, 3, "concat_channels");
    require_rank(bv, 3, "concat_channels");
    if (av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
        throw ShapeError("concat_channels: spatial mismatch " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
    }
    Tensor<T> out(Shape{av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.data().begin(), av.data().end(), out.data().begin());
    std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + static_cast<long>(av.size()));
    const std::size_t split = av.size();
    const std::array<Var, 2> ins{a, b};
    return t.record(std::move(out), ins, [a, b, split](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(a)) {
            Tensor<T>& ga = tp.grad_slot(a);
            for (std::size_t i = 0; i < split; ++i) {
                ga[i] += g[i];
            }
        }
        if (tp.requires_grad(b)) {
            Tensor<T>& gb = tp.grad_slot(b);
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] += g[split + i];
            }
        }
    });
}

template <typename T>
Var select_channel(Tape<T>& t, Var x, int channel) {
    const Tensor<T>& xv = t.value(x);
    require_rank(xv, 3, "select_channel");
    if (channel < 0 || channel >= xv.dim(0)) {
        throw ShapeError("select_channel: channel " + std::to_string(channel) + " outside " +
                         shape_string(xv.shape()));
    }
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * static_cast<std::size_t>(xv.dim(2));
    const std::size_t start = static_cast<std::size_t>(channel) * plane;
    std::vector<T> data(xv.data().begin() + static_cast<long>(start),
                        xv.data().begin() + static_cast<long>(start + plane));
    const std::array<Var, 1> ins{x};
    return t.record(Tensor<T>(Shape{xv.dim(1), xv.dim(2)}, std::move(data)), ins,
                    [x, start, plane](Tape<T>& tp, const Tensor<T>& g) {
                        Tensor<T>& gx = tp.grad_slot(x);
                        for (std::size_t p = 0; p < plane; ++p) {
                            gx[start + p] += g[p];
                        }
                    });
}

template <typename T>
Var dice_loss(Tape<T>& t, Var prob, std::span<const std::uint8_t> target, T eps) {
    const Tensor<T>& pv = t.value(prob);
    if (pv.size() != target.size()) {
        throw ShapeError("dice_loss: prediction " + shape_string(pv.shape()) + " vs target of " +
                         std::to_string(target.size()) + " pixels");
    }
    if (!(eps > T(0))) {
        throw ContractError("dice_loss: eps must be positive");
    }
    T inter = 0;
    T psum = 0;
    T gsum = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const T gi = target[i] != 0 ? T(1) : T(0);
        inter += pv[i] * gi;
        psum += pv[i];
        gsum += gi;
    }
    const T num = T(2) * inter + eps;
    const T den = psum + gsum + eps;
    std::vector<std::uint8_t> gt(target.begin(), target.end());
    const std::array<Var, 1> ins{prob};
    return t.record(Tensor<T>::scalar(T(1) - num / den), ins,
                    [prob, gt = std::move(gt), num, den](Tape<T>& tp, const Tensor<T>& g) {
                        Tensor<T>& gp = tp.grad_slot(prob);
                        const T den2 = den * den;
                        for (std::size_t i = 0; i < gp.size(); ++i) {
                            const T gi = gt[i] != 0 ? T(1) : T(0);
                            gp[i] += g[0] * (num - T(2) * gi * den) / den2;
                        }
                    });
}

template <typename T>
Var linear(Tape<T>& t, Var weight, Var bias, Var x) {
    const Tensor<T>& wv = t.value(weight);
    const Tensor<T>& bv = t.value(bias);
    const Tensor<T>& xv = t.value(x);
    if (wv.rank() != 2 || xv.rank() != 1 || wv.dim(1) != xv.dim(0) || bv.shape() != Shape{wv.dim(0)}) {
        throw ShapeError("linear: weight " + shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()) +
                         ", input " + shape_string(xv.shape()) + " are inconsistent");
    }
    const int out_dim = wv.dim(0);
    const int in_dim = wv.dim(1);
    Tensor<T> out = bv;
    detail::gemm_nn(out_dim, 1, in_dim, wv.ptr(), xv.ptr(), out.ptr());
    const std::array<Var, 3> ins{weight, bias, x};
    return t.record(std::move(out), ins, [weight, bias, x, out_dim, in_dim](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(bias)) {
            tp.grad_slot(bias).add_(g);
        }
        if (tp.requires_grad(weight)) {
            // outer product g x^T
            detail::gemm_nn(out_dim, in_dim, 1, g.ptr(), tp.value(x).ptr(), tp.grad_slot(weight).ptr());
        }
        if (tp.requires_grad(x)) {
            detail::gemm_tn(in_dim, 1, out_dim, tp.value(weight).ptr(), g.ptr(), tp.grad_slot(x).ptr());
        }
    });
}

#define SADLR_INSTANTIATE_OPS(T)                                                                      \
    template Var matmul<T>(Tape<T>&, Var, Var);                                                       \
    template Var transpose<T>(Tape<T>&, Var);                                                         \
    template Var reshape<T>(Tape<T>&, Var, Shape);                                                    \
    template Var add<T>(Tape<T>&, Var, Var);                                                          \
    template Var mul<T>(Tape<T>&, Var, Var);                                                          \
    template Var scale<T>(Tape<T>&, Var, T);                                                          \
    template Var sum<T>(Tape<T>&, Var);                                                               \
    template Var relu<T>(Tape<T>&, Var);                                                              \
    template Var conv2d<T>(Tape<T>&, Var, Var, Var, int, int);                                        \
    template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                           \
    template Var softmax_channel<T>(Tape<T>&, Var);                                                   \
    template Var bilinear_upsample<T>(Tape<T>&, Var, int);                                            \
    template Var embedding_lookup<T>(Tape<T>&, Var, std::span<const int>);                            \
    template Var mean_columns<T>(Tape<T>&, Var, int);                                                 \
    template Var masked_spatial_mean<T>(Tape<T>&, Var, std::span<const std::uint8_t>);                \
    template Var broadcast_spatial<T>(Tape<T>&, Var, int, int);                                       \
    template Var concat_channels<T>(Tape<T>&, Var, Var);                                              \
    template Var select_channel<T>(Tape<T>&, Var, int);                                               \
    template Var dice_loss<T>(Tape<T>&, Var, std::span<const std::uint8_t>, T);                       \
    template Var linear<T>(Tape<T>&, Var, Var, Var);

SADLR_INSTANTIATE_OPS(float)
SADLR_INSTANTIATE_OPS(double)

} // namespace sadlr
