#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "modnet/parallel.hpp"
#include "modnet/rng.hpp"
#include "modnet/tape.hpp"

namespace modnet {

// ---- kernels shared by tape ops and standalone evaluation -------------------

// Numerically safe softmax over one row (max subtraction).
template <typename T>
inline void softmax_row(const T* z, T* out, int k) {
    T zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    T denom = T(0);
    for (int j = 0; j < k; ++j) {
        out[j] = std::exp(z[j] - zmax);
        denom += out[j];
    }
    T inv = T(1) / denom;
    for (int j = 0; j < k; ++j) out[j] *= inv;
}

template <typename T>
inline void log_softmax_row(const T* z, T* out, int k) {
    T zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    T denom = T(0);
    for (int j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    T logz = std::log(denom) + zmax;
    for (int j = 0; j < k; ++j) out[j] = z[j] - logz;
}

inline constexpr double kCrossEntropyClip = 1e-12;

// ---- standalone (non-tape) forms of the loss ops ----------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& z) {
    if (z.rank() != 1 || z.extent(0) < 1)
        throw ShapeError("softmax expects a rank-1 tensor, got " + shape_str(z.shape()));
    z.check_finite("softmax input");
    Tensor<T> out(z.shape());
    softmax_row(z.data(), out.data(), z.extent(0));
    return out;
}

template <typename T>
T cross_entropy(const Tensor<T>& q, int label) {
    if (q.rank() != 1)
        throw ShapeError("cross_entropy expects a rank-1 tensor");
    if (label < 0 || label >= q.extent(0))
        throw IndexError("cross_entropy label " + std::to_string(label) +
                         " out of range [0, " + std::to_string(q.extent(0)) + ")");
    T p = std::max(q[static_cast<std::size_t>(label)], static_cast<T>(kCrossEntropyClip));
    return -std::log(p);
}

// ---- conv1d ------------------------------------------------------------------

// Same padding: n_taps-1 zeros split left/right, the left side taking the
// extra when odd.
inline int conv_pad_left(int taps) { return taps / 2; }

// x: [N, C, L], w: [F, C, T], b: [F] -> y: [N, F, L]
// y[n,f,t] = b[f] + sum_c sum_k w[f,c,k] * x[n,c,t+k-pad_left]
template <typename T>
Var<T> conv1d(Tape<T>& tape, Var<T> x, Var<T> w, Var<T> b) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& wv = tape.value(w);
    const Tensor<T>& bv = tape.value(b);
    if (xv.rank() != 3 || wv.rank() != 3 || bv.rank() != 1)
        throw ShapeError("conv1d expects x[N,C,L], w[F,C,T], b[F]");
    const int n = xv.extent(0), c_in = xv.extent(1), len = xv.extent(2);
    const int f_out = wv.extent(0), taps = wv.extent(2);
    if (wv.extent(1) != c_in)
        throw ShapeError("conv1d channel mismatch: input has " + std::to_string(c_in) +
                         " channels, weights expect " + std::to_string(wv.extent(1)));
    if (bv.extent(0) != f_out)
        throw ShapeError("conv1d bias extent != filter count");
    const int pl = conv_pad_left(taps);

    Tensor<T> y(Shape{n, f_out, len});
    parallel_for(static_cast<std::size_t>(n) * f_out, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const int in = static_cast<int>(i) / f_out;
            const int f = static_cast<int>(i) % f_out;
            T* yp = y.data() + i * len;
            const T bias = bv[static_cast<std::size_t>(f)];
            for (int t = 0; t < len; ++t) yp[t] = bias;
            for (int c = 0; c < c_in; ++c) {
                const T* xp = xv.data() + (static_cast<std::size_t>(in) * c_in + c) * len;
                const T* wp = wv.data() + (static_cast<std::size_t>(f) * c_in + c) * taps;
                for (int k = 0; k < taps; ++k) {
                    const int s = k - pl;
                    const int t0 = std::max(0, -s);
                    const int t1 = std::min(len, len - s);
                    const T wk = wp[k];
                    const T* xs = xp + s;
                    for (int t = t0; t < t1; ++t) yp[t] += wk * xs[t];
                }
            }
        }
    });

    int ix = x.id, iw = w.id, ib = b.id;
    return tape.push(std::move(y), {x, w, b}, [=](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& xv2 = t.value(Var<T>{ix});
        const Tensor<T>& wv2 = t.value(Var<T>{iw});
        if (t.needs_grad(ib)) {
            Tensor<T>& gb = t.grad_acc(ib);
            for (int in = 0; in < n; ++in)
                for (int f = 0; f < f_out; ++f) {
                    const T* gp = g.data() + (static_cast<std::size_t>(in) * f_out + f) * len;
                    T acc = T(0);
                    for (int tt = 0; tt < len; ++tt) acc += gp[tt];
                    gb[static_cast<std::size_t>(f)] += acc;
                }
        }
        if (t.needs_grad(iw)) {
            Tensor<T>& gw = t.grad_acc(iw);
            // one (f, c) weight row per index: no cross-thread accumulation
            parallel_for(static_cast<std::size_t>(f_out) * c_in,
                         [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    const int f = static_cast<int>(i) / c_in;
                    const int c = static_cast<int>(i) % c_in;
                    T* gwp = gw.data() + i * taps;
                    for (int in = 0; in < n; ++in) {
                        const T* gp =
                            g.data() + (static_cast<std::size_t>(in) * f_out + f) * len;
                        const T* xp =
                            xv2.data() + (static_cast<std::size_t>(in) * c_in + c) * len;
                        for (int k = 0; k < taps; ++k) {
                            const int sh = k - pl;
                            const int t0 = std::max(0, -sh);
                            const int t1 = std::min(len, len - sh);
                            const T* xs = xp + sh;
                            T acc = T(0);
                            for (int tt = t0; tt < t1; ++tt) acc += gp[tt] * xs[tt];
                            gwp[k] += acc;
                        }
                    }
                }
            });
        }
        if (t.needs_grad(ix)) {
            Tensor<T>& gx = t.grad_acc(ix);
            parallel_for(static_cast<std::size_t>(n) * c_in,
                         [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    const int in = static_cast<int>(i) / c_in;
                    const int c = static_cast<int>(i) % c_in;
                    T* gxp = gx.data() + i * len;
                    for (int f = 0; f < f_out; ++f) {
                        const T* gp =
                            g.data() + (static_cast<std::size_t>(in) * f_out + f) * len;
                        const T* wp =
                            wv2.data() + (static_cast<std::size_t>(f) * c_in + c) * taps;
                        for (int k = 0; k < taps; ++k) {
                            const int sh = k - pl;
                            const int u0 = std::max(0, sh);
                            const int u1 = std::min(len, len + sh);
                            const T wk = wp[k];
                            const T* gs = gp - sh;
                            for (int u = u0; u < u1; ++u) gxp[u] += wk * gs[u];
                        }
                    }
                }
            });
        }
    });
}

// ---- dense -------------------------------------------------------------------

// x: [N, D], w: [M, D], b: [M] -> y: [N, M]
template <typename T>
Var<T> dense(Tape<T>& tape, Var<T> x, Var<T> w, Var<T> b) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& wv = tape.value(w);
    const Tensor<T>& bv = tape.value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
        throw ShapeError("dense expects x[N,D], w[M,D], b[M]");
    const int n = xv.extent(0), d = xv.extent(1), m = wv.extent(0);
    if (wv.extent(1) != d)
        throw ShapeError("dense shape mismatch: x has width " + std::to_string(d) +
                         ", weights expect " + std::to_string(wv.extent(1)));
    if (bv.extent(0) != m) throw ShapeError("dense bias extent != output width");

    Tensor<T> y(Shape{n, m});
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t in = lo; in < hi; ++in) {
            const T* xp = xv.data() + in * d;
            T* yp = y.data() + in * m;
            for (int im = 0; im < m; ++im) {
                const T* wp = wv.data() + static_cast<std::size_t>(im) * d;
                T acc = bv[static_cast<std::size_t>(im)];
                for (int k = 0; k < d; ++k) acc += wp[k] * xp[k];
                yp[im] = acc;
            }
        }
    });

    int ix = x.id, iw = w.id, ib = b.id;
    return tape.push(std::move(y), {x, w, b}, [=](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& xv2 = t.value(Var<T>{ix});
        const Tensor<T>& wv2 = t.value(Var<T>{iw});
        if (t.needs_grad(ib)) {
            Tensor<T>& gb = t.grad_acc(ib);
            for (int in = 0; in < n; ++in) {
                const T* gp = g.data() + static_cast<std::size_t>(in) * m;
                for (int im = 0; im < m; ++im) gb[static_cast<std::size_t>(im)] += gp[im];
            }
        }
        if (t.needs_grad(iw)) {
            Tensor<T>& gw = t.grad_acc(iw);
            // one output row per index
            parallel_for(static_cast<std::size_t>(m), [&](std::size_t lo, std::size_t hi) {
                for (std::size_t im = lo; im < hi; ++im) {
                    T* gwp = gw.data() + im * d;
                    for (int in = 0; in < n; ++in)
                        axpy(static_cast<std::size_t>(d),
                             g[static_cast<std::size_t>(in) * m + im],
                             xv2.data() + static_cast<std::size_t>(in) * d, gwp);
                }
            });
        }
        if (t.needs_grad(ix)) {
            Tensor<T>& gx = t.grad_acc(ix);
            parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
                for (std::size_t in = lo; in < hi; ++in) {
                    const T* gp = g.data() + in * m;
                    T* gxp = gx.data() + in * d;
                    for (int im = 0; im < m; ++im)
                        axpy(static_cast<std::size_t>(d), gp[im],
                             wv2.data() + static_cast<std::size_t>(im) * d, gxp);
                }
            });
        }
    });
}

// ---- maxpool -----------------------------------------------------------------

// x: [N, C, L] -> [N, C, (L-width)/stride + 1]; gradient routes to the first
// maximal element of each window.
template <typename T>
Var<T> maxpool1d(Tape<T>& tape, Var<T> x, int width, int stride) {
    const Tensor<T>& xv = tape.value(x);
    if (xv.rank() != 3) throw ShapeError("maxpool1d expects x[N,C,L]");
    if (width < 1 || stride < 1) throw ShapeError("maxpool1d width/stride must be >= 1");
    const int n = xv.extent(0), c = xv.extent(1), len = xv.extent(2);
    if (width > len)
        throw ShapeError("maxpool1d width " + std::to_string(width) +
                         " exceeds input length " + std::to_string(len));
    const int lo = (len - width) / stride + 1;

    Tensor<T> y(Shape{n, c, lo});
    auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * c * lo);
    std::size_t oi = 0;
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
            const T* xp = xv.data() + (static_cast<std::size_t>(in) * c + ic) * len;
            for (int ot = 0; ot < lo; ++ot, ++oi) {
                int base = ot * stride;
                int best = base;
                T bv = xp[base];
                for (int k = 1; k < width; ++k)
                    if (xp[base + k] > bv) {
                        bv = xp[base + k];
                        best = base + k;
                    }
                y[oi] = bv;
                (*argmax)[oi] = best;
            }
        }

    int ix = x.id;
    return tape.push(std::move(y), {x}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(ix)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        Tensor<T>& gx = t.grad_acc(ix);
        std::size_t gi = 0;
        for (int in = 0; in < n; ++in)
            for (int ic = 0; ic < c; ++ic) {
                T* gxp = gx.data() + (static_cast<std::size_t>(in) * c + ic) * len;
                for (int ot = 0; ot < lo; ++ot, ++gi) gxp[(*argmax)[gi]] += g[gi];
            }
    });
}

// ---- dropout -----------------------------------------------------------------

// Inverted dropout: in train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); identity in infer mode.
template <typename T>
Var<T> dropout(Tape<T>& tape, Var<T> x, double rate, Mode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must be in [0,1)");
    if (mode == Mode::Infer || rate == 0.0) return x;
    const Tensor<T>& xv = tape.value(x);
    auto mask = std::make_shared<Tensor<T>>(xv.shape());
    const T inv = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        T m = rng.uniform() < rate ? T(0) : inv;
        (*mask)[i] = m;
        y[i] = xv[i] * m;
    }
    int ix = x.id;
    return tape.push(std::move(y), {x}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(ix)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        Tensor<T>& gx = t.grad_acc(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
    });
}

template <typename T>
Var<T> relu_dropout(Tape<T>& tape, Var<T> x, double rate, Mode mode, Rng& rng) {
    return dropout(tape, relu(tape, x), rate, mode, rng);
}

// ---- concat / slice on the channel axis ---------------------------------------

template <typename T>
Var<T> concat_channels(Tape<T>& tape, Var<T> a, Var<T> b) {
    const Tensor<T>& va = tape.value(a);
    const Tensor<T>& vb = tape.value(b);
    if (va.rank() != 3 || vb.rank() != 3)
        throw ShapeError("concat_channels expects rank-3 operands");
    if (va.extent(0) != vb.extent(0) || va.extent(2) != vb.extent(2))
        throw ShapeError("concat_channels operands disagree: " + shape_str(va.shape()) +
                         " vs " + shape_str(vb.shape()));
    const int n = va.extent(0), c1 = va.extent(1), c2 = vb.extent(1), len = va.extent(2);
    Tensor<T> y(Shape{n, c1 + c2, len});
    for (int in = 0; in < n; ++in) {
        std::copy(va.data() + static_cast<std::size_t>(in) * c1 * len,
                  va.data() + static_cast<std::size_t>(in + 1) * c1 * len,
                  y.data() + static_cast<std::size_t>(in) * (c1 + c2) * len);
        std::copy(vb.data() + static_cast<std::size_t>(in) * c2 * len,
                  vb.data() + static_cast<std::size_t>(in + 1) * c2 * len,
                  y.data() + static_cast<std::size_t>(in) * (c1 + c2) * len +
                      static_cast<std::size_t>(c1) * len);
    }
    int ia = a.id, ib = b.id;
    return tape.push(std::move(y), {a, b}, [=](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(Var<T>{self});
        if (t.needs_grad(ia)) {
            Tensor<T>& ga = t.grad_acc(ia);
            for (int in = 0; in < n; ++in)
                axpy(static_cast<std::size_t>(c1) * len, T(1),
                     g.data() + static_cast<std::size_t>(in) * (c1 + c2) * len,
                     ga.data() + static_cast<std::size_t>(in) * c1 * len);
        }
        if (t.needs_grad(ib)) {
            Tensor<T>& gb = t.grad_acc(ib);
            for (int in = 0; in < n; ++in)
                axpy(static_cast<std::size_t>(c2) * len, T(1),
                     g.data() + static_cast<std::size_t>(in) * (c1 + c2) * len +
                         static_cast<std::size_t>(c1) * len,
                     gb.data() + static_cast<std::size_t>(in) * c2 * len);
        }
    });
}

// x: [N, C, L] -> [N, c1-c0, L]
template <typename T>
Var<T> slice_channels(Tape<T>& tape, Var<T> x, int c0, int c1) {
    const Tensor<T>& xv = tape.value(x);
    if (xv.rank() != 3) throw ShapeError("slice_channels expects rank-3 input");
    const int n = xv.extent(0), c = xv.extent(1), len = xv.extent(2);
    if (c0 < 0 || c1 > c || c0 >= c1)
        throw IndexError("slice_channels range [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") invalid for " + std::to_string(c) +
                         " channels");
    const int cs = c1 - c0;
    Tensor<T> y(Shape{n, cs, len});
    for (int in = 0; in < n; ++in)
        std::copy(xv.data() + (static_cast<std::size_t>(in) * c + c0) * len,
                  xv.data() + (static_cast<std::size_t>(in) * c + c1) * len,
                  y.data() + static_cast<std::size_t>(in) * cs * len);
    int ix = x.id;
    return tape.push(std::move(y), {x}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(ix)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        Tensor<T>& gx = t.grad_acc(ix);
        for (int in = 0; in < n; ++in)
            axpy(static_cast<std::size_t>(cs) * len, T(1),
                 g.data() + static_cast<std::size_t>(in) * cs * len,
                 gx.data() + (static_cast<std::size_t>(in) * c + c0) * len);
    });
}

// [N, C, L] -> [L, N, C]; the layout LSTM steps want.
template <typename T>
Var<T> seq_transpose(Tape<T>& tape, Var<T> x) {
    const Tensor<T>& xv = tape.value(x);
    if (xv.rank() != 3) throw ShapeError("seq_transpose expects rank-3 input");
    const int n = xv.extent(0), c = xv.extent(1), len = xv.extent(2);
    Tensor<T> y(Shape{len, n, c});
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
            const T* xp = xv.data() + (static_cast<std::size_t>(in) * c + ic) * len;
            for (int l = 0; l < len; ++l)
                y[(static_cast<std::size_t>(l) * n + in) * c + ic] = xp[l];
        }
    int ix = x.id;
    return tape.push(std::move(y), {x}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(ix)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        Tensor<T>& gx = t.grad_acc(ix);
        for (int in = 0; in < n; ++in)
            for (int ic = 0; ic < c; ++ic) {
                T* gxp = gx.data() + (static_cast<std::size_t>(in) * c + ic) * len;
                for (int l = 0; l < len; ++l)
                    gxp[l] += g[(static_cast<std::size_t>(l) * n + in) * c + ic];
            }
    });
}

// ---- LSTM ----------------------------------------------------------------------

namespace detail {

template <typename T>
struct LstmSaved {
    // per-timestep gate activations and cell states, each [N, H]
    std::vector<Tensor<T>> ig, fg, gg, og, cell, tanh_cell, hidden;
};

// y[n,j] += sum_k x[n,k] * w[j,k]   (x: [N,K], w: [J,K], y: [N,J])
template <typename T>
inline void matmul_wt(const T* x, const T* w, T* y, int n, int k, int j) {
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t in = lo; in < hi; ++in) {
            const T* xp = x + in * k;
            T* yp = y + in * j;
            for (int ij = 0; ij < j; ++ij) {
                const T* wp = w + static_cast<std::size_t>(ij) * k;
                T acc = T(0);
                for (int ik = 0; ik < k; ++ik) acc += xp[ik] * wp[ik];
                yp[ij] += acc;
            }
        }
    });
}

}  // namespace detail

// Standard LSTM over a sequence. x: [L, N, C]; wx: [4H, C]; wh: [4H, H];
// b: [4H]; gate row order i, f, g, o. Zero initial state. Returns the full
// hidden sequence [L, N, H] or only the final hidden state [N, H].
template <typename T>
Var<T> lstm(Tape<T>& tape, Var<T> x, Var<T> wx, Var<T> wh, Var<T> b,
            bool return_sequence = false) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& wxv = tape.value(wx);
    const Tensor<T>& whv = tape.value(wh);
    const Tensor<T>& bv = tape.value(b);
    if (xv.rank() != 3) throw ShapeError("lstm expects x[L,N,C]");
    const int len = xv.extent(0), n = xv.extent(1), c = xv.extent(2);
    if (whv.rank() != 2 || wxv.rank() != 2 || bv.rank() != 1)
        throw ShapeError("lstm parameter ranks invalid");
    const int h = whv.extent(1);
    if (wxv.extent(0) != 4 * h || wxv.extent(1) != c || whv.extent(0) != 4 * h ||
        bv.extent(0) != 4 * h)
        throw ShapeError("lstm parameter shapes inconsistent: wx " + shape_str(wxv.shape()) +
                         ", wh " + shape_str(whv.shape()) + ", b " + shape_str(bv.shape()) +
                         " for C=" + std::to_string(c) + ", H=" + std::to_string(h));

    auto saved = std::make_shared<detail::LstmSaved<T>>();
    auto& sv = *saved;
    sv.ig.reserve(len); sv.fg.reserve(len); sv.gg.reserve(len); sv.og.reserve(len);
    sv.cell.reserve(len); sv.tanh_cell.reserve(len); sv.hidden.reserve(len);

    Tensor<T> hprev(Shape{n, h});
    Tensor<T> cprev(Shape{n, h});
    Tensor<T> z(Shape{n, 4 * h});
    auto sigmoid = [](T v) { return T(1) / (T(1) + std::exp(-v)); };

    for (int l = 0; l < len; ++l) {
        for (int in = 0; in < n; ++in)
            for (int j = 0; j < 4 * h; ++j)
                z.at(in, j) = bv[static_cast<std::size_t>(j)];
        const T* xt = xv.data() + static_cast<std::size_t>(l) * n * c;
        detail::matmul_wt(xt, wxv.data(), z.data(), n, c, 4 * h);
        detail::matmul_wt(hprev.data(), whv.data(), z.data(), n, h, 4 * h);

        Tensor<T> ig(Shape{n, h}), fg(Shape{n, h}), gg(Shape{n, h}), og(Shape{n, h});
        Tensor<T> cell(Shape{n, h}), tch(Shape{n, h}), hid(Shape{n, h});
        for (int in = 0; in < n; ++in)
            for (int j = 0; j < h; ++j) {
                T zi = z.at(in, j);
                T zf = z.at(in, h + j);
                T zg = z.at(in, 2 * h + j);
                T zo = z.at(in, 3 * h + j);
                T i_ = sigmoid(zi), f_ = sigmoid(zf), g_ = std::tanh(zg), o_ = sigmoid(zo);
                T c_ = f_ * cprev.at(in, j) + i_ * g_;
                T tc = std::tanh(c_);
                ig.at(in, j) = i_; fg.at(in, j) = f_; gg.at(in, j) = g_; og.at(in, j) = o_;
                cell.at(in, j) = c_; tch.at(in, j) = tc;
                hid.at(in, j) = o_ * tc;
            }
        hprev = hid;
        cprev = cell;
        sv.ig.push_back(std::move(ig)); sv.fg.push_back(std::move(fg));
        sv.gg.push_back(std::move(gg)); sv.og.push_back(std::move(og));
        sv.cell.push_back(std::move(cell)); sv.tanh_cell.push_back(std::move(tch));
        sv.hidden.push_back(std::move(hid));
    }

    Tensor<T> out;
    if (return_sequence) {
        out = Tensor<T>(Shape{len, n, h});
        for (int l = 0; l < len; ++l)
            std::copy(sv.hidden[static_cast<std::size_t>(l)].data(),
                      sv.hidden[static_cast<std::size_t>(l)].data() + static_cast<std::size_t>(n) * h,
                      out.data() + static_cast<std::size_t>(l) * n * h);
    } else {
        out = sv.hidden.back();
    }

    int ix = x.id, iwx = wx.id, iwh = wh.id, ib = b.id;
    return tape.push(std::move(out), {x, wx, wh, b}, [=](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& xv2 = t.value(Var<T>{ix});
        const Tensor<T>& wxv2 = t.value(Var<T>{iwx});
        const Tensor<T>& whv2 = t.value(Var<T>{iwh});
        const auto& s = *saved;

        const bool want_x = t.needs_grad(ix);
        const bool want_wx = t.needs_grad(iwx);
        const bool want_wh = t.needs_grad(iwh);
        const bool want_b = t.needs_grad(ib);

        Tensor<T> dh(Shape{n, h});
        Tensor<T> dc(Shape{n, h});
        Tensor<T> dz(Shape{n, 4 * h});
        Tensor<T> dwx_local(Shape{4 * h, c});
        Tensor<T> dwh_local(Shape{4 * h, h});
        Tensor<T> db_local(Shape{4 * h});
        Tensor<T>* gx = want_x ? &t.grad_acc(ix) : nullptr;

        for (int l = len - 1; l >= 0; --l) {
            if (return_sequence) {
                const T* gl = g.data() + static_cast<std::size_t>(l) * n * h;
                for (std::size_t i = 0; i < static_cast<std::size_t>(n) * h; ++i)
                    dh[i] += gl[i];
            } else if (l == len - 1) {
                for (std::size_t i = 0; i < static_cast<std::size_t>(n) * h; ++i)
                    dh[i] += g[i];
            }
            const auto li = static_cast<std::size_t>(l);
            const Tensor<T>& ig = s.ig[li];
            const Tensor<T>& fg = s.fg[li];
            const Tensor<T>& gg = s.gg[li];
            const Tensor<T>& og = s.og[li];
            const Tensor<T>& tch = s.tanh_cell[li];
            const Tensor<T>* cp = l > 0 ? &s.cell[li - 1] : nullptr;

            for (int in = 0; in < n; ++in)
                for (int j = 0; j < h; ++j) {
                    T dhv = dh.at(in, j);
                    T tc = tch.at(in, j);
                    T o_ = og.at(in, j);
                    T dcv = dc.at(in, j) + dhv * o_ * (T(1) - tc * tc);
                    T i_ = ig.at(in, j), f_ = fg.at(in, j), g_ = gg.at(in, j);
                    T cprev_v = cp ? cp->at(in, j) : T(0);
                    dz.at(in, j) = dcv * g_ * i_ * (T(1) - i_);
                    dz.at(in, h + j) = dcv * cprev_v * f_ * (T(1) - f_);
                    dz.at(in, 2 * h + j) = dcv * i_ * (T(1) - g_ * g_);
                    dz.at(in, 3 * h + j) = dhv * tc * o_ * (T(1) - o_);
                    dc.at(in, j) = dcv * f_;
                }

            const T* xt = xv2.data() + static_cast<std::size_t>(l) * n * c;
            const Tensor<T>* hp = l > 0 ? &s.hidden[li - 1] : nullptr;
            if (want_b)
                for (int in = 0; in < n; ++in)
                    for (int j = 0; j < 4 * h; ++j) db_local[static_cast<std::size_t>(j)] += dz.at(in, j);
            if (want_wx)
                for (int in = 0; in < n; ++in)
                    for (int j = 0; j < 4 * h; ++j)
                        axpy(static_cast<std::size_t>(c), dz.at(in, j),
                             xt + static_cast<std::size_t>(in) * c,
                             dwx_local.data() + static_cast<std::size_t>(j) * c);
            if (want_wh && hp)
                for (int in = 0; in < n; ++in)
                    for (int j = 0; j < 4 * h; ++j)
                        axpy(static_cast<std::size_t>(h), dz.at(in, j),
                             hp->data() + static_cast<std::size_t>(in) * h,
                             dwh_local.data() + static_cast<std::size_t>(j) * h);
            if (want_x) {
                T* gxt = gx->data() + static_cast<std::size_t>(l) * n * c;
                for (int in = 0; in < n; ++in)
                    for (int j = 0; j < 4 * h; ++j)
                        axpy(static_cast<std::size_t>(c), dz.at(in, j),
                             wxv2.data() + static_cast<std::size_t>(j) * c,
                             gxt + static_cast<std::size_t>(in) * c);
            }
            // dh_prev = dz . wh
            dh.fill(T(0));
            for (int in = 0; in < n; ++in)
                for (int j = 0; j < 4 * h; ++j)
                    axpy(static_cast<std::size_t>(h), dz.at(in, j),
                         whv2.data() + static_cast<std::size_t>(j) * h,
                         dh.data() + static_cast<std::size_t>(in) * h);
        }
        if (want_wx) axpy(dwx_local.size(), T(1), dwx_local.data(), t.grad_acc(iwx).data());
        if (want_wh) axpy(dwh_local.size(), T(1), dwh_local.data(), t.grad_acc(iwh).data());
        if (want_b) axpy(db_local.size(), T(1), db_local.data(), t.grad_acc(ib).data());
    });
}

// ---- classifier head ops -------------------------------------------------------

// z: [N, K] or [K] -> same shape, rows sum to 1
template <typename T>
Var<T> softmax_op(Tape<T>& tape, Var<T> z) {
    const Tensor<T>& zv = tape.value(z);
    const bool rowvec = zv.rank() == 1;
    if (!rowvec && zv.rank() != 2) throw ShapeError("softmax expects rank-1 or rank-2 input");
    const int n = rowvec ? 1 : zv.extent(0);
    const int k = rowvec ? zv.extent(0) : zv.extent(1);
    Tensor<T> y(zv.shape());
    for (int in = 0; in < n; ++in)
        softmax_row(zv.data() + static_cast<std::size_t>(in) * k,
                    y.data() + static_cast<std::size_t>(in) * k, k);
    int iz = z.id;
    return tape.push(std::move(y), {z}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(iz)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& y2 = t.value(Var<T>{self});
        Tensor<T>& gz = t.grad_acc(iz);
        for (int in = 0; in < n; ++in) {
            const T* yp = y2.data() + static_cast<std::size_t>(in) * k;
            const T* gp = g.data() + static_cast<std::size_t>(in) * k;
            T dot = T(0);
            for (int j = 0; j < k; ++j) dot += gp[j] * yp[j];
            T* gzp = gz.data() + static_cast<std::size_t>(in) * k;
            for (int j = 0; j < k; ++j) gzp[j] += yp[j] * (gp[j] - dot);
        }
    });
}

template <typename T>
Var<T> log_softmax_op(Tape<T>& tape, Var<T> z) {
    const Tensor<T>& zv = tape.value(z);
    if (zv.rank() != 2) throw ShapeError("log_softmax expects [N,K]");
    const int n = zv.extent(0), k = zv.extent(1);
    Tensor<T> y(zv.shape());
    for (int in = 0; in < n; ++in)
        log_softmax_row(zv.data() + static_cast<std::size_t>(in) * k,
                        y.data() + static_cast<std::size_t>(in) * k, k);
    int iz = z.id;
    return tape.push(std::move(y), {z}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(iz)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& y2 = t.value(Var<T>{self});
        Tensor<T>& gz = t.grad_acc(iz);
        for (int in = 0; in < n; ++in) {
            const T* lp = y2.data() + static_cast<std::size_t>(in) * k;
            const T* gp = g.data() + static_cast<std::size_t>(in) * k;
            T gsum = T(0);
            for (int j = 0; j < k; ++j) gsum += gp[j];
            T* gzp = gz.data() + static_cast<std::size_t>(in) * k;
            for (int j = 0; j < k; ++j) gzp[j] += gp[j] - std::exp(lp[j]) * gsum;
        }
    });
}

// q: [N, K] probabilities, labels: [N] -> per-example losses [N].
// -log(q[label]) with the probability floored at kCrossEntropyClip.
template <typename T>
Var<T> cross_entropy_op(Tape<T>& tape, Var<T> q, const std::vector<int>& labels) {
    const Tensor<T>& qv = tape.value(q);
    const bool rowvec = qv.rank() == 1;
    if (!rowvec && qv.rank() != 2) throw ShapeError("cross_entropy expects rank-1 or rank-2 input");
    const int n = rowvec ? 1 : qv.extent(0);
    const int k = rowvec ? qv.extent(0) : qv.extent(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("cross_entropy: label count != batch size");
    for (int label : labels)
        if (label < 0 || label >= k)
            throw IndexError("cross_entropy label " + std::to_string(label) +
                             " out of range [0, " + std::to_string(k) + ")");
    Tensor<T> y(Shape{n});
    auto labs = std::make_shared<std::vector<int>>(labels);
    for (int in = 0; in < n; ++in) {
        T p = std::max(qv[static_cast<std::size_t>(in) * k + labels[static_cast<std::size_t>(in)]],
                       static_cast<T>(kCrossEntropyClip));
        y[static_cast<std::size_t>(in)] = -std::log(p);
    }
    int iq = q.id;
    return tape.push(std::move(y), {q}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(iq)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& qv2 = t.value(Var<T>{iq});
        Tensor<T>& gq = t.grad_acc(iq);
        for (int in = 0; in < n; ++in) {
            std::size_t idx = static_cast<std::size_t>(in) * k +
                              (*labs)[static_cast<std::size_t>(in)];
            T p = std::max(qv2[idx], static_cast<T>(kCrossEntropyClip));
            gq[idx] += g[static_cast<std::size_t>(in)] * (-T(1) / p);
        }
    });
}

// logp: [N, K] log-probabilities, labels: [N] -> scalar mean NLL.
template <typename T>
Var<T> nll_mean(Tape<T>& tape, Var<T> logp, const std::vector<int>& labels) {
    const Tensor<T>& lv = tape.value(logp);
    if (lv.rank() != 2) throw ShapeError("nll_mean expects [N,K]");
    const int n = lv.extent(0), k = lv.extent(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("nll_mean: label count != batch size");
    T acc = T(0);
    for (int in = 0; in < n; ++in) {
        int label = labels[static_cast<std::size_t>(in)];
        if (label < 0 || label >= k) throw IndexError("nll_mean label out of range");
        acc -= lv[static_cast<std::size_t>(in) * k + label];
    }
    auto labs = std::make_shared<std::vector<int>>(labels);
    int il = logp.id;
    const T inv = T(1) / static_cast<T>(n);
    return tape.push(Tensor<T>::scalar(acc * inv), {logp}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(il)) return;
        T g = t.grad(Var<T>{self})[0] * inv;
        Tensor<T>& gl = t.grad_acc(il);
        for (int in = 0; in < n; ++in)
            gl[static_cast<std::size_t>(in) * k + (*labs)[static_cast<std::size_t>(in)]] -= g;
    });
}

}  // namespace modnet
