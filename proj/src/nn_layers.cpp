// Layer primitives with hand-written gradients. Parallel loops split work so
// each output element is produced by exactly one worker with a fixed inner
// summation order, which keeps results bit-identical for any job count.
#include "cortifield/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cortifield/errors.hpp"
#include "cortifield/parallel.hpp"

namespace cf {

namespace {

constexpr int64_t kRowChunk = 128; // fixed point-batch chunk; never depends on jobs

// dot with four accumulators; the plain dependent-accumulator loop is ~4x
// slower on our hosts.
template <typename T>
inline T dot_unrolled(const T* a, const T* b, int n) {
    T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += a[i] * b[i];
        a1 += a[i + 1] * b[i + 1];
        a2 += a[i + 2] * b[i + 2];
        a3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) a0 += a[i] * b[i];
    return (a0 + a1) + (a2 + a3);
}

template <typename T>
inline void axpy(T* y, const T* x, T alpha, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

} // namespace

// --- ReLU --------------------------------------------------------------------

template <typename T>
void relu_inplace(std::vector<T>& v) {
    for (T& x : v)
        if (x < T(0)) x = T(0);
}

template <typename T>
void relu_backward_inplace(std::vector<T>& dy, const std::vector<T>& y) {
    for (size_t i = 0; i < dy.size(); ++i)
        if (!(y[i] > T(0))) dy[i] = T(0);
}

// --- Conv3d --------------------------------------------------------------------

template <typename T>
Conv3d<T>::Conv3d(std::string name, int cin_, int cout_, int stride_, Rng& rng)
    : cin(cin_), cout(cout_), stride(stride_) {
    weight.init(name + ".weight", {cout, cin, 3, 3, 3});
    bias.init(name + ".bias", {cout});
    const double std_dev = std::sqrt(2.0 / (cin * 27.0));
    for (T& w : weight.value) w = static_cast<T>(rng.normal(0.0, std_dev));
}

template <typename T>
Tensor4<T> Conv3d<T>::forward(const Tensor4<T>& input) {
    require(input.c == cin, errc::shape_mismatch, "conv3d: input channels mismatch");
    cached_input_ = input;
    Tensor4<T> out;
    const int oz = (input.z - 1) / stride + 1;
    const int oy = (input.y - 1) / stride + 1;
    const int ox = (input.x - 1) / stride + 1;
    out.resize(cout, oz, oy, ox);

    ThreadPool::global().run_chunks(cout, [&](int64_t co) {
        const T* wbase = weight.value.data() + static_cast<size_t>(co) * cin * 27;
        T* obase = out.channel(static_cast<int>(co));
        std::vector<T> row(static_cast<size_t>(ox));
        for (int zo = 0; zo < oz; ++zo)
            for (int yo = 0; yo < oy; ++yo) {
                std::fill(row.begin(), row.end(), bias.value[static_cast<size_t>(co)]);
                for (int ci = 0; ci < cin; ++ci) {
                    const T* ibase = input.channel(ci);
                    const T* w = wbase + static_cast<size_t>(ci) * 27;
                    for (int kz = 0; kz < 3; ++kz) {
                        const int zi = zo * stride + kz - 1;
                        if (zi < 0 || zi >= input.z) continue;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int yi = yo * stride + ky - 1;
                            if (yi < 0 || yi >= input.y) continue;
                            const T* irow = ibase + (int64_t(zi) * input.y + yi) * input.x;
                            for (int kx = 0; kx < 3; ++kx) {
                                const T wv = w[kz * 9 + ky * 3 + kx];
                                if (wv == T(0)) continue;
                                // xo range keeping xi = xo*stride + kx - 1 in bounds
                                int xo_lo = 0;
                                while (xo_lo * stride + kx - 1 < 0) ++xo_lo;
                                int xo_hi = ox;
                                while (xo_hi > xo_lo && (xo_hi - 1) * stride + kx - 1 >= input.x) --xo_hi;
                                if (stride == 1) {
                                    const T* src = irow + (xo_lo + kx - 1);
                                    for (int xo = xo_lo; xo < xo_hi; ++xo) row[static_cast<size_t>(xo)] += wv * src[xo - xo_lo];
                                } else {
                                    for (int xo = xo_lo; xo < xo_hi; ++xo)
                                        row[static_cast<size_t>(xo)] += wv * irow[xo * stride + kx - 1];
                                }
                            }
                        }
                    }
                }
                T* orow = obase + (int64_t(zo) * oy + yo) * ox;
                for (int xo = 0; xo < ox; ++xo) orow[xo] = row[static_cast<size_t>(xo)];
            }
    });
    return out;
}

template <typename T>
Tensor4<T> Conv3d<T>::backward(const Tensor4<T>& dy, bool need_input_grad) {
    const Tensor4<T>& in = cached_input_;
    require(dy.c == cout, errc::shape_mismatch, "conv3d: upstream channels mismatch");

    // Weight and bias gradients: one worker per output channel.
    ThreadPool::global().run_chunks(cout, [&](int64_t co) {
        const T* dybase = dy.channel(static_cast<int>(co));
        T* wg = weight.grad.data() + static_cast<size_t>(co) * cin * 27;
        T bacc = 0;
        for (int64_t i = 0; i < dy.volume(); ++i) bacc += dybase[i];
        bias.grad[static_cast<size_t>(co)] += bacc;
        for (int ci = 0; ci < cin; ++ci) {
            const T* ibase = in.channel(ci);
            for (int kz = 0; kz < 3; ++kz)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        T acc = 0;
                        for (int zo = 0; zo < dy.z; ++zo) {
                            const int zi = zo * stride + kz - 1;
                            if (zi < 0 || zi >= in.z) continue;
                            for (int yo = 0; yo < dy.y; ++yo) {
                                const int yi = yo * stride + ky - 1;
                                if (yi < 0 || yi >= in.y) continue;
                                const T* dyrow = dybase + (int64_t(zo) * dy.y + yo) * dy.x;
                                const T* irow = ibase + (int64_t(zi) * in.y + yi) * in.x;
                                int xo_lo = 0;
                                while (xo_lo * stride + kx - 1 < 0) ++xo_lo;
                                int xo_hi = dy.x;
                                while (xo_hi > xo_lo && (xo_hi - 1) * stride + kx - 1 >= in.x) --xo_hi;
                                if (stride == 1) {
                                    const T* src = irow + (xo_lo + kx - 1);
                                    acc += dot_unrolled(dyrow + xo_lo, src, xo_hi - xo_lo);
                                } else {
                                    for (int xo = xo_lo; xo < xo_hi; ++xo) acc += dyrow[xo] * irow[xo * stride + kx - 1];
                                }
                            }
                        }
                        wg[ci * 27 + kz * 9 + ky * 3 + kx] += acc;
                    }
        }
    });

    Tensor4<T> dx;
    if (!need_input_grad) return dx;
    dx.resize(in.c, in.z, in.y, in.x);
    // Input gradient: one worker per input channel (disjoint writes).
    ThreadPool::global().run_chunks(cin, [&](int64_t ci) {
        T* dxbase = dx.channel(static_cast<int>(ci));
        for (int co = 0; co < cout; ++co) {
            const T* dybase = dy.channel(co);
            const T* w = weight.value.data() + (static_cast<size_t>(co) * cin + static_cast<size_t>(ci)) * 27;
            for (int kz = 0; kz < 3; ++kz)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const T wv = w[kz * 9 + ky * 3 + kx];
                        if (wv == T(0)) continue;
                        for (int zo = 0; zo < dy.z; ++zo) {
                            const int zi = zo * stride + kz - 1;
                            if (zi < 0 || zi >= in.z) continue;
                            for (int yo = 0; yo < dy.y; ++yo) {
                                const int yi = yo * stride + ky - 1;
                                if (yi < 0 || yi >= in.y) continue;
                                const T* dyrow = dybase + (int64_t(zo) * dy.y + yo) * dy.x;
                                T* dxrow = dxbase + (int64_t(zi) * in.y + yi) * in.x;
                                int xo_lo = 0;
                                while (xo_lo * stride + kx - 1 < 0) ++xo_lo;
                                int xo_hi = dy.x;
                                while (xo_hi > xo_lo && (xo_hi - 1) * stride + kx - 1 >= in.x) --xo_hi;
                                if (stride == 1) {
                                    axpy(dxrow + (xo_lo + kx - 1), dyrow + xo_lo, wv, xo_hi - xo_lo);
                                } else {
                                    for (int xo = xo_lo; xo < xo_hi; ++xo)
                                        dxrow[xo * stride + kx - 1] += wv * dyrow[xo];
                                }
                            }
                        }
                    }
        }
    });
    return dx;
}

// --- MaxPool3d -----------------------------------------------------------------

template <typename T>
Tensor4<T> MaxPool3d<T>::forward(const Tensor4<T>& input) {
    in_dims_ = {input.c, input.z, input.y, input.x};
    Tensor4<T> out;
    out.resize(input.c, (input.z + 1) / 2, (input.y + 1) / 2, (input.x + 1) / 2);
    argmax_.assign(static_cast<size_t>(out.size()), 0);
    int64_t o = 0;
    for (int ci = 0; ci < input.c; ++ci) {
        const T* ib = input.channel(ci);
        for (int zo = 0; zo < out.z; ++zo)
            for (int yo = 0; yo < out.y; ++yo)
                for (int xo = 0; xo < out.x; ++xo, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    int64_t best_idx = 0;
                    for (int dz = 0; dz < 2 && 2 * zo + dz < input.z; ++dz)
                        for (int dyy = 0; dyy < 2 && 2 * yo + dyy < input.y; ++dyy)
                            for (int dxx = 0; dxx < 2 && 2 * xo + dxx < input.x; ++dxx) {
                                const int64_t idx =
                                    (int64_t(2 * zo + dz) * input.y + (2 * yo + dyy)) * input.x + (2 * xo + dxx);
                                if (ib[idx] > best) {
                                    best = ib[idx];
                                    best_idx = idx;
                                }
                            }
                    out.v[static_cast<size_t>(o)] = best;
                    argmax_[static_cast<size_t>(o)] = int64_t(ci) * input.volume() + best_idx;
                }
    }
    return out;
}

template <typename T>
Tensor4<T> MaxPool3d<T>::backward(const Tensor4<T>& dy) {
    Tensor4<T> dx;
    dx.resize(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3]);
    for (size_t o = 0; o < argmax_.size(); ++o) dx.v[static_cast<size_t>(argmax_[o])] += dy.v[o];
    return dx;
}

// --- Fc --------------------------------------------------------------------------

template <typename T>
Fc<T>::Fc(std::string name, int in_, int out_, Rng& rng) : in(in_), out(out_) {
    weight.init(name + ".weight", {out, in});
    bias.init(name + ".bias", {out});
    const double std_dev = std::sqrt(2.0 / in);
    for (T& w : weight.value) w = static_cast<T>(rng.normal(0.0, std_dev));
}

template <typename T>
Fc<T>::Fc(std::string name, int in_, int out_, T weight_fill, T bias_fill) : in(in_), out(out_) {
    weight.init(name + ".weight", {out, in});
    bias.init(name + ".bias", {out});
    std::fill(weight.value.begin(), weight.value.end(), weight_fill);
    std::fill(bias.value.begin(), bias.value.end(), bias_fill);
}

template <typename T>
Matrix<T> Fc<T>::forward(const Matrix<T>& x) {
    require(x.cols == in, errc::shape_mismatch,
            weight.name + ": expected " + std::to_string(in) + " inputs, got " + std::to_string(x.cols));
    cached_input_ = x;
    Matrix<T> y;
    y.resize(x.rows, out);
    parallel_ranges(x.rows, kRowChunk, [&](int64_t rb, int64_t re, int64_t) {
        for (int64_t r = rb; r < re; ++r) {
            const T* xr = x.row(r);
            T* yr = y.row(r);
            for (int o = 0; o < out; ++o)
                yr[o] = dot_unrolled(xr, weight.value.data() + static_cast<size_t>(o) * in, in) +
                        bias.value[static_cast<size_t>(o)];
        }
    });
    return y;
}

template <typename T>
Matrix<T> Fc<T>::backward(const Matrix<T>& dy, bool need_input_grad) {
    const Matrix<T>& x = cached_input_;
    // Parameter gradients: per-chunk buffers reduced in chunk order.
    const int64_t n_chunks = (x.rows + kRowChunk - 1) / kRowChunk;
    std::vector<std::vector<T>> wg(static_cast<size_t>(n_chunks));
    std::vector<std::vector<T>> bg(static_cast<size_t>(n_chunks));
    parallel_ranges(x.rows, kRowChunk, [&](int64_t rb, int64_t re, int64_t chunk) {
        auto& w = wg[static_cast<size_t>(chunk)];
        auto& b = bg[static_cast<size_t>(chunk)];
        w.assign(weight.value.size(), T(0));
        b.assign(bias.value.size(), T(0));
        for (int64_t r = rb; r < re; ++r) {
            const T* xr = x.row(r);
            const T* dyr = dy.row(r);
            for (int o = 0; o < out; ++o) {
                const T g = dyr[o];
                if (g == T(0)) continue;
                axpy(w.data() + static_cast<size_t>(o) * in, xr, g, in);
                b[static_cast<size_t>(o)] += g;
            }
        }
    });
    for (int64_t c = 0; c < n_chunks; ++c) {
        for (size_t i = 0; i < weight.grad.size(); ++i) weight.grad[i] += wg[static_cast<size_t>(c)][i];
        for (size_t i = 0; i < bias.grad.size(); ++i) bias.grad[i] += bg[static_cast<size_t>(c)][i];
    }

    Matrix<T> dx;
    if (!need_input_grad) return dx;
    dx.resize(x.rows, in);
    parallel_ranges(x.rows, kRowChunk, [&](int64_t rb, int64_t re, int64_t) {
        for (int64_t r = rb; r < re; ++r) {
            const T* dyr = dy.row(r);
            T* dxr = dx.row(r);
            for (int o = 0; o < out; ++o) {
                const T g = dyr[o];
                if (g == T(0)) continue;
                axpy(dxr, weight.value.data() + static_cast<size_t>(o) * in, g, in);
            }
        }
    });
    return dx;
}

// --- CondBatchNorm -----------------------------------------------------------------

template <typename T>
CondBatchNorm<T>::CondBatchNorm(std::string name_, int features_, int cond_dim)
    : fc_gamma(name_ + ".gamma", cond_dim, features_, T(0), T(1)),
      fc_beta(name_ + ".beta", cond_dim, features_, T(0), T(0)),
      name(std::move(name_)),
      features(features_) {
    running_mean.assign(static_cast<size_t>(features_), T(0));
    running_var.assign(static_cast<size_t>(features_), T(1));
}

template <typename T>
Matrix<T> CondBatchNorm<T>::forward(const Matrix<T>& x, const Matrix<T>& cond, bool train) {
    require(x.cols == features, errc::shape_mismatch, name + ": feature width mismatch");
    require(cond.rows == x.rows, errc::shape_mismatch, name + ": cond/point batch mismatch");
    train_mode_ = train;
    const int64_t P = x.rows;

    gamma_ = fc_gamma.forward(cond);
    Matrix<T> beta = fc_beta.forward(cond);

    xhat_.resize(P, features);
    inv_std_.assign(static_cast<size_t>(features), T(0));
    std::vector<T> mean(static_cast<size_t>(features), T(0));
    if (train) {
        // Batch statistics over the point axis, serial per feature for a fixed
        // accumulation order.
        for (int64_t r = 0; r < P; ++r) {
            const T* xr = x.row(r);
            for (int f = 0; f < features; ++f) mean[static_cast<size_t>(f)] += xr[f];
        }
        for (int f = 0; f < features; ++f) mean[static_cast<size_t>(f)] /= static_cast<T>(P);
        std::vector<T> var(static_cast<size_t>(features), T(0));
        for (int64_t r = 0; r < P; ++r) {
            const T* xr = x.row(r);
            for (int f = 0; f < features; ++f) {
                const T d = xr[f] - mean[static_cast<size_t>(f)];
                var[static_cast<size_t>(f)] += d * d;
            }
        }
        for (int f = 0; f < features; ++f) {
            var[static_cast<size_t>(f)] /= static_cast<T>(P);
            inv_std_[static_cast<size_t>(f)] = T(1) / std::sqrt(var[static_cast<size_t>(f)] + static_cast<T>(kEps));
            running_mean[static_cast<size_t>(f)] = static_cast<T>(1.0 - kMomentum) * running_mean[static_cast<size_t>(f)] +
                                                   static_cast<T>(kMomentum) * mean[static_cast<size_t>(f)];
            running_var[static_cast<size_t>(f)] = static_cast<T>(1.0 - kMomentum) * running_var[static_cast<size_t>(f)] +
                                                  static_cast<T>(kMomentum) * var[static_cast<size_t>(f)];
        }
    } else {
        for (int f = 0; f < features; ++f) {
            mean[static_cast<size_t>(f)] = running_mean[static_cast<size_t>(f)];
            inv_std_[static_cast<size_t>(f)] =
                T(1) / std::sqrt(running_var[static_cast<size_t>(f)] + static_cast<T>(kEps));
        }
    }

    Matrix<T> y;
    y.resize(P, features);
    parallel_ranges(P, kRowChunk, [&](int64_t rb, int64_t re, int64_t) {
        for (int64_t r = rb; r < re; ++r) {
            const T* xr = x.row(r);
            const T* gr = gamma_.row(r);
            const T* br = beta.row(r);
            T* hr = xhat_.row(r);
            T* yr = y.row(r);
            for (int f = 0; f < features; ++f) {
                hr[f] = (xr[f] - mean[static_cast<size_t>(f)]) * inv_std_[static_cast<size_t>(f)];
                yr[f] = gr[f] * hr[f] + br[f];
            }
        }
    });
    return y;
}

template <typename T>
Matrix<T> CondBatchNorm<T>::backward(const Matrix<T>& dy, Matrix<T>& dcond) {
    const int64_t P = dy.rows;
    // Conditioning path: dgamma = dy .* xhat, dbeta = dy.
    Matrix<T> dgamma;
    dgamma.resize(P, features);
    parallel_ranges(P, kRowChunk, [&](int64_t rb, int64_t re, int64_t) {
        for (int64_t r = rb; r < re; ++r) {
            const T* dyr = dy.row(r);
            const T* hr = xhat_.row(r);
            T* dgr = dgamma.row(r);
            for (int f = 0; f < features; ++f) dgr[f] = dyr[f] * hr[f];
        }
    });
    Matrix<T> dc1 = fc_gamma.backward(dgamma);
    Matrix<T> dc2 = fc_beta.backward(dy);
    for (size_t i = 0; i < dcond.v.size(); ++i) dcond.v[i] += dc1.v[i] + dc2.v[i];

    Matrix<T> dxhat;
    dxhat.resize(P, features);
    parallel_ranges(P, kRowChunk, [&](int64_t rb, int64_t re, int64_t) {
        for (int64_t r = rb; r < re; ++r) {
            const T* dyr = dy.row(r);
            const T* gr = gamma_.row(r);
            T* dxr = dxhat.row(r);
            for (int f = 0; f < features; ++f) dxr[f] = dyr[f] * gr[f];
        }
    });

    Matrix<T> dx;
    dx.resize(P, features);
    if (!train_mode_) {
        parallel_ranges(P, kRowChunk, [&](int64_t rb, int64_t re, int64_t) {
            for (int64_t r = rb; r < re; ++r)
                for (int f = 0; f < features; ++f)
                    dx.row(r)[f] = dxhat.row(r)[f] * inv_std_[static_cast<size_t>(f)];
        });
        return dx;
    }
    // Train mode: gradients flow through the batch mean and variance.
    std::vector<T> m1(static_cast<size_t>(features), T(0)), m2(static_cast<size_t>(features), T(0));
    for (int64_t r = 0; r < P; ++r) {
        const T* dxr = dxhat.row(r);
        const T* hr = xhat_.row(r);
        for (int f = 0; f < features; ++f) {
            m1[static_cast<size_t>(f)] += dxr[f];
            m2[static_cast<size_t>(f)] += dxr[f] * hr[f];
        }
    }
    for (int f = 0; f < features; ++f) {
        m1[static_cast<size_t>(f)] /= static_cast<T>(P);
        m2[static_cast<size_t>(f)] /= static_cast<T>(P);
    }
    parallel_ranges(P, kRowChunk, [&](int64_t rb, int64_t re, int64_t) {
        for (int64_t r = rb; r < re; ++r) {
            const T* dxr = dxhat.row(r);
            const T* hr = xhat_.row(r);
            T* out = dx.row(r);
            for (int f = 0; f < features; ++f)
                out[f] = (dxr[f] - m1[static_cast<size_t>(f)] - hr[f] * m2[static_cast<size_t>(f)]) *
                         inv_std_[static_cast<size_t>(f)];
        }
    });
    return dx;
}

// --- explicit instantiations ---------------------------------------------------

template void relu_inplace<float>(std::vector<float>&);
template void relu_inplace<double>(std::vector<double>&);
template void relu_backward_inplace<float>(std::vector<float>&, const std::vector<float>&);
template void relu_backward_inplace<double>(std::vector<double>&, const std::vector<double>&);
template class Conv3d<float>;
template class Conv3d<double>;
template class MaxPool3d<float>;
template class MaxPool3d<double>;
template class Fc<float>;
template class Fc<double>;
template class CondBatchNorm<float>;
template class CondBatchNorm<double>;

} // namespace cf
