#include "flowcap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flowcap/kernels.hpp"

namespace flowcap {

template <class T>
using Acc = kernels::accum_t<T>;

namespace {

template <class T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

enum class Broadcast { Same, TrailingVector };

template <class T>
Broadcast check_broadcast(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape() == b.shape()) return Broadcast::Same;
    if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) return Broadcast::TrailingVector;
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) + " with " +
                     shape_str(b.shape()));
}

template <class T>
void require_matrix(const char* op, const BasicTensor<T>& x) {
    if (x.rank() != 2) throw ShapeError(std::string(op) + ": expected matrix, got " + shape_str(x.shape()));
}

// Elementwise binary op with the trailing-vector broadcast rule. `fwd`
// computes the value, `da`/`db` the local partial derivatives.
template <class T, class Fwd, class Da, class Db>
BasicTensor<T> binary(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b, Fwd fwd, Da da, Db db) {
    const Broadcast mode = check_broadcast(op, a, b);
    const std::size_t n = a.numel();
    const std::size_t width = mode == Broadcast::Same ? n : b.numel();
    std::vector<T> out(n);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[mode == Broadcast::Same ? i : i % width]);
    return make_result<T>(op, a.shape(), std::move(out), {a.node(), b.node()},
                          [mode, width, da, db](TensorNode<T>& node) {
                              auto& na = *node.inputs[0];
                              auto& nb = *node.inputs[1];
                              const std::size_t n = node.value.size();
                              if (na.requires_grad) {
                                  T* ga = na.grad_buffer();
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const std::size_t j = mode == Broadcast::Same ? i : i % width;
                                      ga[i] += node.grad[i] * da(na.value[i], nb.value[j]);
                                  }
                              }
                              if (nb.requires_grad) {
                                  T* gb = nb.grad_buffer();
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const std::size_t j = mode == Broadcast::Same ? i : i % width;
                                      gb[j] += node.grad[i] * db(na.value[i], nb.value[j]);
                                  }
                              }
                          });
}

}  // namespace

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    return make_result<T>("scale", a.shape(), std::move(out), {a.node()}, [s](TensorNode<T>& node) {
        T* ga = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < node.value.size(); ++i) ga[i] += s * node.grad[i];
    });
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    std::vector<T> out(m * n);
    kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    return make_result<T>("matmul", Shape{m, n}, std::move(out), {a.node(), b.node()},
                          [m, k, n](TensorNode<T>& node) {
                              auto& na = *node.inputs[0];
                              auto& nb = *node.inputs[1];
                              if (na.requires_grad) {
                                  kernels::matmul_nt(node.grad.data(), nb.value.data(), na.grad_buffer(), m, n, k,
                                                     true);
                              }
                              if (nb.requires_grad) {
                                  kernels::matmul_tn(na.value.data(), node.grad.data(), nb.grad_buffer(), k, m, n,
                                                     true);
                              }
                          });
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    require_matrix("transpose", a);
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<T> out(m * n);
    auto av = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return make_result<T>("transpose", Shape{n, m}, std::move(out), {a.node()}, [m, n](TensorNode<T>& node) {
        T* ga = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += node.grad[j * m + i];
    });
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    // Evaluated in double through erfc: 1 + erf(z) cancels badly for z << 0.
    std::vector<T> out(x.numel());
    auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        out[i] = static_cast<T>(0.5 * v * std::erfc(-v / std::numbers::sqrt2));
    }
    return make_result<T>("gelu", x.shape(), std::move(out), {x.node()}, [](TensorNode<T>& node) {
        auto& in = *node.inputs[0];
        T* g = in.grad_buffer();
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        for (std::size_t i = 0; i < node.value.size(); ++i) {
            const double v = in.value[i];
            const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            g[i] += static_cast<T>(static_cast<double>(node.grad[i]) * (cdf + v * pdf));
        }
    });
}

template <class T>
BasicTensor<T> log(const BasicTensor<T>& x) {
    std::vector<T> out(x.numel());
    auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xv[i]);
    return make_result<T>("log", x.shape(), std::move(out), {x.node()}, [](TensorNode<T>& node) {
        auto& in = *node.inputs[0];
        T* g = in.grad_buffer();
        for (std::size_t i = 0; i < node.value.size(); ++i) g[i] += node.grad[i] / in.value[i];
    });
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
    }
    const auto& sh = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    const std::size_t n = sh[axis];
    std::vector<T> out(x.numel());
    auto xv = x.data();
    if (inner == 1) {
        kernels::softmax_rows(xv.data(), out.data(), outer, n, nullptr);
    } else {
        std::vector<T> line(n), res(n);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                for (std::size_t j = 0; j < n; ++j) line[j] = xv[(o * n + j) * inner + in];
                kernels::softmax_rows(line.data(), res.data(), 1, n, nullptr);
                for (std::size_t j = 0; j < n; ++j) out[(o * n + j) * inner + in] = res[j];
            }
        }
    }
    return make_result<T>("softmax", sh, std::move(out), {x.node()}, [outer, inner, n](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                Acc<T> dot = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t idx = (o * n + j) * inner + in;
                    dot += node.grad[idx] * node.value[idx];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t idx = (o * n + j) * inner + in;
                    g[idx] += node.value[idx] * (node.grad[idx] - dot);
                }
            }
        }
    });
}

template <class T>
BasicTensor<T> masked_softmax(const BasicTensor<T>& x, std::vector<std::uint8_t> allowed) {
    require_matrix("masked_softmax", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (allowed.size() != m * n) {
        throw ShapeError("masked_softmax: mask of " + std::to_string(allowed.size()) + " entries for " +
                         shape_str(x.shape()));
    }
    std::vector<T> out(m * n);
    kernels::softmax_rows(x.data().data(), out.data(), m, n, allowed.data());
    return make_result<T>("masked_softmax", x.shape(), std::move(out), {x.node()}, [m, n](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            const T* y = node.value.data() + i * n;
            const T* gy = node.grad.data() + i * n;
            Acc<T> dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
        }
    });
}

template <class T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x) {
    const std::size_t n = x.cols();
    const std::size_t m = x.numel() / std::max<std::size_t>(n, 1);
    std::vector<T> out(x.numel());
    auto xv = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* xr = xv.data() + i * n;
        T mx = *std::max_element(xr, xr + n);
        Acc<T> s = 0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(xr[j] - mx);
        const T lse = mx + std::log(s);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xr[j] - lse;
    }
    return make_result<T>("log_softmax", x.shape(), std::move(out), {x.node()}, [m, n](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            Acc<T> gs = 0;
            for (std::size_t j = 0; j < n; ++j) gs += node.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j) {
                g[i * n + j] += node.grad[i * n + j] - std::exp(node.value[i * n + j]) * gs;
            }
        }
    });
}

template <class T>
BasicTensor<T> row_mean(const BasicTensor<T>& x) {
    require_matrix("row_mean", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<T> out(m, T(0));
    auto xv = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        Acc<T> s = 0;
        for (std::size_t j = 0; j < n; ++j) s += xv[i * n + j];
        out[i] = s / T(n);
    }
    return make_result<T>("row_mean", Shape{m}, std::move(out), {x.node()}, [m, n](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += node.grad[i] / T(n);
    });
}

template <class T>
BasicTensor<T> row_variance(const BasicTensor<T>& x) {
    require_matrix("row_variance", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<T> out(m), means(m);
    auto xv = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        Acc<T> s = 0;
        for (std::size_t j = 0; j < n; ++j) s += xv[i * n + j];
        means[i] = s / T(n);
        Acc<T> v = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const T d = xv[i * n + j] - means[i];
            v += d * d;
        }
        out[i] = v / T(n);
    }
    return make_result<T>("row_variance", Shape{m}, std::move(out), {x.node()},
                          [m, n, means = std::move(means)](TensorNode<T>& node) {
                              auto& in = *node.inputs[0];
                              T* g = in.grad_buffer();
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j)
                                      g[i * n + j] += node.grad[i] * T(2) * (in.value[i * n + j] - means[i]) / T(n);
                          });
}

template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias, T eps) {
    const std::size_t n = x.cols();
    const std::size_t m = x.numel() / std::max<std::size_t>(n, 1);
    if (gain.rank() != 1 || gain.numel() != n || bias.rank() != 1 || bias.numel() != n) {
        throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match " + shape_str(x.shape()));
    }
    std::vector<T> out(x.numel()), xhat(x.numel()), rstd(m);
    auto xv = x.data();
    auto gv = gain.data();
    auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* xr = xv.data() + i * n;
        Acc<T> mu = 0;
        for (std::size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= T(n);
        Acc<T> var = 0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= T(n);
        rstd[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (xr[j] - mu) * rstd[i];
            out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
        }
    }
    return make_result<T>(
        "layer_norm", x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
        [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](TensorNode<T>& node) {
            auto& nx = *node.inputs[0];
            auto& ng = *node.inputs[1];
            auto& nb = *node.inputs[2];
            if (ng.requires_grad) {
                T* gg = ng.grad_buffer();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gg[j] += node.grad[i * n + j] * xhat[i * n + j];
            }
            if (nb.requires_grad) {
                T* gb = nb.grad_buffer();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += node.grad[i * n + j];
            }
            if (nx.requires_grad) {
                T* gx = nx.grad_buffer();
                std::vector<T> dxhat(n);
                for (std::size_t i = 0; i < m; ++i) {
                    Acc<T> mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                        dxhat[j] = node.grad[i * n + j] * ng.value[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat[i * n + j];
                    }
                    mean_d /= T(n);
                    mean_dx /= T(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        gx[i * n + j] += rstd[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
                    }
                }
            }
        });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>("reshape", shape, std::move(out), {x.node()}, [](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < node.value.size(); ++i) g[i] += node.grad[i];
    });
}

template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
    require_matrix("slice_rows", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin > end || end > m) {
        throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         shape_str(x.shape()));
    }
    auto xv = x.data();
    std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                       xv.begin() + static_cast<std::ptrdiff_t>(end * n));
    return make_result<T>("slice_rows", Shape{end - begin, n}, std::move(out), {x.node()},
                          [begin, n](TensorNode<T>& node) {
                              T* g = node.inputs[0]->grad_buffer() + begin * n;
                              for (std::size_t i = 0; i < node.value.size(); ++i) g[i] += node.grad[i];
                          });
}

template <class T>
BasicTensor<T> slice_cols(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
    require_matrix("slice_cols", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin > end || end > n) {
        throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<T> out(m * w);
    auto xv = x.data();
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * n + begin), w, out.begin() + i * w);
    return make_result<T>("slice_cols", Shape{m, w}, std::move(out), {x.node()}, [m, n, w, begin](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += node.grad[i * w + j];
    });
}

template <class T>
BasicTensor<T> row(const BasicTensor<T>& x, std::size_t i) {
    require_matrix("row", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (i >= m) throw ShapeError("row: index " + std::to_string(i) + " out of " + shape_str(x.shape()));
    auto xv = x.data();
    std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(i * n),
                       xv.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    return make_result<T>("row", Shape{n}, std::move(out), {x.node()}, [i, n](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer() + i * n;
        for (std::size_t j = 0; j < n; ++j) g[j] += node.grad[j];
    });
}

template <class T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t n = parts[0].cols();
    std::size_t total = 0;
    std::vector<NodePtr<T>> inputs;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        require_matrix("concat_rows", p);
        if (p.shape()[1] != n) {
            throw ShapeError("concat_rows: width " + std::to_string(p.shape()[1]) + " vs " + std::to_string(n));
        }
        offsets.push_back(total);
        total += p.shape()[0];
        inputs.push_back(p.node());
    }
    std::vector<T> out;
    out.reserve(total * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_result<T>("concat_rows", Shape{total, n}, std::move(out), std::move(inputs),
                          [n, offsets = std::move(offsets)](TensorNode<T>& node) {
                              for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                                  auto& in = *node.inputs[k];
                                  if (!in.requires_grad) continue;
                                  T* g = in.grad_buffer();
                                  const T* src = node.grad.data() + offsets[k] * n;
                                  for (std::size_t i = 0; i < in.value.size(); ++i) g[i] += src[i];
                              }
                          });
}

template <class T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts[0].rows();
    std::size_t total = 0;
    std::vector<NodePtr<T>> inputs;
    std::vector<std::size_t> offsets, widths;
    for (const auto& p : parts) {
        require_matrix("concat_cols", p);
        if (p.shape()[0] != m) {
            throw ShapeError("concat_cols: height " + std::to_string(p.shape()[0]) + " vs " + std::to_string(m));
        }
        offsets.push_back(total);
        widths.push_back(p.shape()[1]);
        total += p.shape()[1];
        inputs.push_back(p.node());
    }
    std::vector<T> out(m * total);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto pv = parts[k].data();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                        out.begin() + static_cast<std::ptrdiff_t>(i * total + offsets[k]));
    }
    return make_result<T>("concat_cols", Shape{m, total}, std::move(out), std::move(inputs),
                          [m, total, offsets = std::move(offsets), widths = std::move(widths)](TensorNode<T>& node) {
                              for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                                  auto& in = *node.inputs[k];
                                  if (!in.requires_grad) continue;
                                  T* g = in.grad_buffer();
                                  for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < widths[k]; ++j)
                                          g[i * widths[k] + j] += node.grad[i * total + offsets[k] + j];
                              }
                          });
}

template <class T>
BasicTensor<T> stack_rows(std::span<const BasicTensor<T>> rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    const std::size_t n = rows[0].numel();
    std::vector<NodePtr<T>> inputs;
    std::vector<T> out;
    out.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.numel() != n) {
            throw ShapeError("stack_rows: expected vectors of length " + std::to_string(n) + ", got " +
                             shape_str(r.shape()));
        }
        out.insert(out.end(), r.data().begin(), r.data().end());
        inputs.push_back(r.node());
    }
    return make_result<T>("stack_rows", Shape{rows.size(), n}, std::move(out), std::move(inputs),
                          [n](TensorNode<T>& node) {
                              for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                                  auto& in = *node.inputs[k];
                                  if (!in.requires_grad) continue;
                                  T* g = in.grad_buffer();
                                  for (std::size_t j = 0; j < n; ++j) g[j] += node.grad[k * n + j];
                              }
                          });
}

template <class T>
BasicTensor<T> repeat_rows(const BasicTensor<T>& v, std::size_t count) {
    if (v.rank() != 1) throw ShapeError("repeat_rows: expected vector, got " + shape_str(v.shape()));
    const std::size_t n = v.numel();
    std::vector<T> out;
    out.reserve(count * n);
    for (std::size_t i = 0; i < count; ++i) out.insert(out.end(), v.data().begin(), v.data().end());
    return make_result<T>("repeat_rows", Shape{count, n}, std::move(out), {v.node()}, [count, n](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += node.grad[i * n + j];
    });
}

template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& table, std::span<const int> ids) {
    require_matrix("gather_rows", table);
    const std::size_t v = table.shape()[0], n = table.shape()[1];
    std::vector<int> idx(ids.begin(), ids.end());
    std::vector<T> out(idx.size() * n);
    auto tv = table.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= v) {
            throw VocabError("gather_rows: id " + std::to_string(idx[i]) + " outside table of " + std::to_string(v) +
                             " rows");
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(idx[i]) * static_cast<std::ptrdiff_t>(n), n,
                    out.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    const std::size_t count = idx.size();
    return make_result<T>("gather_rows", Shape{count, n}, std::move(out), {table.node()},
                          [n, idx = std::move(idx)](TensorNode<T>& node) {
                              T* g = node.inputs[0]->grad_buffer();
                              for (std::size_t i = 0; i < idx.size(); ++i)
                                  for (std::size_t j = 0; j < n; ++j)
                                      g[static_cast<std::size_t>(idx[i]) * n + j] += node.grad[i * n + j];
                          });
}

template <class T>
BasicTensor<T> max_pool_rows(const BasicTensor<T>& x) {
    require_matrix("max_pool_rows", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (m == 0) throw ContractError("max_pool_rows: empty segment (0 rows)");
    std::vector<T> out(n);
    std::vector<std::size_t> arg(n, 0);
    auto xv = x.data();
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = xv[j];
        for (std::size_t i = 1; i < m; ++i) {
            if (xv[i * n + j] > out[j]) {
                out[j] = xv[i * n + j];
                arg[j] = i;
            }
        }
    }
    return make_result<T>("max_pool_rows", Shape{n}, std::move(out), {x.node()},
                          [n, arg = std::move(arg)](TensorNode<T>& node) {
                              T* g = node.inputs[0]->grad_buffer();
                              for (std::size_t j = 0; j < n; ++j) g[arg[j] * n + j] += node.grad[j];
                          });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    Acc<T> s = 0;
    for (T v : x.data()) s += v;
    return make_result<T>("sum", Shape{}, std::vector<T>{static_cast<T>(s)}, {x.node()}, [](TensorNode<T>& node) {
        auto& in = *node.inputs[0];
        T* g = in.grad_buffer();
        for (std::size_t i = 0; i < in.value.size(); ++i) g[i] += node.grad[0];
    });
}

template <class T>
BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const int> idx) {
    require_matrix("pick", x);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (idx.size() != m) {
        throw ShapeError("pick: " + std::to_string(idx.size()) + " indices for " + shape_str(x.shape()));
    }
    std::vector<int> cols(idx.begin(), idx.end());
    std::vector<T> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= n) {
            throw VocabError("pick: index " + std::to_string(cols[i]) + " outside " + std::to_string(n) + " columns");
        }
        out[i] = x.data()[i * n + static_cast<std::size_t>(cols[i])];
    }
    return make_result<T>("pick", Shape{m}, std::move(out), {x.node()}, [n, cols = std::move(cols)](TensorNode<T>& node) {
        T* g = node.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < cols.size(); ++i) g[i * n + static_cast<std::size_t>(cols[i])] += node.grad[i];
    });
}

#define FLOWCAP_INSTANTIATE_OPS(T)                                                                     \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                           \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> transpose(const BasicTensor<T>&);                                          \
    template BasicTensor<T> gelu(const BasicTensor<T>&);                                               \
    template BasicTensor<T> log(const BasicTensor<T>&);                                                \
    template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                               \
    template BasicTensor<T> masked_softmax(const BasicTensor<T>&, std::vector<std::uint8_t>);          \
    template BasicTensor<T> log_softmax(const BasicTensor<T>&);                                        \
    template BasicTensor<T> row_mean(const BasicTensor<T>&);                                           \
    template BasicTensor<T> row_variance(const BasicTensor<T>&);                                       \
    template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T); \
    template BasicTensor<T> reshape(const BasicTensor<T>&, const Shape&);                              \
    template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);               \
    template BasicTensor<T> slice_cols(const BasicTensor<T>&, std::size_t, std::size_t);               \
    template BasicTensor<T> row(const BasicTensor<T>&, std::size_t);                                   \
    template BasicTensor<T> concat_rows(std::span<const BasicTensor<T>>);                              \
    template BasicTensor<T> concat_cols(std::span<const BasicTensor<T>>);                              \
    template BasicTensor<T> stack_rows(std::span<const BasicTensor<T>>);                               \
    template BasicTensor<T> repeat_rows(const BasicTensor<T>&, std::size_t);                           \
    template BasicTensor<T> gather_rows(const BasicTensor<T>&, std::span<const int>);                  \
    template BasicTensor<T> max_pool_rows(const BasicTensor<T>&);                                      \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                \
    template BasicTensor<T> pick(const BasicTensor<T>&, std::span<const int>);

FLOWCAP_INSTANTIATE_OPS(float)
FLOWCAP_INSTANTIATE_OPS(double)

}  // namespace flowcap
