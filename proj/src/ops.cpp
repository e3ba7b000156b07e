#include "tcedit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

namespace tcedit {

namespace {

void require_rank(const char* op, const Shape& shape, std::size_t rank) {
    if (shape.size() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_to_string(shape));
    }
}

void require_same(const char* op, const Shape& a, const Shape& b) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " +
                             shape_to_string(b));
    }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisView {
    std::size_t outer = 1;
    std::size_t length = 1;
    std::size_t inner = 1;
};

AxisView axis_view(const char* op, const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                             shape_to_string(shape));
    }
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) {
        v.outer *= shape[i];
    }
    v.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        v.inner *= shape[i];
    }
    return v;
}

// c[m×n] += a[m×k] · b[k×n], all row-major.
template <typename T>
void gemm_accumulate(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto rows = static_cast<Eigen::Index>(m);
    const auto inner = static_cast<Eigen::Index>(k);
    const auto cols = static_cast<Eigen::Index>(n);
    Eigen::Map<const Matrix> am(a, rows, inner);
    Eigen::Map<const Matrix> bm(b, inner, cols);
    Eigen::Map<Matrix> cm(c, rows, cols);
    cm.noalias() += am * bm;
}

// c[m×n] += a[k×m]ᵀ · b[k×n].
template <typename T>
void gemm_tn_accumulate(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Matrix> am(a, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    Eigen::Map<const Matrix> bm(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    Eigen::Map<Matrix> cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    cm.noalias() += am.transpose() * bm;
}

// c[m×n] += a[m×k] · b[n×k]ᵀ.
template <typename T>
void gemm_nt_accumulate(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Matrix> am(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    Eigen::Map<const Matrix> bm(b, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    Eigen::Map<Matrix> cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    cm.noalias() += am * bm.transpose();
}

template <typename T>
T clamp_open_unit(T p) {
    static const T lo = std::nextafter(T(0), T(1));
    static const T hi = std::nextafter(T(1), T(0));
    return std::clamp(p, lo, hi);
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
    }
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    std::vector<T> out(m * n, T(0));
    gemm_accumulate(m, k, n, a.data().data(), b.data().data(), out.data());
    return make_result<T>({m, n}, std::move(out), {a, b},
                          [a, b, m, k, n](std::span<const T> g, GradSlots<T> gin) {
                              const T* gd = g.data();
                              if (gin[0] != nullptr) {
                                  gemm_nt_accumulate(m, n, k, gd, b.data().data(), gin[0]->data());
                              }
                              if (gin[1] != nullptr) {
                                  gemm_tn_accumulate(k, m, n, a.data().data(), gd, gin[1]->data());
                              }
                          });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_rank("transpose", a.shape(), 2);
    const std::size_t m = a.dim(0);
    const std::size_t n = a.dim(1);
    std::vector<T> out(m * n);
    const auto in = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = in[i * n + j];
        }
    }
    return make_result<T>({n, m}, std::move(out), {a}, [m, n](std::span<const T> g, GradSlots<T> gin) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                (*gin[0])[i * n + j] += g[j * m + i];
            }
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>(std::move(shape), std::move(out), {x}, [](std::span<const T> g, GradSlots<T> gin) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            (*gin[0])[i] += g[i];
        }
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same("add", a.shape(), b.shape());
    std::vector<T> out(a.size());
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.begin(), std::plus<T>());
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](std::span<const T> g, GradSlots<T> gin) {
        for (auto* slot : gin) {
            if (slot != nullptr) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    (*slot)[i] += g[i];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same("sub", a.shape(), b.shape());
    std::vector<T> out(a.size());
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.begin(), std::minus<T>());
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](std::span<const T> g, GradSlots<T> gin) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (gin[0] != nullptr) {
                (*gin[0])[i] += g[i];
            }
            if (gin[1] != nullptr) {
                (*gin[1])[i] -= g[i];
            }
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same("mul", a.shape(), b.shape());
    std::vector<T> out(a.size());
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.begin(), std::multiplies<T>());
    return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g, GradSlots<T> gin) {
        const auto ad = a.data();
        const auto bd = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (gin[0] != nullptr) {
                (*gin[0])[i] += g[i] * bd[i];
            }
            if (gin[1] != nullptr) {
                (*gin[1])[i] += g[i] * ad[i];
            }
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.size());
    std::transform(a.data().begin(), a.data().end(), out.begin(), [factor](T v) { return v * factor; });
    return make_result<T>(a.shape(), std::move(out), {a}, [factor](std::span<const T> g, GradSlots<T> gin) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            (*gin[0])[i] += g[i] * factor;
        }
    });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require_rank("add_row_bias", x.shape(), 2);
    if (bias.size() != x.dim(1)) {
        throw DimensionError("add_row_bias: bias " + shape_to_string(bias.shape()) + " does not match rows of " +
                             shape_to_string(x.shape()));
    }
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    std::vector<T> out(x.data().begin(), x.data().end());
    const auto bd = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] += bd[j];
        }
    }
    return make_result<T>(x.shape(), std::move(out), {x, bias}, [m, n](std::span<const T> g, GradSlots<T> gin) {
        if (gin[0] != nullptr) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gin[0])[i] += g[i];
            }
        }
        if (gin[1] != nullptr) {
            auto& gb = *gin[1];
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gb[j] += g[i * n + j];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return add_row_bias(matmul(x, w), b);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    const AxisView v = axis_view("softmax", x.shape(), axis);
    std::vector<T> out(x.size());
    const auto in = x.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t r = 0; r < v.inner; ++r) {
            const std::size_t base = o * v.length * v.inner + r;
            T peak = in[base];
            for (std::size_t i = 1; i < v.length; ++i) {
                peak = std::max(peak, in[base + i * v.inner]);
            }
            T total = T(0);
            for (std::size_t i = 0; i < v.length; ++i) {
                const T e = std::exp(in[base + i * v.inner] - peak);
                out[base + i * v.inner] = e;
                total += e;
            }
            for (std::size_t i = 0; i < v.length; ++i) {
                out[base + i * v.inner] /= total;
            }
        }
    }
    std::vector<T> saved = out;
    return make_result<T>(x.shape(), std::move(out), {x},
                          [y = std::move(saved), v](std::span<const T> g, GradSlots<T> gin) {
                              auto& gx = *gin[0];
                              for (std::size_t o = 0; o < v.outer; ++o) {
                                  for (std::size_t r = 0; r < v.inner; ++r) {
                                      const std::size_t base = o * v.length * v.inner + r;
                                      T dot = T(0);
                                      for (std::size_t i = 0; i < v.length; ++i) {
                                          dot += g[base + i * v.inner] * y[base + i * v.inner];
                                      }
                                      for (std::size_t i = 0; i < v.length; ++i) {
                                          const std::size_t at = base + i * v.inner;
                                          gx[at] += y[at] * (g[at] - dot);
                                      }
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, double eps) {
    if (x.rank() == 0 || gain.size() != x.shape().back() || bias.size() != x.shape().back()) {
        throw DimensionError("layer_norm: feature width of " + shape_to_string(x.shape()) +
                             " does not match gain " + shape_to_string(gain.shape()) + " / bias " +
                             shape_to_string(bias.shape()));
    }
    if (!(eps > 0.0)) {
        throw std::invalid_argument("layer_norm: eps must be positive");
    }
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.size() / d;
    const auto in = x.data();
    const auto gd = gain.data();
    const auto bd = bias.data();
    std::vector<T> out(x.size());
    std::vector<T> normed(x.size());
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = in.data() + r * d;
        T mu = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            mu += row[j];
        }
        mu /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = row[j] - mu;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
        inv_std[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const T xh = (row[j] - mu) * rs;
            normed[r * d + j] = xh;
            out[r * d + j] = gd[j] * xh + bd[j];
        }
    }
    return make_result<T>(
        x.shape(), std::move(out), {x, gain, bias},
        [gain, normed = std::move(normed), inv_std = std::move(inv_std), d, rows](std::span<const T> g,
                                                                                  GradSlots<T> gin) {
            const auto gd = gain.data();
            std::vector<T> gxh(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* xh = normed.data() + r * d;
                const T* gr = g.data() + r * d;
                if (gin[1] != nullptr) {
                    for (std::size_t j = 0; j < d; ++j) {
                        (*gin[1])[j] += gr[j] * xh[j];
                    }
                }
                if (gin[2] != nullptr) {
                    for (std::size_t j = 0; j < d; ++j) {
                        (*gin[2])[j] += gr[j];
                    }
                }
                if (gin[0] != nullptr) {
                    T mean_g = T(0);
                    T mean_gx = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        gxh[j] = gr[j] * gd[j];
                        mean_g += gxh[j];
                        mean_gx += gxh[j] * xh[j];
                    }
                    mean_g /= static_cast<T>(d);
                    mean_gx /= static_cast<T>(d);
                    T* gx = gin[0]->data() + r * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        gx[j] += inv_std[r] * (gxh[j] - mean_g - xh[j] * mean_gx);
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T kAlpha = T(0.044715);
    const T c = std::sqrt(T(2) / T(3.14159265358979323846));
    std::vector<T> out(x.size());
    const auto in = x.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const T v = in[i];
        out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + kAlpha * v * v * v)));
    }
    return make_result<T>(x.shape(), std::move(out), {x}, [x, c](std::span<const T> g, GradSlots<T> gin) {
        const auto in = x.data();
        auto& gx = *gin[0];
        for (std::size_t i = 0; i < in.size(); ++i) {
            const T v = in[i];
            const T t = std::tanh(c * (v + kAlpha * v * v * v));
            const T dt = (T(1) - t * t) * c * (T(1) + T(3) * kAlpha * v * v);
            gx[i] += g[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
        }
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    const auto in = x.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const T v = in[i];
        T p;
        if (v >= T(0)) {
            p = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            p = e / (T(1) + e);
        }
        out[i] = clamp_open_unit(p);
    }
    std::vector<T> saved = out;
    return make_result<T>(x.shape(), std::move(out), {x},
                          [p = std::move(saved)](std::span<const T> g, GradSlots<T> gin) {
                              auto& gx = *gin[0];
                              for (std::size_t i = 0; i < p.size(); ++i) {
                                  gx[i] += g[i] * p[i] * (T(1) - p[i]);
                              }
                          });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
    if (a.rank() != b.rank() || axis >= a.rank()) {
        throw DimensionError("concat: cannot join " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()) + " on axis " + std::to_string(axis));
    }
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (i != axis && a.dim(i) != b.dim(i)) {
            throw DimensionError("concat: non-axis dimensions differ: " + shape_to_string(a.shape()) + " vs " +
                                 shape_to_string(b.shape()));
        }
    }
    const AxisView va = axis_view("concat", a.shape(), axis);
    const AxisView vb = axis_view("concat", b.shape(), axis);
    const std::size_t block_a = va.length * va.inner;
    const std::size_t block_b = vb.length * vb.inner;
    Shape shape = a.shape();
    shape[axis] += b.dim(axis);
    std::vector<T> out;
    out.reserve(a.size() + b.size());
    for (std::size_t o = 0; o < va.outer; ++o) {
        out.insert(out.end(), a.data().begin() + o * block_a, a.data().begin() + (o + 1) * block_a);
        out.insert(out.end(), b.data().begin() + o * block_b, b.data().begin() + (o + 1) * block_b);
    }
    return make_result<T>(std::move(shape), std::move(out), {a, b},
                          [outer = va.outer, block_a, block_b](std::span<const T> g, GradSlots<T> gin) {
                              const std::size_t stride = block_a + block_b;
                              for (std::size_t o = 0; o < outer; ++o) {
                                  if (gin[0] != nullptr) {
                                      for (std::size_t i = 0; i < block_a; ++i) {
                                          (*gin[0])[o * block_a + i] += g[o * stride + i];
                                      }
                                  }
                                  if (gin[1] != nullptr) {
                                      for (std::size_t i = 0; i < block_b; ++i) {
                                          (*gin[1])[o * block_b + i] += g[o * stride + block_a + i];
                                      }
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    const AxisView v = axis_view("slice", x.shape(), axis);
    if (length == 0 || start + length > v.length) {
        throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") outside axis " + std::to_string(axis) + " of " + shape_to_string(x.shape()));
    }
    Shape shape = x.shape();
    shape[axis] = length;
    std::vector<T> out;
    out.reserve(v.outer * length * v.inner);
    const auto in = x.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
        const auto first = in.begin() + (o * v.length + start) * v.inner;
        out.insert(out.end(), first, first + length * v.inner);
    }
    return make_result<T>(std::move(shape), std::move(out), {x},
                          [v, start, length](std::span<const T> g, GradSlots<T> gin) {
                              const std::size_t block = length * v.inner;
                              for (std::size_t o = 0; o < v.outer; ++o) {
                                  T* dst = gin[0]->data() + (o * v.length + start) * v.inner;
                                  for (std::size_t i = 0; i < block; ++i) {
                                      dst[i] += g[o * block + i];
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices) {
    require_rank("gather_rows", x.shape(), 2);
    if (indices.empty()) {
        throw DimensionError("gather_rows: no rows requested");
    }
    const std::size_t n = x.dim(1);
    std::vector<T> out;
    out.reserve(indices.size() * n);
    for (const auto r : indices) {
        if (r >= x.dim(0)) {
            throw DimensionError("gather_rows: row " + std::to_string(r) + " outside " + shape_to_string(x.shape()));
        }
        const auto first = x.data().begin() + r * n;
        out.insert(out.end(), first, first + n);
    }
    std::vector<std::size_t> rows(indices.begin(), indices.end());
    return make_result<T>({rows.size(), n}, std::move(out), {x},
                          [rows, n](std::span<const T> g, GradSlots<T> gin) {
                              for (std::size_t r = 0; r < rows.size(); ++r) {
                                  T* dst = gin[0]->data() + rows[r] * n;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      dst[j] += g[r * n + j];
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    const T total = std::accumulate(x.data().begin(), x.data().end(), T(0));
    return make_result<T>({}, {total}, {x}, [](std::span<const T> g, GradSlots<T> gin) {
        for (auto& v : *gin[0]) {
            v += g[0];
        }
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> segmented_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                              std::span<const std::size_t> segment_lengths, std::size_t n_heads) {
    require_rank("segmented_attention", q.shape(), 2);
    require_same("segmented_attention", q.shape(), k.shape());
    require_same("segmented_attention", q.shape(), v.shape());
    const std::size_t rows = q.dim(0);
    const std::size_t d = q.dim(1);
    if (n_heads == 0 || d % n_heads != 0) {
        throw DimensionError("segmented_attention: width " + std::to_string(d) + " not divisible into " +
                             std::to_string(n_heads) + " heads");
    }
    std::size_t covered = 0;
    std::size_t prob_size = 0;
    for (const auto len : segment_lengths) {
        if (len == 0) {
            throw DimensionError("segmented_attention: empty segment");
        }
        covered += len;
        prob_size += len * len * n_heads;
    }
    if (covered != rows) {
        throw DimensionError("segmented_attention: segments cover " + std::to_string(covered) + " of " +
                             std::to_string(rows) + " rows");
    }
    const std::size_t dh = d / n_heads;
    const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));
    const T* qd = q.data().data();
    const T* kd = k.data().data();
    const T* vd = v.data().data();
    std::vector<T> out(rows * d, T(0));
    std::vector<T> probs(prob_size);

    std::size_t offset = 0;
    std::size_t pbase = 0;
    for (const auto len : segment_lengths) {
        for (std::size_t h = 0; h < n_heads; ++h) {
            T* p = probs.data() + pbase;
            const std::size_t col = h * dh;
            for (std::size_t a = 0; a < len; ++a) {
                const T* qa = qd + (offset + a) * d + col;
                T peak = -std::numeric_limits<T>::infinity();
                for (std::size_t b = 0; b < len; ++b) {
                    const T* kb = kd + (offset + b) * d + col;
                    T s = T(0);
                    for (std::size_t c = 0; c < dh; ++c) {
                        s += qa[c] * kb[c];
                    }
                    s *= scale_factor;
                    p[a * len + b] = s;
                    peak = std::max(peak, s);
                }
                T total = T(0);
                for (std::size_t b = 0; b < len; ++b) {
                    const T e = std::exp(p[a * len + b] - peak);
                    p[a * len + b] = e;
                    total += e;
                }
                T* oa = out.data() + (offset + a) * d + col;
                for (std::size_t b = 0; b < len; ++b) {
                    p[a * len + b] /= total;
                    const T w = p[a * len + b];
                    const T* vb = vd + (offset + b) * d + col;
                    for (std::size_t c = 0; c < dh; ++c) {
                        oa[c] += w * vb[c];
                    }
                }
            }
            pbase += len * len;
        }
        offset += len;
    }

    std::vector<std::size_t> segments(segment_lengths.begin(), segment_lengths.end());
    return make_result<T>(
        q.shape(), std::move(out), {q, k, v},
        [q, k, v, segments = std::move(segments), probs = std::move(probs), n_heads, d, dh, scale_factor](
            std::span<const T> g, GradSlots<T> gin) {
            const T* qd = q.data().data();
            const T* kd = k.data().data();
            const T* vd = v.data().data();
            T* gq = gin[0] != nullptr ? gin[0]->data() : nullptr;
            T* gk = gin[1] != nullptr ? gin[1]->data() : nullptr;
            T* gv = gin[2] != nullptr ? gin[2]->data() : nullptr;
            std::vector<T> dp;
            std::size_t offset = 0;
            std::size_t pbase = 0;
            for (const auto len : segments) {
                dp.resize(len * len);
                for (std::size_t h = 0; h < n_heads; ++h) {
                    const T* p = probs.data() + pbase;
                    const std::size_t col = h * dh;
                    for (std::size_t a = 0; a < len; ++a) {
                        const T* ga = g.data() + (offset + a) * d + col;
                        T row_dot = T(0);
                        for (std::size_t b = 0; b < len; ++b) {
                            const T* vb = vd + (offset + b) * d + col;
                            T s = T(0);
                            for (std::size_t c = 0; c < dh; ++c) {
                                s += ga[c] * vb[c];
                            }
                            dp[a * len + b] = s;
                            row_dot += s * p[a * len + b];
                            if (gv != nullptr) {
                                T* gvb = gv + (offset + b) * d + col;
                                const T w = p[a * len + b];
                                for (std::size_t c = 0; c < dh; ++c) {
                                    gvb[c] += w * ga[c];
                                }
                            }
                        }
                        // dp becomes the score gradient, pre-scaled.
                        for (std::size_t b = 0; b < len; ++b) {
                            dp[a * len + b] = p[a * len + b] * (dp[a * len + b] - row_dot) * scale_factor;
                        }
                        const T* qa = qd + (offset + a) * d + col;
                        for (std::size_t b = 0; b < len; ++b) {
                            const T ds = dp[a * len + b];
                            if (gq != nullptr) {
                                const T* kb = kd + (offset + b) * d + col;
                                T* gqa = gq + (offset + a) * d + col;
                                for (std::size_t c = 0; c < dh; ++c) {
                                    gqa[c] += ds * kb[c];
                                }
                            }
                            if (gk != nullptr) {
                                T* gkb = gk + (offset + b) * d + col;
                                for (std::size_t c = 0; c < dh; ++c) {
                                    gkb[c] += ds * qa[c];
                                }
                            }
                        }
                    }
                    pbase += len * len;
                }
                offset += len;
            }
        });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> labels, double eps) {
    if (logits.size() != labels.size()) {
        throw DimensionError("bce_with_logits: " + std::to_string(logits.size()) + " logits vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = labels.size();
    const auto z = logits.data();
    std::vector<T> grad_scale(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double zi = static_cast<double>(z[i]);
        const double p = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
        const double pc = std::clamp(p, eps, 1.0 - eps);
        const double y = static_cast<double>(labels[i]);
        total += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
        grad_scale[i] = (p > eps && p < 1.0 - eps) ? static_cast<T>((p - y) / static_cast<double>(n)) : T(0);
    }
    const T value = static_cast<T>(total / static_cast<double>(n));
    return make_result<T>({}, {value}, {logits}, [grad_scale = std::move(grad_scale)](std::span<const T> g,
                                                                                      GradSlots<T> gin) {
        for (std::size_t i = 0; i < grad_scale.size(); ++i) {
            (*gin[0])[i] += g[0] * grad_scale[i];
        }
    });
}

#define TCEDIT_INSTANTIATE_OPS(T)                                                                            \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> transpose(const Tensor<T>&);                                                         \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                    \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> scale(const Tensor<T>&, T);                                                          \
    template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                              \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);          \
    template Tensor<T> gelu(const Tensor<T>&);                                                              \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                           \
    template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&, std::size_t);                            \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                    \
    template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                        \
    template Tensor<T> sum(const Tensor<T>&);                                                               \
    template Tensor<T> mean(const Tensor<T>&);                                                              \
    template Tensor<T> segmented_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                           std::span<const std::size_t>, std::size_t);                      \
    template Tensor<T> bce_with_logits(const Tensor<T>&, std::span<const T>, double);

TCEDIT_INSTANTIATE_OPS(float)
TCEDIT_INSTANTIATE_OPS(double)

#undef TCEDIT_INSTANTIATE_OPS

}  // namespace tcedit
