#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bridgelab/errors.hpp"
#include "bridgelab/rng.hpp"

namespace bridgelab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// Dense row-major tensor of doubles. Plain value type: copyable, movable,
// no views, no aliasing.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), 0.0) {
        validate_shape();
    }

    Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {
        validate_shape();
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != numel(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    // Row-major element access for low-rank tensors.
    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    static Tensor randn(Shape shape, SeededRng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (double& v : t.data_) v = rng.normal(0.0, stddev);
        return t;
    }

private:
    void validate_shape() const {
        for (std::size_t d : shape_) {
            if (d == 0) throw ShapeError("zero dimension in shape " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

inline Tensor tensor1d(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

inline Tensor tensor2d(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in tensor2d literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

// Every arithmetic operation funnels its output through this check: NaN/Inf
// never propagates silently.
inline void ensure_finite(const Tensor& t, const char* op) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
    }
}

inline void ensure_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) +
                         ", got shape " + shape_str(t.shape()));
    }
}

// ---------------------------------------------------------------------------
// Broadcasting (numpy alignment rules: ranks align right, dims match or are 1)

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size());
    std::size_t acc = 1;
    for (std::size_t i = shape.size(); i-- > 0;) {
        strides[i] = acc;
        acc *= shape[i];
    }
    return strides;
}

// Strides of `shape` viewed as `out_shape`, 0 where a dimension broadcasts.
inline std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out_shape) {
    const std::size_t r = out_shape.size();
    const std::size_t pad = r - shape.size();
    auto base = row_major_strides(shape);
    std::vector<std::size_t> strides(r, 0);
    for (std::size_t i = 0; i < shape.size(); ++i) {
        strides[pad + i] = shape[i] == 1 ? 0 : base[i];
    }
    return strides;
}

} // namespace detail

template <class F>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, const char* op) {
    if (a.same_shape(b)) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
        ensure_finite(out, op);
        return out;
    }
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    Tensor out(out_shape);
    const auto sa = detail::broadcast_strides(a.shape(), out_shape);
    const auto sb = detail::broadcast_strides(b.shape(), out_shape);
    const std::size_t r = out_shape.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t lin = 0; lin < out.size(); ++lin) {
        out[lin] = f(a[oa], b[ob]);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out_shape[d]) break;
            idx[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
        }
    }
    ensure_finite(out, op);
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x + y; }, "add");
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x - y; }, "sub");
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x * y; }, "mul");
}
inline Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, [](double x, double y) { return x / y; }, "div");
}

template <class F>
Tensor unary_op(const Tensor& a, F f, const char* op) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    ensure_finite(out, op);
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x * s; }, "scale");
}
inline Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x + s; }, "add_scalar");
}

// Sum `t` down to `target` shape (inverse of broadcasting `target` up to
// t's shape). Backbone of every broadcast-aware gradient.
inline Tensor reduce_to(const Tensor& t, const Shape& target) {
    if (t.shape() == target) return t;
    if (numel(target) > t.size()) {
        throw ShapeError("reduce_to: target " + shape_str(target) + " larger than input " +
                         shape_str(t.shape()));
    }
    Tensor out(target);
    const auto st = detail::broadcast_strides(target, t.shape());
    const Shape& in_shape = t.shape();
    const std::size_t r = in_shape.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t oo = 0;
    for (std::size_t lin = 0; lin < t.size(); ++lin) {
        out[oo] += t[lin];
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            oo += st[d];
            if (idx[d] < in_shape[d]) break;
            idx[d] = 0;
            oo -= st[d] * in_shape[d];
        }
    }
    return out;
}

inline Tensor broadcast_to(const Tensor& t, const Shape& target) {
    if (t.shape() == target) return t;
    // add with zeros does the stride work
    return binary_op(t, Tensor::zeros(target), [](double x, double) { return x; },
                     "broadcast_to");
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& t, Shape shape) {
    if (numel(shape) != t.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(t.shape()) + " as " +
                         shape_str(shape));
    }
    return Tensor(std::move(shape), t.vec());
}

inline Tensor transpose2d(const Tensor& t) {
    ensure_rank(t, 2, "transpose2d");
    const std::size_t r = t.dim(0), c = t.dim(1);
    Tensor out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = t.at(i, j);
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range");
    std::size_t axis_total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && p.shape()[d] != first[d]) {
                throw ShapeError("concat: shape mismatch off the concat axis");
            }
        }
        axis_total += p.shape()[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = axis_total;
    Tensor out(out_shape);

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    std::size_t axis_off = 0;
    for (const Tensor& p : parts) {
        const std::size_t pa = p.shape()[axis];
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = p.data() + o * pa * inner;
            double* dst = out.data() + (o * axis_total + axis_off) * inner;
            std::copy(src, src + pa * inner, dst);
        }
        axis_off += pa;
    }
    return out;
}

inline Tensor slice(const Tensor& t, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= t.rank()) throw ShapeError("slice: axis out of range");
    if (start + len > t.shape()[axis]) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") exceeds dim " +
                         std::to_string(t.shape()[axis]));
    }
    Shape out_shape = t.shape();
    out_shape[axis] = len;
    Tensor out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= t.shape()[d];
    for (std::size_t d = axis + 1; d < t.rank(); ++d) inner *= t.shape()[d];
    const std::size_t n = t.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src = t.data() + (o * n + start) * inner;
        std::copy(src, src + len * inner, out.data() + o * len * inner);
    }
    return out;
}

// Scatter-add of a slice gradient back into the full shape.
inline void slice_add_back(Tensor& full, const Tensor& piece, std::size_t axis,
                           std::size_t start) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= full.shape()[d];
    for (std::size_t d = axis + 1; d < full.rank(); ++d) inner *= full.shape()[d];
    const std::size_t n = full.shape()[axis];
    const std::size_t len = piece.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
        double* dst = full.data() + (o * n + start) * inner;
        const double* src = piece.data() + o * len * inner;
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
}

// ---------------------------------------------------------------------------
// Matrix multiply

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    ensure_rank(a, 2, "matmul");
    ensure_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            const double* brow = b.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    ensure_finite(out, "matmul");
    return out;
}

// ---------------------------------------------------------------------------
// Reductions

namespace detail {

inline void check_axes(const Shape& shape, const std::vector<std::size_t>& axes) {
    if (axes.empty()) throw ShapeError("reduction over empty axis list");
    for (std::size_t ax : axes) {
        if (ax >= shape.size()) throw ShapeError("reduction axis out of range");
    }
}

inline Shape reduced_shape(const Shape& shape, const std::vector<std::size_t>& axes,
                           bool keepdims) {
    Shape out;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        const bool reduced = std::find(axes.begin(), axes.end(), d) != axes.end();
        if (reduced) {
            if (keepdims) out.push_back(1);
        } else {
            out.push_back(shape[d]);
        }
    }
    if (out.empty()) out.push_back(1);
    return out;
}

} // namespace detail

inline Tensor reduce_sum(const Tensor& t, const std::vector<std::size_t>& axes,
                         bool keepdims = true) {
    detail::check_axes(t.shape(), axes);
    Shape keep_shape = t.shape();
    for (std::size_t ax : axes) keep_shape[ax] = 1;
    Tensor out = reduce_to(t, keep_shape);
    if (!keepdims) out = reshape(out, detail::reduced_shape(t.shape(), axes, false));
    return out;
}

inline Tensor reduce_mean(const Tensor& t, const std::vector<std::size_t>& axes,
                          bool keepdims = true) {
    std::size_t count = 1;
    for (std::size_t ax : axes) count *= t.shape().at(ax);
    return scale(reduce_sum(t, axes, keepdims), 1.0 / static_cast<double>(count));
}

// Mean and biased (population) variance over `axes`; both keep reduced
// dimensions at size 1 so they broadcast straight back onto the input.
inline std::pair<Tensor, Tensor> reduce_mean_var(const Tensor& t,
                                                 const std::vector<std::size_t>& axes) {
    detail::check_axes(t.shape(), axes);
    const Tensor mean = reduce_mean(t, axes, true);
    const Tensor centered = sub(t, mean);
    const Tensor var = reduce_mean(mul(centered, centered), axes, true);
    return {mean, var};
}

inline double sum_all(const Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i];
    return acc;
}

// ---------------------------------------------------------------------------
// Softmax

inline Tensor softmax(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) throw ShapeError("softmax: axis out of range");
    ensure_finite(t, "softmax input");
    const std::size_t n = t.shape()[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= t.shape()[d];
    for (std::size_t d = axis + 1; d < t.rank(); ++d) inner *= t.shape()[d];
    Tensor out(t.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = t[base];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, t[base + i * inner]);
            double denom = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(t[base + i * inner] - mx);
                out[base + i * inner] = e;
                denom += e;
            }
            for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= denom;
        }
    }
    ensure_finite(out, "softmax");
    return out;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, the deep-learning convention: no kernel flip)

inline Shape conv2d_out_shape(const Shape& x, const Shape& w, std::size_t stride,
                              std::size_t padding) {
    if (x.size() != 4 || w.size() != 4) throw ShapeError("conv2d: inputs must be rank 4");
    if (x[1] != w[1]) {
        throw ShapeError("conv2d: channel mismatch, input " + shape_str(x) + " vs kernel " +
                         shape_str(w));
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    const std::size_t hp = x[2] + 2 * padding, wp = x[3] + 2 * padding;
    if (w[2] > hp || w[3] > wp) {
        throw ShapeError("conv2d: kernel " + shape_str(w) + " larger than padded input");
    }
    return Shape{x[0], w[0], (hp - w[2]) / stride + 1, (wp - w[3]) / stride + 1};
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride = 1,
                     std::size_t padding = 0) {
    const Shape os = conv2d_out_shape(x.shape(), w.shape(), stride, padding);
    const std::size_t N = os[0], F = os[1], OH = os[2], OW = os[3];
    const std::size_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t KH = w.dim(2), KW = w.dim(3);
    Tensor out(os);
    const long p = static_cast<long>(padding);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ki = 0; ki < KH; ++ki) {
                            const long ih = static_cast<long>(oh * stride + ki) - p;
                            if (ih < 0 || ih >= static_cast<long>(H)) continue;
                            for (std::size_t kj = 0; kj < KW; ++kj) {
                                const long iw = static_cast<long>(ow * stride + kj) - p;
                                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                acc += x.at(n, c, static_cast<std::size_t>(ih),
                                            static_cast<std::size_t>(iw)) *
                                       w.at(f, c, ki, kj);
                            }
                        }
                    out.at(n, f, oh, ow) = acc;
                }
    ensure_finite(out, "conv2d");
    return out;
}

inline Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const Shape& x_shape,
                                std::size_t stride, std::size_t padding) {
    const std::size_t N = grad_out.dim(0), F = grad_out.dim(1);
    const std::size_t OH = grad_out.dim(2), OW = grad_out.dim(3);
    const std::size_t C = x_shape[1], H = x_shape[2], W = x_shape[3];
    const std::size_t KH = w.dim(2), KW = w.dim(3);
    Tensor dx(x_shape);
    const long p = static_cast<long>(padding);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    const double g = grad_out.at(n, f, oh, ow);
                    if (g == 0.0) continue;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ki = 0; ki < KH; ++ki) {
                            const long ih = static_cast<long>(oh * stride + ki) - p;
                            if (ih < 0 || ih >= static_cast<long>(H)) continue;
                            for (std::size_t kj = 0; kj < KW; ++kj) {
                                const long iw = static_cast<long>(ow * stride + kj) - p;
                                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                dx.at(n, c, static_cast<std::size_t>(ih),
                                      static_cast<std::size_t>(iw)) += g * w.at(f, c, ki, kj);
                            }
                        }
                }
    return dx;
}

inline Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& x, const Shape& w_shape,
                                 std::size_t stride, std::size_t padding) {
    const std::size_t N = grad_out.dim(0), F = grad_out.dim(1);
    const std::size_t OH = grad_out.dim(2), OW = grad_out.dim(3);
    const std::size_t C = w_shape[1], KH = w_shape[2], KW = w_shape[3];
    const std::size_t H = x.dim(2), W = x.dim(3);
    Tensor dw(w_shape);
    const long p = static_cast<long>(padding);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    const double g = grad_out.at(n, f, oh, ow);
                    if (g == 0.0) continue;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ki = 0; ki < KH; ++ki) {
                            const long ih = static_cast<long>(oh * stride + ki) - p;
                            if (ih < 0 || ih >= static_cast<long>(H)) continue;
                            for (std::size_t kj = 0; kj < KW; ++kj) {
                                const long iw = static_cast<long>(ow * stride + kj) - p;
                                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                dw.at(f, c, ki, kj) +=
                                    g * x.at(n, c, static_cast<std::size_t>(ih),
                                             static_cast<std::size_t>(iw));
                            }
                        }
                }
    return dw;
}

// ---------------------------------------------------------------------------
// Pooling (no padding; trailing cells that do not fill a window are dropped)

enum class PoolKind { avg, max };

inline Shape pool2d_out_shape(const Shape& x, std::size_t k, std::size_t stride) {
    if (x.size() != 4) throw ShapeError("pool2d: input must be rank 4");
    if (k == 0 || stride == 0) throw ShapeError("pool2d: window and stride must be positive");
    if (k > x[2] || k > x[3]) {
        throw ShapeError("pool2d: window " + std::to_string(k) + " exceeds spatial extent of " +
                         shape_str(x));
    }
    return Shape{x[0], x[1], (x[2] - k) / stride + 1, (x[3] - k) / stride + 1};
}

inline Tensor pool2d(const Tensor& x, std::size_t k, std::size_t stride, PoolKind kind) {
    const Shape os = pool2d_out_shape(x.shape(), k, stride);
    Tensor out(os);
    const double inv = 1.0 / static_cast<double>(k * k);
    for (std::size_t n = 0; n < os[0]; ++n)
        for (std::size_t c = 0; c < os[1]; ++c)
            for (std::size_t oh = 0; oh < os[2]; ++oh)
                for (std::size_t ow = 0; ow < os[3]; ++ow) {
                    if (kind == PoolKind::avg) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < k; ++i)
                            for (std::size_t j = 0; j < k; ++j)
                                acc += x.at(n, c, oh * stride + i, ow * stride + j);
                        out.at(n, c, oh, ow) = acc * inv;
                    } else {
                        double best = x.at(n, c, oh * stride, ow * stride);
                        for (std::size_t i = 0; i < k; ++i)
                            for (std::size_t j = 0; j < k; ++j)
                                best = std::max(best, x.at(n, c, oh * stride + i, ow * stride + j));
                        out.at(n, c, oh, ow) = best;
                    }
                }
    return out;
}

// Backward for pooling; max ties route everything to the first window cell in
// row-major scan order.
inline Tensor pool2d_backward(const Tensor& grad_out, const Tensor& x, std::size_t k,
                              std::size_t stride, PoolKind kind) {
    Tensor dx(x.shape());
    const Shape os = grad_out.shape();
    const double inv = 1.0 / static_cast<double>(k * k);
    for (std::size_t n = 0; n < os[0]; ++n)
        for (std::size_t c = 0; c < os[1]; ++c)
            for (std::size_t oh = 0; oh < os[2]; ++oh)
                for (std::size_t ow = 0; ow < os[3]; ++ow) {
                    const double g = grad_out.at(n, c, oh, ow);
                    if (kind == PoolKind::avg) {
                        for (std::size_t i = 0; i < k; ++i)
                            for (std::size_t j = 0; j < k; ++j)
                                dx.at(n, c, oh * stride + i, ow * stride + j) += g * inv;
                    } else {
                        std::size_t bi = 0, bj = 0;
                        double best = x.at(n, c, oh * stride, ow * stride);
                        for (std::size_t i = 0; i < k; ++i)
                            for (std::size_t j = 0; j < k; ++j) {
                                const double v = x.at(n, c, oh * stride + i, ow * stride + j);
                                if (v > best) {
                                    best = v;
                                    bi = i;
                                    bj = j;
                                }
                            }
                        dx.at(n, c, oh * stride + bi, ow * stride + bj) += g;
                    }
                }
    return dx;
}

// ---------------------------------------------------------------------------
// Test helpers

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool allclose(const Tensor& a, const Tensor& b, double tol = 1e-12) {
    return a.same_shape(b) && max_abs_diff(a, b) <= tol;
}

} // namespace bridgelab
