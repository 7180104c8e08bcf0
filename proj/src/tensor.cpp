#include "nnpm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nnpm {

size_t numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t e : shape) n *= e;
    return n;
}

Tensor::Tensor(std::vector<size_t> shape_in, bool requires_grad_in)
    : shape(std::move(shape_in)), data(numel(shape), 0.0), requires_grad(requires_grad_in) {}

size_t Tensor::rows() const {
    if (shape.size() != 2) throw DimensionError("rows(): tensor is not 2-D, shape " + shape_str());
    return shape[0];
}

size_t Tensor::cols() const {
    if (shape.size() != 2) throw DimensionError("cols(): tensor is not 2-D, shape " + shape_str());
    return shape[1];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

TensorPtr make_tensor(std::vector<size_t> shape, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

TensorPtr make_tensor(std::vector<size_t> shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size())
        throw DimensionError("make_tensor: data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(numel(shape)));
    auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
    t->data = std::move(data);
    return t;
}

TensorPtr make_scalar(double value, bool requires_grad) {
    return make_tensor({1, 1}, {value}, requires_grad);
}

TensorPtr zeros_like(const Tensor& t) { return make_tensor(t.shape, false); }

void fill_xavier_uniform(Tensor& t, size_t fan_in, size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
}

void Graph::record(TensorPtr out, std::vector<TensorPtr> inputs, std::function<void()> backward_fn) {
    if (!recording_) return;
    bool any = false;
    for (const auto& in : inputs) any = any || in->requires_grad;
    if (!any) return;
    out->requires_grad = true;
    nodes_.push_back(Node{std::move(out), std::move(inputs), std::move(backward_fn)});
}

void Graph::backward(const TensorPtr& loss) {
    if (!loss->is_scalar())
        throw ContractError("backward: loss must be scalar, got shape " + loss->shape_str());
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->out->grad.empty()) continue;  // no gradient reached this node
        for (auto& in : it->inputs)
            if (in->requires_grad) in->ensure_grad();
        it->backward_fn();
    }
}

void Graph::clear() { nodes_.clear(); }

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

// Shared skeleton for unary pointwise ops: dy/dx given (x, y).
TensorPtr unary_pointwise(Graph& g, const TensorPtr& x, double (*fwd)(double),
                          double (*dfn)(double, double)) {
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->size(); ++i) out->data[i] = fwd(x->data[i]);
    g.record(out, {x}, [x, out, dfn] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->size(); ++i)
            x->grad[i] += dfn(x->data[i], out->data[i]) * out->grad[i];
    });
    return out;
}

}  // namespace

TensorPtr matmul(Graph& g, const TensorPtr& a, const TensorPtr& b) {
    const size_t m = a->rows(), k = a->cols(), k2 = b->rows(), p = b->cols();
    if (k != k2)
        throw DimensionError("matmul: inner extents disagree, " + a->shape_str() + " vs " +
                             b->shape_str());
    auto out = make_tensor({m, p});
    const double* A = a->data.data();
    const double* B = b->data.data();
    double* C = out->data.data();
    for (size_t i = 0; i < m; ++i) {
        const double* Ai = A + i * k;
        double* Ci = C + i * p;
        for (size_t kk = 0; kk < k; ++kk) {
            const double av = Ai[kk];
            const double* Bk = B + kk * p;
            for (size_t j = 0; j < p; ++j) Ci[j] = std::fma(av, Bk[j], Ci[j]);
        }
    }
    g.record(out, {a, b}, [a, b, out, m, k, p] {
        const double* G = out->grad.data();
        if (a->requires_grad) {
            // dA = dC * B^T
            double* dA = a->grad.data();
            const double* B = b->data.data();
            for (size_t i = 0; i < m; ++i) {
                const double* Gi = G + i * p;
                double* dAi = dA + i * k;
                for (size_t kk = 0; kk < k; ++kk) {
                    const double* Bk = B + kk * p;
                    double acc = 0.0;
                    for (size_t j = 0; j < p; ++j) acc = std::fma(Gi[j], Bk[j], acc);
                    dAi[kk] += acc;
                }
            }
        }
        if (b->requires_grad) {
            // dB = A^T * dC
            double* dB = b->grad.data();
            const double* A = a->data.data();
            for (size_t i = 0; i < m; ++i) {
                const double* Ai = A + i * k;
                const double* Gi = G + i * p;
                for (size_t kk = 0; kk < k; ++kk) {
                    const double av = Ai[kk];
                    double* dBk = dB + kk * p;
                    for (size_t j = 0; j < p; ++j) dBk[j] = std::fma(av, Gi[j], dBk[j]);
                }
            }
        }
    });
    return out;
}

TensorPtr transpose(Graph& g, const TensorPtr& x) {
    const size_t m = x->rows(), n = x->cols();
    auto out = make_tensor({n, m});
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out->data[j * m + i] = x->data[i * n + j];
    g.record(out, {x}, [x, out, m, n] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) x->grad[i * n + j] += out->grad[j * m + i];
    });
    return out;
}

TensorPtr conv2d(Graph& g, const TensorPtr& input, const TensorPtr& kernels, const TensorPtr& bias,
                 size_t stride, size_t padding) {
    if (input->shape.size() != 3)
        throw DimensionError("conv2d: input must be [C,H,W], got " + input->shape_str());
    if (kernels->shape.size() != 4)
        throw DimensionError("conv2d: kernels must be [O,C,kh,kw], got " + kernels->shape_str());
    if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
    const size_t C = input->shape[0], H = input->shape[1], W = input->shape[2];
    const size_t O = kernels->shape[0], Ck = kernels->shape[1], kh = kernels->shape[2],
                 kw = kernels->shape[3];
    if (C != Ck)
        throw DimensionError("conv2d: input channels " + std::to_string(C) +
                             " != kernel channels " + std::to_string(Ck));
    if (kh > H + 2 * padding || kw > W + 2 * padding)
        throw DimensionError("conv2d: kernel " + kernels->shape_str() +
                             " larger than padded input " + input->shape_str());
    if (bias && (bias->shape.size() != 1 || bias->shape[0] != O))
        throw DimensionError("conv2d: bias must be [O], got " + bias->shape_str());
    const size_t Ho = (H + 2 * padding - kh) / stride + 1;
    const size_t Wo = (W + 2 * padding - kw) / stride + 1;

    auto out = make_tensor({O, Ho, Wo});
    const double* X = input->data.data();
    const double* K = kernels->data.data();
    double* Y = out->data.data();

    if (bias) {
        for (size_t o = 0; o < O; ++o)
            std::fill(Y + o * Ho * Wo, Y + (o + 1) * Ho * Wo, bias->data[o]);
    }
    // Scalar-times-row accumulation; the inner x loop runs over contiguous
    // memory in both input and output.
    for (size_t o = 0; o < O; ++o) {
        double* Yo = Y + o * Ho * Wo;
        for (size_t c = 0; c < C; ++c) {
            const double* Xc = X + c * H * W;
            const double* Koc = K + (o * C + c) * kh * kw;
            for (size_t ky = 0; ky < kh; ++ky) {
                for (size_t kx = 0; kx < kw; ++kx) {
                    const double kv = Koc[ky * kw + kx];
                    if (kv == 0.0) continue;
                    for (size_t y = 0; y < Ho; ++y) {
                        const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(padding);
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        const double* Xrow = Xc + static_cast<size_t>(iy) * W;
                        double* Yrow = Yo + y * Wo;
                        for (size_t x = 0; x < Wo; ++x) {
                            const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(padding);
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            Yrow[x] = std::fma(kv, Xrow[ix], Yrow[x]);
                        }
                    }
                }
            }
        }
    }

    std::vector<TensorPtr> inputs{input, kernels};
    if (bias) inputs.push_back(bias);
    g.record(out, inputs, [input, kernels, bias, out, C, H, W, O, kh, kw, Ho, Wo, stride, padding] {
        const double* G = out->grad.data();
        const double* X = input->data.data();
        const double* K = kernels->data.data();
        if (bias && bias->requires_grad) {
            for (size_t o = 0; o < O; ++o) {
                double acc = 0.0;
                const double* Go = G + o * Ho * Wo;
                for (size_t i = 0; i < Ho * Wo; ++i) acc += Go[i];
                bias->grad[o] += acc;
            }
        }
        for (size_t o = 0; o < O; ++o) {
            const double* Go = G + o * Ho * Wo;
            for (size_t c = 0; c < C; ++c) {
                const double* Xc = X + c * H * W;
                double* dXc = input->requires_grad ? input->grad.data() + c * H * W : nullptr;
                const double* Koc = K + (o * C + c) * kh * kw;
                double* dKoc = kernels->requires_grad ? kernels->grad.data() + (o * C + c) * kh * kw
                                                      : nullptr;
                for (size_t ky = 0; ky < kh; ++ky) {
                    for (size_t kx = 0; kx < kw; ++kx) {
                        const double kv = Koc[ky * kw + kx];
                        double kacc = 0.0;
                        for (size_t y = 0; y < Ho; ++y) {
                            const long iy =
                                static_cast<long>(y * stride + ky) - static_cast<long>(padding);
                            if (iy < 0 || iy >= static_cast<long>(H)) continue;
                            const double* Xrow = Xc + static_cast<size_t>(iy) * W;
                            double* dXrow =
                                dXc ? dXc + static_cast<size_t>(iy) * W : nullptr;
                            const double* Grow = Go + y * Wo;
                            for (size_t x = 0; x < Wo; ++x) {
                                const long ix =
                                    static_cast<long>(x * stride + kx) - static_cast<long>(padding);
                                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                const double gv = Grow[x];
                                kacc = std::fma(gv, Xrow[ix], kacc);
                                if (dXrow) dXrow[ix] = std::fma(gv, kv, dXrow[ix]);
                            }
                        }
                        if (dKoc) dKoc[ky * kw + kx] += kacc;
                    }
                }
            }
        }
    });
    return out;
}

TensorPtr maxpool_temporal(Graph& g, const TensorPtr& input, size_t pool) {
    if (input->shape.size() != 3)
        throw DimensionError("maxpool_temporal: input must be [C,H,W], got " + input->shape_str());
    if (pool < 1) throw ConfigError("maxpool_temporal: pool must be >= 1");
    const size_t C = input->shape[0], H = input->shape[1], W = input->shape[2];
    if (pool > H)
        throw DimensionError("maxpool_temporal: pool " + std::to_string(pool) +
                             " exceeds temporal extent " + std::to_string(H));
    const size_t Ho = H / pool;
    auto out = make_tensor({C, Ho, W});
    auto argmax = std::make_shared<std::vector<size_t>>(C * Ho * W);
    const double* X = input->data.data();
    double* Y = out->data.data();
    size_t* AM = argmax->data();
    for (size_t c = 0; c < C; ++c) {
        for (size_t y = 0; y < Ho; ++y) {
            const size_t base = c * H * W + y * pool * W;
            for (size_t x = 0; x < W; ++x) {
                size_t best = base + x;
                double bv = X[best];
                for (size_t t = 1; t < pool; ++t) {
                    const size_t idx = base + t * W + x;
                    if (X[idx] > bv) {
                        bv = X[idx];
                        best = idx;
                    }
                }
                Y[(c * Ho + y) * W + x] = bv;
                AM[(c * Ho + y) * W + x] = best;
            }
        }
    }
    g.record(out, {input}, [input, out, argmax] {
        if (!input->requires_grad) return;
        const size_t n = out->size();
        for (size_t i = 0; i < n; ++i) input->grad[(*argmax)[i]] += out->grad[i];
    });
    return out;
}

TensorPtr relu(Graph& g, const TensorPtr& x) {
    return unary_pointwise(
        g, x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

TensorPtr tanh_op(Graph& g, const TensorPtr& x) {
    return unary_pointwise(
        g, x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

TensorPtr sigmoid(Graph& g, const TensorPtr& x) {
    return unary_pointwise(
        g, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(*a, *b, "add");
    auto out = make_tensor(a->shape);
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    g.record(out, {a, b}, [a, b, out] {
        if (a->requires_grad)
            for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
        if (b->requires_grad)
            for (size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(*a, *b, "sub");
    auto out = make_tensor(a->shape);
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    g.record(out, {a, b}, [a, b, out] {
        if (a->requires_grad)
            for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
        if (b->requires_grad)
            for (size_t i = 0; i < b->size(); ++i) b->grad[i] -= out->grad[i];
    });
    return out;
}

TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(*a, *b, "mul");
    auto out = make_tensor(a->shape);
    for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    g.record(out, {a, b}, [a, b, out] {
        if (a->requires_grad)
            for (size_t i = 0; i < a->size(); ++i) a->grad[i] += b->data[i] * out->grad[i];
        if (b->requires_grad)
            for (size_t i = 0; i < b->size(); ++i) b->grad[i] += a->data[i] * out->grad[i];
    });
    return out;
}

TensorPtr scale(Graph& g, const TensorPtr& x, double c) {
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->size(); ++i) out->data[i] = c * x->data[i];
    g.record(out, {x}, [x, out, c] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->size(); ++i) x->grad[i] += c * out->grad[i];
    });
    return out;
}

TensorPtr add_scalar(Graph& g, const TensorPtr& x, double c) {
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->size(); ++i) out->data[i] = x->data[i] + c;
    g.record(out, {x}, [x, out] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr softmax(Graph& g, const TensorPtr& x, size_t axis) {
    const size_t m = x->rows(), n = x->cols();
    if (axis > 1) throw ConfigError("softmax: axis must be 0 or 1 for a 2-D tensor");
    auto out = make_tensor(x->shape);
    const size_t slices = axis == 1 ? m : n;
    const size_t len = axis == 1 ? n : m;
    const size_t stride_in = axis == 1 ? 1 : n;
    const size_t slice_stride = axis == 1 ? n : 1;
    for (size_t s = 0; s < slices; ++s) {
        const double* xs = x->data.data() + s * slice_stride;
        double* ys = out->data.data() + s * slice_stride;
        double mx = xs[0];
        for (size_t i = 1; i < len; ++i) mx = std::max(mx, xs[i * stride_in]);
        double z = 0.0;
        for (size_t i = 0; i < len; ++i) {
            const double e = std::exp(xs[i * stride_in] - mx);
            ys[i * stride_in] = e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (size_t i = 0; i < len; ++i) ys[i * stride_in] *= inv;
    }
    g.record(out, {x}, [x, out, slices, len, stride_in, slice_stride] {
        if (!x->requires_grad) return;
        // dx_i = y_i * (g_i - sum_j g_j y_j) per slice
        for (size_t s = 0; s < slices; ++s) {
            const double* ys = out->data.data() + s * slice_stride;
            const double* gs = out->grad.data() + s * slice_stride;
            double* dxs = x->grad.data() + s * slice_stride;
            double dot = 0.0;
            for (size_t i = 0; i < len; ++i) dot += gs[i * stride_in] * ys[i * stride_in];
            for (size_t i = 0; i < len; ++i)
                dxs[i * stride_in] += ys[i * stride_in] * (gs[i * stride_in] - dot);
        }
    });
    return out;
}

TensorPtr log_clamped(Graph& g, const TensorPtr& x, double floor) {
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->size(); ++i) out->data[i] = std::log(std::max(x->data[i], floor));
    g.record(out, {x}, [x, out, floor] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->size(); ++i)
            if (x->data[i] > floor) x->grad[i] += out->grad[i] / x->data[i];
    });
    return out;
}

TensorPtr sum_all(Graph& g, const TensorPtr& x) {
    double acc = 0.0;
    for (double v : x->data) acc += v;
    auto out = make_scalar(acc);
    g.record(out, {x}, [x, out] {
        if (!x->requires_grad) return;
        const double gv = out->grad[0];
        for (size_t i = 0; i < x->size(); ++i) x->grad[i] += gv;
    });
    return out;
}

TensorPtr mean_all(Graph& g, const TensorPtr& x) {
    if (x->size() == 0) throw ContractError("mean_all: empty tensor");
    double acc = 0.0;
    for (double v : x->data) acc += v;
    const double inv = 1.0 / static_cast<double>(x->size());
    auto out = make_scalar(acc * inv);
    g.record(out, {x}, [x, out, inv] {
        if (!x->requires_grad) return;
        const double gv = out->grad[0] * inv;
        for (size_t i = 0; i < x->size(); ++i) x->grad[i] += gv;
    });
    return out;
}

TensorPtr concat_rows(Graph& g, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    const size_t n = parts[0]->cols();
    size_t m = 0;
    for (const auto& p : parts) {
        if (p->cols() != n)
            throw DimensionError("concat_rows: column mismatch " + p->shape_str());
        m += p->rows();
    }
    auto out = make_tensor({m, n});
    size_t row = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + row * n);
        row += p->rows();
    }
    g.record(out, parts, [parts, out, n] {
        size_t row = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                const size_t count = p->size();
                for (size_t i = 0; i < count; ++i) p->grad[i] += out->grad[row * n + i];
            }
            row += p->rows();
        }
    });
    return out;
}

TensorPtr concat_cols(Graph& g, const TensorPtr& a, const TensorPtr& b) {
    const size_t m = a->rows();
    if (b->rows() != m)
        throw DimensionError("concat_cols: row mismatch " + a->shape_str() + " vs " +
                             b->shape_str());
    const size_t na = a->cols(), nb = b->cols();
    auto out = make_tensor({m, na + nb});
    for (size_t i = 0; i < m; ++i) {
        std::copy(a->data.begin() + i * na, a->data.begin() + (i + 1) * na,
                  out->data.begin() + i * (na + nb));
        std::copy(b->data.begin() + i * nb, b->data.begin() + (i + 1) * nb,
                  out->data.begin() + i * (na + nb) + na);
    }
    g.record(out, {a, b}, [a, b, out, m, na, nb] {
        for (size_t i = 0; i < m; ++i) {
            if (a->requires_grad)
                for (size_t j = 0; j < na; ++j) a->grad[i * na + j] += out->grad[i * (na + nb) + j];
            if (b->requires_grad)
                for (size_t j = 0; j < nb; ++j)
                    b->grad[i * nb + j] += out->grad[i * (na + nb) + na + j];
        }
    });
    return out;
}

TensorPtr slice_cols(Graph& g, const TensorPtr& x, size_t start, size_t len) {
    const size_t m = x->rows(), n = x->cols();
    if (start + len > n)
        throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") exceeds cols " + std::to_string(n));
    auto out = make_tensor({m, len});
    for (size_t i = 0; i < m; ++i)
        std::copy(x->data.begin() + i * n + start, x->data.begin() + i * n + start + len,
                  out->data.begin() + i * len);
    g.record(out, {x}, [x, out, m, n, start, len] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < len; ++j) x->grad[i * n + start + j] += out->grad[i * len + j];
    });
    return out;
}

TensorPtr slice_rows(Graph& g, const TensorPtr& x, size_t start, size_t len) {
    const size_t m = x->rows(), n = x->cols();
    if (start + len > m)
        throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") exceeds rows " + std::to_string(m));
    auto out = make_tensor({len, n});
    std::copy(x->data.begin() + start * n, x->data.begin() + (start + len) * n,
              out->data.begin());
    g.record(out, {x}, [x, out, n, start, len] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < len * n; ++i) x->grad[start * n + i] += out->grad[i];
    });
    return out;
}

TensorPtr gather_cols(Graph& g, const TensorPtr& x, const std::vector<size_t>& indices) {
    if (x->rows() != 1) throw DimensionError("gather_cols: expected [1,n], got " + x->shape_str());
    const size_t n = x->cols();
    for (size_t idx : indices)
        if (idx >= n) throw InputError("gather_cols: index " + std::to_string(idx) + " out of range");
    auto out = make_tensor({1, indices.size()});
    for (size_t i = 0; i < indices.size(); ++i) out->data[i] = x->data[indices[i]];
    auto idx_copy = std::make_shared<std::vector<size_t>>(indices);
    g.record(out, {x}, [x, out, idx_copy] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < idx_copy->size(); ++i) x->grad[(*idx_copy)[i]] += out->grad[i];
    });
    return out;
}

TensorPtr gather_per_row(Graph& g, const TensorPtr& x, const std::vector<size_t>& indices) {
    const size_t m = x->rows(), n = x->cols();
    if (indices.size() != m)
        throw DimensionError("gather_per_row: need one index per row, got " +
                             std::to_string(indices.size()) + " for " + std::to_string(m));
    for (size_t idx : indices)
        if (idx >= n)
            throw InputError("gather_per_row: index " + std::to_string(idx) + " out of range");
    auto out = make_tensor({m, 1});
    for (size_t i = 0; i < m; ++i) out->data[i] = x->data[i * n + indices[i]];
    auto idx_copy = std::make_shared<std::vector<size_t>>(indices);
    g.record(out, {x}, [x, out, idx_copy, n] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < idx_copy->size(); ++i)
            x->grad[i * n + (*idx_copy)[i]] += out->grad[i];
    });
    return out;
}

TensorPtr l2_normalize_row(Graph& g, const TensorPtr& x) {
    if (x->rows() != 1)
        throw DimensionError("l2_normalize_row: expected [1,d], got " + x->shape_str());
    const size_t d = x->cols();
    double sq = 0.0;
    for (double v : x->data) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw InputError("l2_normalize_row: vector has zero norm");
    const double inv = 1.0 / norm;
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < d; ++i) out->data[i] = x->data[i] * inv;
    g.record(out, {x}, [x, out, d, inv] {
        if (!x->requires_grad) return;
        double dot = 0.0;
        for (size_t i = 0; i < d; ++i) dot += out->grad[i] * out->data[i];
        for (size_t i = 0; i < d; ++i) x->grad[i] += inv * (out->grad[i] - dot * out->data[i]);
    });
    return out;
}

TensorPtr reshape(Graph& g, const TensorPtr& x, std::vector<size_t> new_shape) {
    if (numel(new_shape) != x->size())
        throw DimensionError("reshape: element count mismatch, " + x->shape_str());
    auto out = make_tensor(std::move(new_shape));
    out->data = x->data;
    g.record(out, {x}, [x, out] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr to_time_major(Graph& g, const TensorPtr& x) {
    if (x->shape.size() != 3)
        throw DimensionError("to_time_major: input must be [C,H,W], got " + x->shape_str());
    const size_t C = x->shape[0], H = x->shape[1], W = x->shape[2];
    auto out = make_tensor({H, C * W});
    for (size_t c = 0; c < C; ++c)
        for (size_t h = 0; h < H; ++h)
            for (size_t w = 0; w < W; ++w)
                out->data[h * C * W + c * W + w] = x->data[(c * H + h) * W + w];
    g.record(out, {x}, [x, out, C, H, W] {
        if (!x->requires_grad) return;
        for (size_t c = 0; c < C; ++c)
            for (size_t h = 0; h < H; ++h)
                for (size_t w = 0; w < W; ++w)
                    x->grad[(c * H + h) * W + w] += out->grad[h * C * W + c * W + w];
    });
    return out;
}

TensorPtr dropout(Graph& g, const TensorPtr& x, double p, Rng& rng, bool train_mode) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
    if (!train_mode || p == 0.0) return x;
    auto mask = std::make_shared<std::vector<double>>(x->size());
    const double scale_kept = 1.0 / (1.0 - p);
    for (size_t i = 0; i < x->size(); ++i)
        (*mask)[i] = rng.uniform01() < p ? 0.0 : scale_kept;
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->size(); ++i) out->data[i] = x->data[i] * (*mask)[i];
    g.record(out, {x}, [x, out, mask] {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < x->size(); ++i) x->grad[i] += (*mask)[i] * out->grad[i];
    });
    return out;
}

}  // namespace nnpm
