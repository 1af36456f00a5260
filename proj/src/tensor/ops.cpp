#include "selfaug/tensor/ops.hpp"

#include "selfaug/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

namespace selfaug {
namespace {

constexpr double kGeluScale = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, to_string(a.shape()), to_string(b.shape())));
    }
}

// Number of leading copies of `suffix` inside `full`, or throws.
std::size_t suffix_repeats(const char* op, const Shape& full, const Shape& suffix) {
    if (suffix.size() > full.size() || !std::equal(suffix.rbegin(), suffix.rend(), full.rbegin())) {
        throw DimensionError(
            fmt::format("{}: {} is not a trailing suffix of {}", op, to_string(suffix), to_string(full)));
    }
    return shape_size(full) / std::max<std::size_t>(shape_size(suffix), 1);
}

// c[m, n] += a[m, k] * b[k, n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// da[m, k] += dc[m, n] * b[k, n]^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* drow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
            da[i * k + p] += acc;
        }
    }
}

// db[k, n] += a[m, k]^T * dc[m, n]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* drow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            double* brow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * drow[j];
        }
    }
}

// Mean of a strided sequence, refined once so constant inputs return their value.
double stable_mean(const double* x, std::size_t n, std::size_t stride) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i * stride];
    double mu = s / static_cast<double>(n);
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += x[i * stride] - mu;
    return mu + r / static_cast<double>(n);
}

// Normalizes `n` values spaced by `stride`, writing xhat and returning 1/sqrt(var + eps).
double normalize_strided(const double* x, double* xhat, std::size_t n, std::size_t stride, double eps) {
    const double mu = stable_mean(x, n, stride);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i * stride] - mu;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) xhat[i * stride] = (x[i * stride] - mu) * rstd;
    return rstd;
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)), accumulated.
void normalize_backward(const double* dxhat, const double* xhat, double* dx, std::size_t n, std::size_t stride,
                        double rstd) {
    double m1 = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m1 += dxhat[i * stride];
        m2 += dxhat[i * stride] * xhat[i * stride];
    }
    m1 /= static_cast<double>(n);
    m2 /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        dx[i * stride] += rstd * (dxhat[i * stride] - m1 - xhat[i * stride] * m2);
    }
}

double gelu_value(double x) {
    const double u = kGeluScale * (x + kGeluCubic * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
    const double u = kGeluScale * (x + kGeluCubic * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

const char* unary_name(UnaryKind kind) {
    switch (kind) {
    case UnaryKind::relu: return "relu";
    case UnaryKind::gelu: return "gelu";
    case UnaryKind::exp: return "exp";
    case UnaryKind::log: return "log";
    case UnaryKind::sqrt: return "sqrt";
    case UnaryKind::neg: return "neg";
    }
    return "unary";
}

} // namespace

Var matmul(Var a, Var b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) {
        throw DimensionError(fmt::format("matmul: operands must be at least 2-D, got {} and {}", to_string(sa),
                                         to_string(sb)));
    }
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa.back();
    const std::size_t n = sb.back();
    const Shape batch_a(sa.begin(), sa.end() - 2);
    const Shape batch_b(sb.begin(), sb.end() - 2);
    if (sb[sb.size() - 2] != k) {
        throw DimensionError(fmt::format("matmul: inner dimensions differ, {} x {}", to_string(sa), to_string(sb)));
    }
    Shape batch;
    bool a_shared = false;
    bool b_shared = false;
    if (batch_a == batch_b) {
        batch = batch_a;
    } else if (batch_b.empty()) {
        batch = batch_a;
        b_shared = true;
    } else if (batch_a.empty()) {
        batch = batch_b;
        a_shared = true;
    } else {
        throw DimensionError(
            fmt::format("matmul: batch dimensions not broadcastable, {} x {}", to_string(sa), to_string(sb)));
    }
    const std::size_t nb = shape_size(batch);
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape);

    const double* pa = a.value().data().data();
    const double* pb = b.value().data().data();
    double* pc = out.data().data();
    if (b_shared) {
        gemm_nn(pa, pb, pc, nb * m, k, n);
    } else {
        for (std::size_t i = 0; i < nb; ++i) {
            gemm_nn(pa + (a_shared ? 0 : i * m * k), pb + i * k * n, pc + i * m * n, m, k, n);
        }
    }

    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.graph().record("matmul", std::move(out), {a, b}, [=](Graph& g, std::size_t self) {
        const double* dc = g.out_grad(self).data().data();
        const double* av = g.value(ia).data().data();
        const double* bv = g.value(ib).data().data();
        if (Tensor* ga = g.grad_sink(ia)) {
            double* da = ga->data().data();
            if (b_shared) {
                gemm_nt(dc, bv, da, nb * m, k, n);
            } else {
                for (std::size_t i = 0; i < nb; ++i) {
                    gemm_nt(dc + i * m * n, bv + i * k * n, da + (a_shared ? 0 : i * m * k), m, k, n);
                }
            }
        }
        if (Tensor* gb = g.grad_sink(ib)) {
            double* db = gb->data().data();
            if (b_shared) {
                gemm_tn(av, dc, db, nb * m, k, n);
            } else {
                for (std::size_t i = 0; i < nb; ++i) {
                    gemm_tn(av + (a_shared ? 0 : i * m * k), dc + i * m * n, db + i * k * n, m, k, n);
                }
            }
        }
    });
}

Var elementwise(Var a, Var b, ElementwiseKind kind) {
    require_same_shape("elementwise", a.value(), b.value());
    Tensor out = a.value();
    const auto& bv = b.value().values();
    auto& ov = out.values();
    const char* name = "add";
    switch (kind) {
    case ElementwiseKind::add:
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
        break;
    case ElementwiseKind::sub:
        name = "sub";
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
        break;
    case ElementwiseKind::mul:
        name = "mul";
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
        break;
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.graph().record(name, std::move(out), {a, b}, [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        if (Tensor* ga = g.grad_sink(ia)) {
            auto& da = ga->values();
            if (kind == ElementwiseKind::mul) {
                const auto& other = g.value(ib).values();
                for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * other[i];
            } else {
                for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
            }
        }
        if (Tensor* gb = g.grad_sink(ib)) {
            auto& db = gb->values();
            if (kind == ElementwiseKind::mul) {
                const auto& other = g.value(ia).values();
                for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * other[i];
            } else if (kind == ElementwiseKind::sub) {
                for (std::size_t i = 0; i < d.size(); ++i) db[i] -= d[i];
            } else {
                for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i];
            }
        }
    });
}

Var add_bcast(Var a, Var b) {
    const std::size_t reps = suffix_repeats("add_bcast", a.shape(), b.shape());
    const std::size_t inner = b.value().size();
    Tensor out = a.value();
    auto& ov = out.values();
    const auto& bv = b.value().values();
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t j = 0; j < inner; ++j) ov[r * inner + j] += bv[j];
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.graph().record("add_bcast", std::move(out), {a, b}, [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        if (Tensor* ga = g.grad_sink(ia)) {
            auto& da = ga->values();
            for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
        }
        if (Tensor* gb = g.grad_sink(ib)) {
            auto& db = gb->values();
            for (std::size_t r = 0; r < reps; ++r) {
                for (std::size_t j = 0; j < inner; ++j) db[j] += d[r * inner + j];
            }
        }
    });
}

Var mul_bcast(Var a, Var b) {
    const std::size_t reps = suffix_repeats("mul_bcast", a.shape(), b.shape());
    const std::size_t inner = b.value().size();
    Tensor out = a.value();
    auto& ov = out.values();
    const auto& bv = b.value().values();
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t j = 0; j < inner; ++j) ov[r * inner + j] *= bv[j];
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.graph().record("mul_bcast", std::move(out), {a, b}, [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        if (Tensor* ga = g.grad_sink(ia)) {
            auto& da = ga->values();
            const auto& bv2 = g.value(ib).values();
            for (std::size_t r = 0; r < reps; ++r) {
                for (std::size_t j = 0; j < inner; ++j) da[r * inner + j] += d[r * inner + j] * bv2[j];
            }
        }
        if (Tensor* gb = g.grad_sink(ib)) {
            auto& db = gb->values();
            const auto& av = g.value(ia).values();
            for (std::size_t r = 0; r < reps; ++r) {
                for (std::size_t j = 0; j < inner; ++j) db[j] += d[r * inner + j] * av[r * inner + j];
            }
        }
    });
}

Var scale(Var a, double factor) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= factor;
    const std::size_t ia = a.id();
    return a.graph().record("scale", std::move(out), {a}, [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        auto& da = g.grad_sink(ia)->values();
        for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * factor;
    });
}

Var unary(Var a, UnaryKind kind) {
    Tensor out = a.value();
    auto& ov = out.values();
    for (double& v : ov) {
        switch (kind) {
        case UnaryKind::relu: v = v > 0.0 ? v : 0.0; break;
        case UnaryKind::gelu: v = gelu_value(v); break;
        case UnaryKind::exp: v = std::exp(v); break;
        case UnaryKind::log:
            if (!(v > 0.0)) throw NumericDomainError(fmt::format("log of non-positive value {}", v));
            v = std::log(v);
            break;
        case UnaryKind::sqrt:
            if (!(v >= 0.0)) throw NumericDomainError(fmt::format("sqrt of negative value {}", v));
            v = std::sqrt(v);
            break;
        case UnaryKind::neg: v = -v; break;
        }
    }
    const std::size_t ia = a.id();
    return a.graph().record(unary_name(kind), std::move(out), {a}, [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        const auto& x = g.value(ia).values();
        const auto& y = g.value(self).values();
        auto& da = g.grad_sink(ia)->values();
        for (std::size_t i = 0; i < d.size(); ++i) {
            double local = 0.0;
            switch (kind) {
            case UnaryKind::relu: local = x[i] > 0.0 ? 1.0 : 0.0; break;
            case UnaryKind::gelu: local = gelu_derivative(x[i]); break;
            case UnaryKind::exp: local = y[i]; break;
            case UnaryKind::log: local = 1.0 / x[i]; break;
            case UnaryKind::sqrt: local = 0.5 / y[i]; break;
            case UnaryKind::neg: local = -1.0; break;
            }
            da[i] += d[i] * local;
        }
    });
}

namespace {

// Shared backward of both softmax variants: dx = y * (dy - sum(dy * y)) per row.
Graph::BackwardFn softmax_backward(std::size_t ia, std::size_t n) {
    return [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        const auto& y = g.value(self).values();
        auto& da = g.grad_sink(ia)->values();
        const std::size_t rows = n == 0 ? 0 : y.size() / n;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t o = r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += d[o + j] * y[o + j];
            for (std::size_t j = 0; j < n; ++j) da[o + j] += y[o + j] * (d[o + j] - dot);
        }
    };
}

} // namespace

Var softmax_rows(Var a) {
    if (a.value().rank() == 0) throw DimensionError("softmax_rows: needs at least 1-D input");
    const std::size_t n = a.shape().back();
    Tensor out = a.value();
    auto& v = out.values();
    const std::size_t rows = n == 0 ? 0 : v.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = v.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            total += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= total;
    }
    return a.graph().record("softmax_rows", std::move(out), {a}, softmax_backward(a.id(), n));
}

Var masked_softmax_rows(Var a, const Tensor& key_mask) {
    const Shape& s = a.shape();
    if (s.size() < 2 || key_mask.rank() != 2 || key_mask.dim(0) != s.front() || key_mask.dim(1) != s.back()) {
        throw DimensionError(fmt::format("masked_softmax_rows: mask {} does not fit scores {}",
                                         to_string(key_mask.shape()), to_string(s)));
    }
    const std::size_t batch = s.front();
    const std::size_t n = s.back();
    Tensor out = a.value();
    auto& v = out.values();
    const std::size_t rows_per_batch = v.size() / (batch * n);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* mask = key_mask.data().data() + b * n;
        for (std::size_t r = 0; r < rows_per_batch; ++r) {
            double* row = v.data() + (b * rows_per_batch + r) * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (mask[j] != 0.0) mx = std::max(mx, row[j]);
            }
            if (!std::isfinite(mx)) throw NumericDomainError("masked_softmax_rows: row has no unmasked entry");
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = mask[j] != 0.0 ? std::exp(row[j] - mx) : 0.0;
                total += row[j];
            }
            for (std::size_t j = 0; j < n; ++j) row[j] /= total;
        }
    }
    return a.graph().record("masked_softmax_rows", std::move(out), {a}, softmax_backward(a.id(), n));
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
    const Shape& s = a.shape();
    if (s.empty() || s.back() == 0) throw DimensionError("layer_norm: needs a non-empty last axis");
    const std::size_t d = s.back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw DimensionError(fmt::format("layer_norm: gain {} / bias {} must be [{}]", to_string(gain.shape()),
                                         to_string(bias.shape()), d));
    }
    const std::size_t rows = a.value().size() / d;
    std::vector<double> xhat(a.value().size());
    std::vector<double> rstd(rows);
    const double* x = a.value().data().data();
    for (std::size_t r = 0; r < rows; ++r) rstd[r] = normalize_strided(x + r * d, xhat.data() + r * d, d, 1, eps);

    Tensor out(s);
    const auto& gv = gain.value().values();
    const auto& bv = bias.value().values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) ov[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
    }

    const std::size_t ia = a.id();
    const std::size_t ig = gain.id();
    const std::size_t ib = bias.id();
    return a.graph().record(
        "layer_norm", std::move(out), {a, gain, bias},
        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& g, std::size_t self) {
            const auto& dy = g.out_grad(self).values();
            if (Tensor* gg = g.grad_sink(ig)) {
                auto& dg = gg->values();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) dg[j] += dy[r * d + j] * xhat[r * d + j];
                }
            }
            if (Tensor* gb = g.grad_sink(ib)) {
                auto& db = gb->values();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) db[j] += dy[r * d + j];
                }
            }
            if (Tensor* ga = g.grad_sink(ia)) {
                const auto& gv2 = g.value(ig).values();
                std::vector<double> dxhat(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) dxhat[j] = dy[r * d + j] * gv2[j];
                    normalize_backward(dxhat.data(), xhat.data() + r * d, ga->data().data() + r * d, d, 1, rstd[r]);
                }
            }
        });
}

Var batch_norm_features(Var a, double eps) {
    if (a.value().rank() != 2) {
        throw DimensionError(fmt::format("batch_norm_features: expects [batch, d], got {}", to_string(a.shape())));
    }
    const std::size_t batch = a.shape()[0];
    const std::size_t d = a.shape()[1];
    if (batch < 2) throw ConfigError("batch_norm_features: batch statistics need at least 2 rows");
    std::vector<double> xhat(a.value().size());
    std::vector<double> rstd(d);
    const double* x = a.value().data().data();
    for (std::size_t j = 0; j < d; ++j) rstd[j] = normalize_strided(x + j, xhat.data() + j, batch, d, eps);
    Tensor out(a.shape(), xhat);
    const std::size_t ia = a.id();
    return a.graph().record(
        "batch_norm_features", std::move(out), {a},
        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& g, std::size_t self) {
            const double* dy = g.out_grad(self).data().data();
            double* dx = g.grad_sink(ia)->data().data();
            for (std::size_t j = 0; j < d; ++j) normalize_backward(dy + j, xhat.data() + j, dx + j, batch, d, rstd[j]);
        });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
    if (logits.value().rank() != 2) {
        throw DimensionError(fmt::format("cross_entropy: logits must be [batch, c], got {}", to_string(logits.shape())));
    }
    const std::size_t batch = logits.shape()[0];
    const std::size_t c = logits.shape()[1];
    if (targets.size() != batch) {
        throw DimensionError(fmt::format("cross_entropy: {} targets for batch of {}", targets.size(), batch));
    }
    std::vector<double> probs(batch * c);
    double total = 0.0;
    const double* x = logits.value().data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        const int t = targets[b];
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw ValidationError(fmt::format("cross_entropy: target {} outside [0, {})", t, c));
        }
        const double* row = x + b * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) probs[b * c + j] = std::exp(row[j] - lse);
        total += lse - row[t];
    }
    std::vector<int> tgt(targets.begin(), targets.end());
    const std::size_t il = logits.id();
    return logits.graph().record(
        "cross_entropy", Tensor::scalar(total / static_cast<double>(batch)), {logits},
        [=, probs = std::move(probs), tgt = std::move(tgt)](Graph& g, std::size_t self) {
            const double d = g.out_grad(self).item() / static_cast<double>(batch);
            auto& dl = g.grad_sink(il)->values();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t j = 0; j < c; ++j) {
                    const double onehot = static_cast<std::size_t>(tgt[b]) == j ? 1.0 : 0.0;
                    dl[b * c + j] += d * (probs[b * c + j] - onehot);
                }
            }
        });
}

Var binary_cross_entropy_with_logits(Var logits, const Tensor& targets) {
    require_same_shape("binary_cross_entropy_with_logits", logits.value(), targets);
    const auto& x = logits.value().values();
    const auto& t = targets.values();
    if (x.empty()) throw DimensionError("binary_cross_entropy_with_logits: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (t[i] != 0.0 && t[i] != 1.0) {
            throw ValidationError(fmt::format("binary_cross_entropy_with_logits: target {} is not 0 or 1", t[i]));
        }
        total += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
    }
    const double count = static_cast<double>(x.size());
    const std::size_t il = logits.id();
    return logits.graph().record(
        "binary_cross_entropy_with_logits", Tensor::scalar(total / count), {logits},
        [=, t = t](Graph& g, std::size_t self) {
            const double d = g.out_grad(self).item() / count;
            const auto& xv = g.value(il).values();
            auto& dl = g.grad_sink(il)->values();
            for (std::size_t i = 0; i < xv.size(); ++i) {
                const double sig = xv[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-xv[i]))
                                                : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
                dl[i] += d * (sig - t[i]);
            }
        });
}

Var sum(Var a) {
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    const std::size_t ia = a.id();
    return a.graph().record("sum", Tensor::scalar(total), {a}, [=](Graph& g, std::size_t self) {
        const double d = g.out_grad(self).item();
        for (double& v : g.grad_sink(ia)->values()) v += d;
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw DimensionError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var reshape(Var a, Shape shape) {
    if (shape_size(shape) != a.value().size()) {
        throw DimensionError(fmt::format("reshape: {} -> {} changes the element count", to_string(a.shape()),
                                         to_string(shape)));
    }
    Tensor out(std::move(shape), a.value().values());
    const std::size_t ia = a.id();
    return a.graph().record("reshape", std::move(out), {a}, [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        auto& da = g.grad_sink(ia)->values();
        for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
    });
}

Var permute(Var a, const std::vector<std::size_t>& axes) {
    const Shape& s = a.shape();
    const std::size_t r = s.size();
    std::vector<bool> seen(r, false);
    if (axes.size() != r) throw DimensionError(fmt::format("permute: {} axes for rank {}", axes.size(), r));
    for (auto ax : axes) {
        if (ax >= r || seen[ax]) throw DimensionError("permute: axes must be a permutation");
        seen[ax] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[axes[i]];
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];

    // source offset of every output element, in output order
    const std::size_t n = a.value().size();
    std::vector<std::size_t> src(n);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
        src[o] = off;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    Tensor out(out_shape);
    const auto& in = a.value().values();
    auto& ov = out.values();
    for (std::size_t o = 0; o < n; ++o) ov[o] = in[src[o]];
    const std::size_t ia = a.id();
    return a.graph().record("permute", std::move(out), {a}, [=, src = std::move(src)](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        auto& da = g.grad_sink(ia)->values();
        for (std::size_t o = 0; o < d.size(); ++o) da[src[o]] += d[o];
    });
}

Var transpose(Var a) {
    const std::size_t r = a.value().rank();
    if (r < 2) throw DimensionError("transpose: needs at least 2-D input");
    std::vector<std::size_t> axes(r);
    for (std::size_t i = 0; i < r; ++i) axes[i] = i;
    std::swap(axes[r - 1], axes[r - 2]);
    return permute(a, axes);
}

Var embedding(Var table, std::span<const std::int32_t> ids, const Shape& index_shape) {
    if (table.value().rank() != 2) throw DimensionError("embedding: table must be [vocab, d]");
    if (shape_size(index_shape) != ids.size()) {
        throw DimensionError(fmt::format("embedding: {} ids for index shape {}", ids.size(), to_string(index_shape)));
    }
    const std::size_t vocab = table.shape()[0];
    const std::size_t d = table.shape()[1];
    Shape out_shape = index_shape;
    out_shape.push_back(d);
    Tensor out(out_shape);
    const auto& tv = table.value().values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw DimensionError(fmt::format("embedding: id {} outside vocabulary of {}", ids[i], vocab));
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, ov.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    const std::size_t it = table.id();
    return table.graph().record("embedding", std::move(out), {table},
                                [=, idv = std::move(idv)](Graph& g, std::size_t self) {
                                    const auto& dy = g.out_grad(self).values();
                                    auto& dt = g.grad_sink(it)->values();
                                    for (std::size_t i = 0; i < idv.size(); ++i) {
                                        const std::size_t row = static_cast<std::size_t>(idv[i]) * d;
                                        for (std::size_t j = 0; j < d; ++j) dt[row + j] += dy[i * d + j];
                                    }
                                });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    const Shape& s = a.shape();
    if (s.empty() || begin + count > s[0]) {
        throw DimensionError(fmt::format("slice_rows: [{}, {}) outside {}", begin, begin + count, to_string(s)));
    }
    const std::size_t inner = s[0] == 0 ? 0 : a.value().size() / s[0];
    Shape out_shape = s;
    out_shape[0] = count;
    const auto& in = a.value().values();
    std::vector<double> data(in.begin() + static_cast<std::ptrdiff_t>(begin * inner),
                             in.begin() + static_cast<std::ptrdiff_t>((begin + count) * inner));
    const std::size_t ia = a.id();
    return a.graph().record("slice_rows", Tensor(out_shape, std::move(data)), {a}, [=](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        auto& da = g.grad_sink(ia)->values();
        for (std::size_t i = 0; i < d.size(); ++i) da[begin * inner + i] += d[i];
    });
}

Var select_position(Var hidden, std::size_t pos) {
    const Shape& s = hidden.shape();
    if (s.size() != 3 || pos >= s[1]) {
        throw DimensionError(fmt::format("select_position: position {} of {}", pos, to_string(s)));
    }
    const std::size_t batch = s[0], seq = s[1], d = s[2];
    Tensor out({batch, d});
    const auto& in = hidden.value().values();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) out[b * d + j] = in[(b * seq + pos) * d + j];
    }
    const std::size_t ih = hidden.id();
    return hidden.graph().record("select_position", std::move(out), {hidden}, [=](Graph& g, std::size_t self) {
        const auto& dy = g.out_grad(self).values();
        auto& dh = g.grad_sink(ih)->values();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < d; ++j) dh[(b * seq + pos) * d + j] += dy[b * d + j];
        }
    });
}

Var masked_mean(Var hidden, const Tensor& mask) {
    const Shape& s = hidden.shape();
    if (s.size() != 3 || mask.shape() != Shape{s[0], s[1]}) {
        throw DimensionError(
            fmt::format("masked_mean: mask {} does not fit {}", to_string(mask.shape()), to_string(s)));
    }
    const std::size_t batch = s[0], seq = s[1], d = s[2];
    std::vector<double> inv_count(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        double c = 0.0;
        for (std::size_t t = 0; t < seq; ++t) c += mask[b * seq + t] != 0.0 ? 1.0 : 0.0;
        if (c == 0.0) throw DimensionError(fmt::format("masked_mean: row {} has no real token", b));
        inv_count[b] = 1.0 / c;
    }
    Tensor out({batch, d});
    const auto& in = hidden.value().values();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < seq; ++t) {
            if (mask[b * seq + t] == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) out[b * d + j] += in[(b * seq + t) * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) out[b * d + j] *= inv_count[b];
    }
    const std::size_t ih = hidden.id();
    return hidden.graph().record(
        "masked_mean", std::move(out), {hidden},
        [=, inv_count = std::move(inv_count), m = mask.values()](Graph& g, std::size_t self) {
            const auto& dy = g.out_grad(self).values();
            auto& dh = g.grad_sink(ih)->values();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t t = 0; t < seq; ++t) {
                    if (m[b * seq + t] == 0.0) continue;
                    for (std::size_t j = 0; j < d; ++j) dh[(b * seq + t) * d + j] += dy[b * d + j] * inv_count[b];
                }
            }
        });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError(fmt::format("dropout rate {} outside [0, 1)", rate));
    if (rate == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> mask(a.value().size());
    for (double& m : mask) m = keep(rng) ? keep_scale : 0.0;
    Tensor out = a.value();
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] *= mask[i];
    const std::size_t ia = a.id();
    return a.graph().record("dropout", std::move(out), {a}, [=, mask = std::move(mask)](Graph& g, std::size_t self) {
        const auto& d = g.out_grad(self).values();
        auto& da = g.grad_sink(ia)->values();
        for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * mask[i];
    });
}

Var detach(Var a) { return a.graph().constant(a.value()); }

} // namespace selfaug
