#include "scunetpp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace scunet {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

thread_local bool g_autograd = true;
#ifndef NDEBUG
thread_local bool g_finite_checks = true;
#else
thread_local bool g_finite_checks = false;
#endif

void check_finite(const std::vector<double>& data, const char* where) {
    if (!g_finite_checks) return;
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + where);
        }
    }
}

std::vector<double>& grad_buf(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    return t.grad;
}

// Child node construction: parents and the backward closure are only kept
// when the node participates in an active graph.
Tensor make_node(Shape shape, std::vector<double> data,
                 std::vector<std::shared_ptr<TensorImpl>> parents,
                 std::function<void(const std::vector<double>&)> backward_fn, const char* op) {
    check_finite(data, op);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (g_autograd) {
        for (const auto& p : parents) {
            if (p->needs_grad) {
                impl->needs_grad = true;
                break;
            }
        }
    }
    if (impl->needs_grad) {
        impl->parents = std::move(parents);
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(impl);
}

std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<size_t>(i)] = acc;
        acc *= s[static_cast<size_t>(i)];
    }
    return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        const int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " are not broadcast-compatible");
        }
        out[r - 1 - i] = std::max(da, db);
    }
    return out;
}

// Element strides of `s` aligned to the rank of `out`, zeroed on broadcast axes.
std::vector<int64_t> bcast_strides(const Shape& s, const Shape& out) {
    const auto st = strides_of(s);
    std::vector<int64_t> res(out.size(), 0);
    for (size_t i = 0; i < s.size(); ++i) {
        const size_t oi = out.size() - s.size() + i;
        res[oi] = (s[i] == 1 && out[oi] != 1) ? 0 : st[i];
    }
    return res;
}

// Walks all multi-indices of `shape`, advancing a set of strided offsets.
struct StridedWalk {
    explicit StridedWalk(const Shape& shape) : shape_(shape), counter_(shape.size(), 0) {}

    template <size_t N>
    void advance(int64_t (&offs)[N], const std::vector<int64_t> (&strides)[N]) {
        for (int d = static_cast<int>(shape_.size()) - 1; d >= 0; --d) {
            const auto du = static_cast<size_t>(d);
            ++counter_[du];
            for (size_t k = 0; k < N; ++k) offs[k] += strides[k][du];
            if (counter_[du] < shape_[du]) return;
            counter_[du] = 0;
            for (size_t k = 0; k < N; ++k) offs[k] -= strides[k][du] * shape_[du];
        }
    }

    const Shape& shape_;
    std::vector<int64_t> counter_;
};

enum class BinOp { Add, Sub, Mul, Div };

const char* bin_name(BinOp op) {
    switch (op) {
        case BinOp::Add: return "add";
        case BinOp::Sub: return "sub";
        case BinOp::Mul: return "mul";
        case BinOp::Div: return "div";
    }
    return "?";
}

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), bin_name(op));
    const int64_t n = shape_numel(out_shape);
    const std::vector<int64_t> sa = bcast_strides(a.shape(), out_shape);
    const std::vector<int64_t> sb = bcast_strides(b.shape(), out_shape);

    std::vector<double> out(static_cast<size_t>(n));
    {
        StridedWalk walk(out_shape);
        int64_t offs[2] = {0, 0};
        const std::vector<int64_t> strides[2] = {sa, sb};
        const auto& da = a.data();
        const auto& db = b.data();
        for (int64_t i = 0; i < n; ++i) {
            const double x = da[static_cast<size_t>(offs[0])];
            const double y = db[static_cast<size_t>(offs[1])];
            double v = 0;
            switch (op) {
                case BinOp::Add: v = x + y; break;
                case BinOp::Sub: v = x - y; break;
                case BinOp::Mul: v = x * y; break;
                case BinOp::Div: v = x / y; break;
            }
            out[static_cast<size_t>(i)] = v;
            walk.advance(offs, strides);
        }
    }

    auto pa = a.impl();
    auto pb = b.impl();
    auto bwd = [pa, pb, out_shape, sa, sb, op, n](const std::vector<double>& g) {
        const bool ga = pa->needs_grad;
        const bool gb = pb->needs_grad;
        if (!ga && !gb) return;
        std::vector<double>* bufa = ga ? &grad_buf(*pa) : nullptr;
        std::vector<double>* bufb = gb ? &grad_buf(*pb) : nullptr;
        StridedWalk walk(out_shape);
        int64_t offs[2] = {0, 0};
        const std::vector<int64_t> strides[2] = {sa, sb};
        for (int64_t i = 0; i < n; ++i) {
            const double gi = g[static_cast<size_t>(i)];
            const size_t ia = static_cast<size_t>(offs[0]);
            const size_t ib = static_cast<size_t>(offs[1]);
            switch (op) {
                case BinOp::Add:
                    if (ga) (*bufa)[ia] += gi;
                    if (gb) (*bufb)[ib] += gi;
                    break;
                case BinOp::Sub:
                    if (ga) (*bufa)[ia] += gi;
                    if (gb) (*bufb)[ib] -= gi;
                    break;
                case BinOp::Mul:
                    if (ga) (*bufa)[ia] += gi * pb->data[ib];
                    if (gb) (*bufb)[ib] += gi * pa->data[ia];
                    break;
                case BinOp::Div: {
                    const double bv = pb->data[ib];
                    if (ga) (*bufa)[ia] += gi / bv;
                    if (gb) (*bufb)[ib] -= gi * pa->data[ia] / (bv * bv);
                    break;
                }
            }
            walk.advance(offs, strides);
        }
    };
    return make_node(out_shape, std::move(out), {pa, pb}, std::move(bwd), bin_name(op));
}

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        double* crow = C + i * N;
        const double* arow = A + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const double aik = arow[k];
            const double* brow = B + k * N;
            for (int64_t j = 0; j < N; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C[M,K] += A[M,N] * B^T where B is [K,N]
void gemm_nt_acc(const double* A, const double* B, double* C, int64_t M, int64_t N, int64_t K) {
    for (int64_t i = 0; i < M; ++i) {
        const double* arow = A + i * N;
        double* crow = C + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const double* brow = B + k * N;
            double acc = 0.0;
            for (int64_t j = 0; j < N; ++j) acc += arow[j] * brow[j];
            crow[k] += acc;
        }
    }
}

// C[K,N] += A^T * B where A is [M,K], B is [M,N]
void gemm_tn_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        const double* arow = A + m * K;
        const double* brow = B + m * N;
        for (int64_t k = 0; k < K; ++k) {
            const double amk = arow[k];
            if (amk == 0.0) continue;
            double* crow = C + k * N;
            for (int64_t j = 0; j < N; ++j) crow[j] += amk * brow[j];
        }
    }
}

}  // namespace

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    for (int64_t d : shape) {
        if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    impl->needs_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    check_finite(data, "from_data");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    impl->needs_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

int64_t Tensor::dim(int i) const {
    const int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) throw DimensionError("axis out of range for shape " + shape_str(shape()));
    return impl_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
        throw DimensionError("index rank mismatch for shape " + shape_str(shape()));
    }
    const auto st = strides_of(impl_->shape);
    int64_t off = 0;
    size_t d = 0;
    for (int64_t i : idx) off += i * st[d++];
    return impl_->data[static_cast<size_t>(off)];
}

const std::vector<double>& Tensor::grad() const {
    if (!impl_->grad_set && impl_->grad.empty()) {
        throw StateError("gradient not computed for this tensor");
    }
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.clear();
    impl_->grad_set = false;
}

Tensor Tensor::detached() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return Tensor(impl);
}

// ---------------------------------------------------------------------------
// Autograd state

bool autograd_enabled() { return g_autograd; }

NoGradGuard::NoGradGuard() : prev_(g_autograd) { g_autograd = false; }
NoGradGuard::~NoGradGuard() { g_autograd = prev_; }

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool enabled) { g_finite_checks = enabled; }

void backward(const Tensor& loss) {
    auto root = loss.impl();
    if (!root) throw StateError("backward on an undefined tensor");
    if (root->numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(root->shape));
    }
    if (!root->needs_grad) {
        throw StateError("loss is not attached to a graph with differentiable inputs");
    }
    if (root->backward_ran) {
        throw StateError("backward already ran on this graph; rebuild the forward pass");
    }

    // Iterative post-order DFS: producers end up before consumers.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorImpl* p = f.node->parents[f.next++].get();
            if (p->needs_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (TensorImpl* n : order) {
        if (n->requires_grad && n->grad_set) {
            throw StateError("gradients from a previous backward are still set; reset them first");
        }
    }

    grad_buf(*root)[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* n = *it;
        if (n->backward_fn) {
            if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
            n->backward_fn(n->grad);
        }
        n->backward_ran = true;
        if (n->requires_grad) n->grad_set = true;
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Div); }

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& v : out) v *= s;
    auto pa = a.impl();
    auto bwd = [pa, s](const std::vector<double>& g) {
        if (!pa->needs_grad) return;
        auto& buf = grad_buf(*pa);
        for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * s;
    };
    return make_node(a.shape(), std::move(out), {pa}, std::move(bwd), "scale");
}

Tensor add_const(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (double& v : out) v += c;
    auto pa = a.impl();
    auto bwd = [pa](const std::vector<double>& g) {
        if (!pa->needs_grad) return;
        auto& buf = grad_buf(*pa);
        for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
    };
    return make_node(a.shape(), std::move(out), {pa}, std::move(bwd), "add_const");
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    auto px = x.impl();
    auto bwd = [px](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (size_t i = 0; i < g.size(); ++i) {
            if (px->data[i] > 0.0) buf[i] += g[i];
        }
    };
    return make_node(x.shape(), std::move(out), {px}, std::move(bwd), "relu");
}

Tensor gelu(const Tensor& x) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) {
        const double v = xd[i];
        out[i] = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    }
    auto px = x.impl();
    auto bwd = [px](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (size_t i = 0; i < g.size(); ++i) {
            const double v = px->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            buf[i] += g[i] * (cdf + v * pdf);
        }
    };
    return make_node(x.shape(), std::move(out), {px}, std::move(bwd), "gelu");
}

Tensor softmax(const Tensor& x, int axis) {
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw DimensionError("softmax: axis out of range for shape " + shape_str(x.shape()));
    }
    const auto& s = x.shape();
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (int i = axis + 1; i < r; ++i) inner *= s[static_cast<size_t>(i)];
    const int64_t L = s[static_cast<size_t>(axis)];

    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * L * inner + in;
            double mx = xd[static_cast<size_t>(base)];
            for (int64_t l = 1; l < L; ++l) mx = std::max(mx, xd[static_cast<size_t>(base + l * inner)]);
            double sum = 0.0;
            for (int64_t l = 0; l < L; ++l) {
                const double e = std::exp(xd[static_cast<size_t>(base + l * inner)] - mx);
                out[static_cast<size_t>(base + l * inner)] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int64_t l = 0; l < L; ++l) out[static_cast<size_t>(base + l * inner)] *= inv;
        }
    }

    auto px = x.impl();
    std::vector<double> y = out;  // backward needs the normalized output
    auto bwd = [px, y = std::move(y), outer, inner, L](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * L * inner + in;
                double dot = 0.0;
                for (int64_t l = 0; l < L; ++l) {
                    const size_t i = static_cast<size_t>(base + l * inner);
                    dot += g[i] * y[i];
                }
                for (int64_t l = 0; l < L; ++l) {
                    const size_t i = static_cast<size_t>(base + l * inner);
                    buf[i] += y[i] * (g[i] - dot);
                }
            }
        }
    };
    return make_node(x.shape(), std::move(out), {px}, std::move(bwd), "softmax");
}

// ---------------------------------------------------------------------------
// matmul / linear

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    const int64_t M = sa[sa.size() - 2];
    const int64_t K = sa[sa.size() - 1];
    const int64_t K2 = sb[sb.size() - 2];
    const int64_t N = sb[sb.size() - 1];
    if (K != K2) {
        throw DimensionError("matmul: inner extents differ for shapes " + shape_str(sa) + " and " +
                             shape_str(sb));
    }
    const Shape batch_a(sa.begin(), sa.end() - 2);
    const Shape batch_b(sb.begin(), sb.end() - 2);
    const Shape batch = broadcast_shape(batch_a, batch_b, "matmul");
    Shape out_shape = batch;
    out_shape.push_back(M);
    out_shape.push_back(N);

    // Strides per batch axis, in elements of the respective tensor.
    std::vector<int64_t> stb_a(batch.size(), 0);
    std::vector<int64_t> stb_b(batch.size(), 0);
    {
        const auto full_a = strides_of(sa);
        const auto full_b = strides_of(sb);
        for (size_t i = 0; i < batch_a.size(); ++i) {
            const size_t oi = batch.size() - batch_a.size() + i;
            stb_a[oi] = (batch_a[i] == 1 && batch[oi] != 1) ? 0 : full_a[i];
        }
        for (size_t i = 0; i < batch_b.size(); ++i) {
            const size_t oi = batch.size() - batch_b.size() + i;
            stb_b[oi] = (batch_b[i] == 1 && batch[oi] != 1) ? 0 : full_b[i];
        }
    }

    const int64_t nbatch = shape_numel(batch);
    std::vector<double> out(static_cast<size_t>(nbatch * M * N), 0.0);
    {
        StridedWalk walk(batch);
        int64_t offs[2] = {0, 0};
        const std::vector<int64_t> strides[2] = {stb_a, stb_b};
        const auto& da = a.data();
        const auto& db = b.data();
        for (int64_t bi = 0; bi < nbatch; ++bi) {
            gemm_nn_acc(da.data() + offs[0], db.data() + offs[1], out.data() + bi * M * N, M, K, N);
            walk.advance(offs, strides);
        }
    }

    auto pa = a.impl();
    auto pb = b.impl();
    auto bwd = [pa, pb, batch, stb_a, stb_b, M, K, N, nbatch](const std::vector<double>& g) {
        const bool ga = pa->needs_grad;
        const bool gb = pb->needs_grad;
        if (!ga && !gb) return;
        std::vector<double>* bufa = ga ? &grad_buf(*pa) : nullptr;
        std::vector<double>* bufb = gb ? &grad_buf(*pb) : nullptr;
        StridedWalk walk(batch);
        int64_t offs[2] = {0, 0};
        const std::vector<int64_t> strides[2] = {stb_a, stb_b};
        for (int64_t bi = 0; bi < nbatch; ++bi) {
            const double* gblock = g.data() + bi * M * N;
            if (ga) gemm_nt_acc(gblock, pb->data.data() + offs[1], bufa->data() + offs[0], M, N, K);
            if (gb) gemm_tn_acc(pa->data.data() + offs[0], gblock, bufb->data() + offs[1], M, K, N);
            walk.advance(offs, strides);
        }
    };
    return make_node(std::move(out_shape), std::move(out), {pa, pb}, std::move(bwd), "matmul");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw DimensionError("linear: weight must be rank 2, got " + shape_str(w.shape()));
    const int64_t K = x.shape().back();
    const int64_t Kw = w.shape()[0];
    const int64_t N = w.shape()[1];
    if (K != Kw) {
        throw DimensionError("linear: input last extent " + shape_str(x.shape()) +
                             " does not match weight " + shape_str(w.shape()));
    }
    const bool has_bias = b.defined();
    if (has_bias && (b.rank() != 1 || b.shape()[0] != N)) {
        throw DimensionError("linear: bias shape " + shape_str(b.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    }
    const int64_t Mrows = x.numel() / K;

    std::vector<double> out(static_cast<size_t>(Mrows * N), 0.0);
    gemm_nn_acc(x.data().data(), w.data().data(), out.data(), Mrows, K, N);
    if (has_bias) {
        const auto& bd = b.data();
        for (int64_t m = 0; m < Mrows; ++m) {
            double* row = out.data() + m * N;
            for (int64_t j = 0; j < N; ++j) row[j] += bd[static_cast<size_t>(j)];
        }
    }
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    out_shape.push_back(N);

    auto px = x.impl();
    auto pw = w.impl();
    std::vector<std::shared_ptr<TensorImpl>> parents = {px, pw};
    std::shared_ptr<TensorImpl> pbias;
    if (has_bias) {
        pbias = b.impl();
        parents.push_back(pbias);
    }
    auto bwd = [px, pw, pbias, Mrows, K, N](const std::vector<double>& g) {
        if (px->needs_grad) {
            gemm_nt_acc(g.data(), pw->data.data(), grad_buf(*px).data(), Mrows, N, K);
        }
        if (pw->needs_grad) {
            gemm_tn_acc(px->data.data(), g.data(), grad_buf(*pw).data(), Mrows, K, N);
        }
        if (pbias && pbias->needs_grad) {
            auto& buf = grad_buf(*pbias);
            for (int64_t m = 0; m < Mrows; ++m) {
                const double* row = g.data() + m * N;
                for (int64_t j = 0; j < N; ++j) buf[static_cast<size_t>(j)] += row[j];
            }
        }
    };
    return make_node(std::move(out_shape), std::move(out), std::move(parents), std::move(bwd),
                     "linear");
}

// ---------------------------------------------------------------------------
// Normalization

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int64_t C = x.shape().back();
    if (gamma.numel() != C || beta.numel() != C) {
        throw DimensionError("layer_norm: channel extent " + std::to_string(C) +
                             " does not match gamma " + shape_str(gamma.shape()) + " / beta " +
                             shape_str(beta.shape()));
    }
    if (eps < 0) throw UsageError("layer_norm: eps must be >= 0");
    const int64_t rows = x.numel() / C;

    const auto& xd = x.data();
    const auto& gd = gamma.data();
    const auto& bd = beta.data();
    std::vector<double> out(xd.size());
    std::vector<double> xhat(xd.size());
    std::vector<double> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * C;
        double mean = 0.0;
        for (int64_t c = 0; c < C; ++c) mean += row[c];
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            const double d = row[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);  // biased estimator
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        for (int64_t c = 0; c < C; ++c) {
            const double xh = (row[c] - mean) * inv;
            xhat[static_cast<size_t>(r * C + c)] = xh;
            out[static_cast<size_t>(r * C + c)] = xh * gd[static_cast<size_t>(c)] + bd[static_cast<size_t>(c)];
        }
    }

    auto px = x.impl();
    auto pg = gamma.impl();
    auto pb = beta.impl();
    auto bwd = [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                C](const std::vector<double>& g) {
        if (pg->needs_grad) {
            auto& buf = grad_buf(*pg);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < C; ++c)
                    buf[static_cast<size_t>(c)] +=
                        g[static_cast<size_t>(r * C + c)] * xhat[static_cast<size_t>(r * C + c)];
        }
        if (pb->needs_grad) {
            auto& buf = grad_buf(*pb);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < C; ++c) buf[static_cast<size_t>(c)] += g[static_cast<size_t>(r * C + c)];
        }
        if (px->needs_grad) {
            auto& buf = grad_buf(*px);
            const auto& gd = pg->data;
            for (int64_t r = 0; r < rows; ++r) {
                double mean_gy = 0.0, mean_gyx = 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    const size_t i = static_cast<size_t>(r * C + c);
                    const double gy = g[i] * gd[static_cast<size_t>(c)];
                    mean_gy += gy;
                    mean_gyx += gy * xhat[i];
                }
                mean_gy /= static_cast<double>(C);
                mean_gyx /= static_cast<double>(C);
                const double inv = inv_std[static_cast<size_t>(r)];
                for (int64_t c = 0; c < C; ++c) {
                    const size_t i = static_cast<size_t>(r * C + c);
                    const double gy = g[i] * gd[static_cast<size_t>(c)];
                    buf[i] += inv * (gy - mean_gy - xhat[i] * mean_gyx);
                }
            }
        }
    };
    return make_node(x.shape(), std::move(out), {px, pg, pb}, std::move(bwd), "layer_norm");
}

Tensor batch_norm(const Tensor& x, BatchNormParams& p, Mode mode, double momentum, double eps) {
    if (x.rank() != 4) throw DimensionError("batch_norm: expected [B,C,H,W], got " + shape_str(x.shape()));
    const int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (p.gamma.numel() != C || p.beta.numel() != C || p.running_mean.numel() != C ||
        p.running_var.numel() != C) {
        throw DimensionError("batch_norm: parameter extents do not match channel count " +
                             std::to_string(C) + " for input " + shape_str(x.shape()));
    }
    if (momentum < 0.0 || momentum > 1.0) throw UsageError("batch_norm: momentum must be in [0,1]");
    const int64_t HW = H * W;
    const int64_t N = B * HW;

    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    std::vector<double> mean_c, inv_c;

    if (mode == Mode::Train) {
        if (N == 1) {
            throw DegenerateStatsError("batch_norm: train-mode statistics over a single element (B*H*W == 1)");
        }
        mean_c.assign(static_cast<size_t>(C), 0.0);
        inv_c.assign(static_cast<size_t>(C), 0.0);
        auto& rm = p.running_mean.raw_data();
        auto& rv = p.running_var.raw_data();
        for (int64_t c = 0; c < C; ++c) {
            double mean = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                const double* plane = xd.data() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) mean += plane[i];
            }
            mean /= static_cast<double>(N);
            double var = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                const double* plane = xd.data() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    const double d = plane[i] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(N);  // biased estimator
            mean_c[static_cast<size_t>(c)] = mean;
            inv_c[static_cast<size_t>(c)] = 1.0 / std::sqrt(var + eps);
            rm[static_cast<size_t>(c)] = (1.0 - momentum) * rm[static_cast<size_t>(c)] + momentum * mean;
            rv[static_cast<size_t>(c)] = (1.0 - momentum) * rv[static_cast<size_t>(c)] + momentum * var;
        }
    } else {
        mean_c.assign(p.running_mean.data().begin(), p.running_mean.data().end());
        inv_c.assign(static_cast<size_t>(C), 0.0);
        for (int64_t c = 0; c < C; ++c) {
            inv_c[static_cast<size_t>(c)] =
                1.0 / std::sqrt(p.running_var.data()[static_cast<size_t>(c)] + eps);
        }
    }

    std::vector<double> xhat(xd.size());
    const auto& gd = p.gamma.data();
    const auto& bd = p.beta.data();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t c = 0; c < C; ++c) {
            const double m = mean_c[static_cast<size_t>(c)];
            const double inv = inv_c[static_cast<size_t>(c)];
            const double ga = gd[static_cast<size_t>(c)];
            const double be = bd[static_cast<size_t>(c)];
            const double* plane = xd.data() + (b * C + c) * HW;
            double* oplane = out.data() + (b * C + c) * HW;
            double* hplane = xhat.data() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double xh = (plane[i] - m) * inv;
                hplane[i] = xh;
                oplane[i] = xh * ga + be;
            }
        }
    }

    auto px = x.impl();
    auto pg = p.gamma.impl();
    auto pb = p.beta.impl();
    const bool train = (mode == Mode::Train);
    auto bwd = [px, pg, pb, xhat = std::move(xhat), inv_c = std::move(inv_c), B, C, HW, N,
                train](const std::vector<double>& g) {
        if (pg->needs_grad) {
            auto& buf = grad_buf(*pg);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const double* gp = g.data() + (b * C + c) * HW;
                    const double* hp = xhat.data() + (b * C + c) * HW;
                    double acc = 0.0;
                    for (int64_t i = 0; i < HW; ++i) acc += gp[i] * hp[i];
                    buf[static_cast<size_t>(c)] += acc;
                }
        }
        if (pb->needs_grad) {
            auto& buf = grad_buf(*pb);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const double* gp = g.data() + (b * C + c) * HW;
                    double acc = 0.0;
                    for (int64_t i = 0; i < HW; ++i) acc += gp[i];
                    buf[static_cast<size_t>(c)] += acc;
                }
        }
        if (px->needs_grad) {
            auto& buf = grad_buf(*px);
            const auto& gd = pg->data;
            for (int64_t c = 0; c < C; ++c) {
                const double ga = gd[static_cast<size_t>(c)];
                const double inv = inv_c[static_cast<size_t>(c)];
                if (!train) {
                    const double k = ga * inv;
                    for (int64_t b = 0; b < B; ++b) {
                        const double* gp = g.data() + (b * C + c) * HW;
                        double* bp = buf.data() + (b * C + c) * HW;
                        for (int64_t i = 0; i < HW; ++i) bp[i] += gp[i] * k;
                    }
                    continue;
                }
                double mean_gy = 0.0, mean_gyx = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const double* gp = g.data() + (b * C + c) * HW;
                    const double* hp = xhat.data() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) {
                        const double gy = gp[i] * ga;
                        mean_gy += gy;
                        mean_gyx += gy * hp[i];
                    }
                }
                mean_gy /= static_cast<double>(N);
                mean_gyx /= static_cast<double>(N);
                for (int64_t b = 0; b < B; ++b) {
                    const double* gp = g.data() + (b * C + c) * HW;
                    const double* hp = xhat.data() + (b * C + c) * HW;
                    double* bp = buf.data() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) {
                        const double gy = gp[i] * ga;
                        bp[i] += inv * (gy - mean_gy - hp[i] * mean_gyx);
                    }
                }
            }
        }
    };
    return make_node(x.shape(), std::move(out), {px, pg, pb}, std::move(bwd), "batch_norm");
}

// ---------------------------------------------------------------------------
// Convolution (im2col + matmul composite; gradients flow through both legs)

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
    if (x.rank() != 4 || kernel.rank() != 4) {
        throw DimensionError("conv2d: expected input [B,Cin,H,W] and kernel [Cout,Cin,kh,kw], got " +
                             shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
    }
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
    const int64_t B = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int64_t Cout = kernel.shape()[0], Ck = kernel.shape()[1], kh = kernel.shape()[2],
                  kw = kernel.shape()[3];
    if (Cin != Ck) {
        throw DimensionError("conv2d: channel mismatch between input " + shape_str(x.shape()) +
                             " and kernel " + shape_str(kernel.shape()));
    }
    if (kh > H + 2 * padding || kw > W + 2 * padding) {
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) +
                             " larger than padded input " + shape_str(x.shape()));
    }
    const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    const int64_t CK = Cin * kh * kw;

    std::vector<int64_t> idx(static_cast<size_t>(B * Ho * Wo * CK));
    size_t pos = 0;
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t oy = 0; oy < Ho; ++oy) {
            for (int64_t ox = 0; ox < Wo; ++ox) {
                for (int64_t c = 0; c < Cin; ++c) {
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = oy * stride - padding + ky;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = ox * stride - padding + kx;
                            idx[pos++] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                             ? ((b * Cin + c) * H + iy) * W + ix
                                             : -1;
                        }
                    }
                }
            }
        }
    }
    Tensor cols = index_map(x, {B, Ho * Wo, CK}, std::move(idx));
    Tensor kt = permute(reshape(kernel, {Cout, CK}), {1, 0});
    Tensor y = matmul(cols, kt);  // [B, Ho*Wo, Cout]
    return permute(reshape(y, {B, Ho, Wo, Cout}), {0, 3, 1, 2});
}

// ---------------------------------------------------------------------------
// Data movement

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.data());
    auto px = x.impl();
    auto bwd = [px](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
    };
    return make_node(std::move(shape), std::move(out), {px}, std::move(bwd), "reshape");
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    const int r = x.rank();
    if (static_cast<int>(axes.size()) != r) {
        throw DimensionError("permute: axes size does not match rank of " + shape_str(x.shape()));
    }
    std::vector<bool> seen(static_cast<size_t>(r), false);
    for (int a : axes) {
        if (a < 0 || a >= r || seen[static_cast<size_t>(a)]) {
            throw DimensionError("permute: invalid axis permutation");
        }
        seen[static_cast<size_t>(a)] = true;
    }
    const auto& s = x.shape();
    Shape out_shape(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = s[static_cast<size_t>(axes[static_cast<size_t>(i)])];
    const auto src_strides = strides_of(s);
    std::vector<int64_t> walk_strides(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i)
        walk_strides[static_cast<size_t>(i)] = src_strides[static_cast<size_t>(axes[static_cast<size_t>(i)])];

    const int64_t n = x.numel();
    std::vector<int64_t> idx(static_cast<size_t>(n));
    StridedWalk walk(out_shape);
    int64_t offs[1] = {0};
    const std::vector<int64_t> strides[1] = {walk_strides};
    for (int64_t i = 0; i < n; ++i) {
        idx[static_cast<size_t>(i)] = offs[0];
        walk.advance(offs, strides);
    }
    return index_map(x, std::move(out_shape), std::move(idx));
}

Tensor index_map(const Tensor& x, Shape out_shape, std::vector<int64_t> idx) {
    const int64_t n = shape_numel(out_shape);
    if (n != static_cast<int64_t>(idx.size())) {
        throw InternalError("index_map: index array does not match output shape");
    }
    const auto& xd = x.data();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t j = idx[static_cast<size_t>(i)];
        out[static_cast<size_t>(i)] = j >= 0 ? xd[static_cast<size_t>(j)] : 0.0;
    }
    auto px = x.impl();
    auto bwd = [px, idx = std::move(idx)](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (size_t i = 0; i < g.size(); ++i) {
            const int64_t j = idx[i];
            if (j >= 0) buf[static_cast<size_t>(j)] += g[i];
        }
    };
    return make_node(std::move(out_shape), std::move(out), {px}, std::move(bwd), "index_map");
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw UsageError("concat: empty input list");
    const int r = xs[0].rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw DimensionError("concat: axis out of range");
    int64_t axis_total = 0;
    for (const auto& t : xs) {
        if (t.rank() != r) throw DimensionError("concat: rank mismatch");
        for (int d = 0; d < r; ++d) {
            if (d != axis && t.shape()[static_cast<size_t>(d)] != xs[0].shape()[static_cast<size_t>(d)]) {
                throw DimensionError("concat: shape " + shape_str(t.shape()) +
                                     " incompatible with " + shape_str(xs[0].shape()));
            }
        }
        axis_total += t.shape()[static_cast<size_t>(axis)];
    }
    Shape out_shape = xs[0].shape();
    out_shape[static_cast<size_t>(axis)] = axis_total;

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= out_shape[static_cast<size_t>(d)];

    std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
    std::vector<int64_t> axis_lens;
    for (const auto& t : xs) axis_lens.push_back(t.shape()[static_cast<size_t>(axis)]);
    for (int64_t o = 0; o < outer; ++o) {
        int64_t dst_axis = 0;
        for (size_t j = 0; j < xs.size(); ++j) {
            const int64_t block = axis_lens[j] * inner;
            const double* src = xs[j].data().data() + o * block;
            double* dst = out.data() + (o * axis_total + dst_axis) * inner;
            std::copy(src, src + block, dst);
            dst_axis += axis_lens[j];
        }
    }

    std::vector<std::shared_ptr<TensorImpl>> parents;
    for (const auto& t : xs) parents.push_back(t.impl());
    auto bwd = [parents, axis_lens, outer, inner, axis_total](const std::vector<double>& g) {
        for (int64_t o = 0; o < outer; ++o) {
            int64_t src_axis = 0;
            for (size_t j = 0; j < parents.size(); ++j) {
                const int64_t block = axis_lens[j] * inner;
                if (parents[j]->needs_grad) {
                    auto& buf = grad_buf(*parents[j]);
                    const double* src = g.data() + (o * axis_total + src_axis) * inner;
                    double* dst = buf.data() + o * block;
                    for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
                }
                src_axis += axis_lens[j];
            }
        }
    };
    return make_node(std::move(out_shape), std::move(out), std::move(parents), std::move(bwd),
                     "concat");
}

Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t len) {
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw DimensionError("narrow: axis out of range");
    const int64_t extent = x.shape()[static_cast<size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > extent) {
        throw DimensionError("narrow: range [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") out of bounds for extent " +
                             std::to_string(extent));
    }
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.shape()[static_cast<size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= x.shape()[static_cast<size_t>(d)];

    std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
    const auto& xd = x.data();
    for (int64_t o = 0; o < outer; ++o) {
        const double* src = xd.data() + (o * extent + start) * inner;
        std::copy(src, src + len * inner, out.data() + o * len * inner);
    }
    auto px = x.impl();
    auto bwd = [px, outer, inner, extent, start, len](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = g.data() + o * len * inner;
            double* dst = buf.data() + (o * extent + start) * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    };
    return make_node(std::move(out_shape), std::move(out), {px}, std::move(bwd), "narrow");
}

// ---------------------------------------------------------------------------
// Reductions & losses

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    auto px = x.impl();
    auto bwd = [px](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (double& v : buf) v += g[0];
    };
    return make_node({}, {acc}, {px}, std::move(bwd), "sum_all");
}

Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    acc *= inv;
    auto px = x.impl();
    auto bwd = [px, inv](const std::vector<double>& g) {
        if (!px->needs_grad) return;
        auto& buf = grad_buf(*px);
        for (double& v : buf) v += g[0] * inv;
    };
    return make_node({}, {acc}, {px}, std::move(bwd), "mean_all");
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<uint8_t>& targets) {
    if (logits.rank() != 4) {
        throw DimensionError("cross_entropy: expected logits [B,K,H,W], got " + shape_str(logits.shape()));
    }
    const int64_t B = logits.shape()[0], K = logits.shape()[1], H = logits.shape()[2],
                  W = logits.shape()[3];
    const int64_t P = B * H * W;
    if (static_cast<int64_t>(targets.size()) != P) {
        throw DimensionError("cross_entropy: target count " + std::to_string(targets.size()) +
                             " does not match logits " + shape_str(logits.shape()));
    }
    const int64_t HW = H * W;
    const auto& ld = logits.data();
    std::vector<double> lse(static_cast<size_t>(P));
    double loss = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t p = 0; p < HW; ++p) {
            const int64_t base = b * K * HW + p;
            const uint8_t t = targets[static_cast<size_t>(b * HW + p)];
            if (t >= K) throw UsageError("cross_entropy: target class out of range");
            double mx = ld[static_cast<size_t>(base)];
            for (int64_t k = 1; k < K; ++k) mx = std::max(mx, ld[static_cast<size_t>(base + k * HW)]);
            double sum = 0.0;
            for (int64_t k = 0; k < K; ++k) sum += std::exp(ld[static_cast<size_t>(base + k * HW)] - mx);
            const double l = mx + std::log(sum);
            lse[static_cast<size_t>(b * HW + p)] = l;
            loss += l - ld[static_cast<size_t>(base + static_cast<int64_t>(t) * HW)];
        }
    }
    loss /= static_cast<double>(P);

    auto pl = logits.impl();
    auto bwd = [pl, targets, lse = std::move(lse), B, K, HW, P](const std::vector<double>& g) {
        if (!pl->needs_grad) return;
        auto& buf = grad_buf(*pl);
        const double gp = g[0] / static_cast<double>(P);
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t p = 0; p < HW; ++p) {
                const int64_t base = b * K * HW + p;
                const double l = lse[static_cast<size_t>(b * HW + p)];
                const uint8_t t = targets[static_cast<size_t>(b * HW + p)];
                for (int64_t k = 0; k < K; ++k) {
                    const double prob = std::exp(pl->data[static_cast<size_t>(base + k * HW)] - l);
                    const double ind = (k == static_cast<int64_t>(t)) ? 1.0 : 0.0;
                    buf[static_cast<size_t>(base + k * HW)] += (prob - ind) * gp;
                }
            }
        }
    };
    return make_node({}, {loss}, {pl}, std::move(bwd), "cross_entropy");
}

// ---------------------------------------------------------------------------
// Finite differences

double finite_diff_coord(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         int64_t coord, double h) {
    if (h <= 0) throw UsageError("finite_diff: h must be > 0");
    NoGradGuard ng;
    std::vector<double> d = x.data();
    const double orig = d[static_cast<size_t>(coord)];
    d[static_cast<size_t>(coord)] = orig + h;
    const double fp = f(Tensor::from_data(x.shape(), d));
    d[static_cast<size_t>(coord)] = orig - h;
    const double fm = f(Tensor::from_data(x.shape(), d));
    return (fp - fm) / (2.0 * h);
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    const int64_t n = x.numel();
    std::vector<double> g(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) g[static_cast<size_t>(i)] = finite_diff_coord(f, x, i, h);
    return Tensor::from_data(x.shape(), std::move(g));
}

}  // namespace scunet
