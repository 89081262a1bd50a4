#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "scunetpp/errors.hpp"

namespace scunet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Mode { Train, Eval };

// One node of the computation graph. Children hold shared_ptrs to their
// parents, so a graph is released as soon as the root handle is dropped.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;

    bool requires_grad = false;  // leaf/parameter flag
    bool needs_grad = false;     // participates in the current graph
    std::vector<double> grad;
    bool grad_set = false;
    bool backward_ran = false;

    std::vector<std::shared_ptr<TensorImpl>> parents;
    // Receives this node's output gradient, accumulates into parents' grads.
    std::function<void(const std::vector<double>&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

// Value-semantics handle over a shared graph node. Tensors are immutable
// after forward construction except for grad fields; parameter data may be
// mutated between graph builds (optimizer updates, buffer refreshes).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t dim(int i) const;
    int64_t numel() const { return impl_->numel(); }

    const std::vector<double>& data() const { return impl_->data; }
    std::vector<double>& raw_data() { return impl_->data; }

    double item() const;
    double at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) {
        impl_->requires_grad = v;
        impl_->needs_grad = impl_->needs_grad || v;
    }
    bool grad_set() const { return impl_->grad_set; }
    const std::vector<double>& grad() const;
    void zero_grad();

    // Value copy with no graph attachment.
    Tensor detached() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Autograd control

bool autograd_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Finiteness checks after every op: default on in debug builds, off in
// release. Toggleable at runtime for tests.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

// Reverse topological sweep from a scalar loss. Gradients accumulate
// additively across fan-out. Calling backward a second time on the same
// graph, or while any reachable parameter still holds a gradient from an
// earlier sweep, raises StateError: gradients must be explicitly reset.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Elementwise / broadcast ops (numpy-style trailing-axis broadcasting)

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_const(const Tensor& a, double c);

Tensor relu(const Tensor& x);
// Exact Gaussian-CDF form x * Phi(x).
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);

// ---------------------------------------------------------------------------
// Linear algebra

// a: [..., M, K], b: [..., K, N]; batch dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [..., K] times w: [K, N] plus optional bias [N]; fused affine map over
// the last axis.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

// ---------------------------------------------------------------------------
// Normalization

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

struct BatchNormParams {
    Tensor gamma;         // [C]
    Tensor beta;          // [C]
    Tensor running_mean;  // [C], buffer
    Tensor running_var;   // [C], buffer
};

// x: [B,C,H,W]. Train mode normalizes with biased batch statistics over
// (B,H,W) and updates the running buffers in place; eval mode uses the
// running buffers. B*H*W == 1 in train mode raises DegenerateStatsError.
Tensor batch_norm(const Tensor& x, BatchNormParams& p, Mode mode, double momentum, double eps);

// ---------------------------------------------------------------------------
// Convolution

// x: [B,Cin,H,W], kernel: [Cout,Cin,kh,kw]; cross-correlation, floor output
// extents, no bias.
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding);

// ---------------------------------------------------------------------------
// Data movement

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);

// out[i] = idx[i] >= 0 ? x[idx[i]] : 0. Covers every structural rearrange in
// the model (windows, rolls, parity grids, pixel shuffles, im2col) with an
// exact scatter-add backward.
Tensor index_map(const Tensor& x, Shape out_shape, std::vector<int64_t> idx);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t len);

// ---------------------------------------------------------------------------
// Reductions & losses

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// logits: [B,K,H,W], targets: flat B*H*W class indices. Mean pixelwise
// negative log-likelihood with a stable log-softmax.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<uint8_t>& targets);

// ---------------------------------------------------------------------------
// Gradient oracle (central differences); used by verification paths only.

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);
double finite_diff_coord(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         int64_t coord, double h);

}  // namespace scunet
