#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "veritree/rng.hpp"

namespace veritree::ad {

using Shape = std::vector<std::size_t>;
using Mask = std::vector<std::uint8_t>;

namespace detail {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

/// grad_of(parent) returns the call-local gradient buffer of a parent node.
using GradSink = std::function<std::vector<double>&(TensorNode&)>;

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // persistent; accumulates across backward() calls
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode& self, const std::vector<double>& self_grad,
                       const GradSink& grad_of)>
        backprop;

    std::size_t size() const { return values.size(); }
};

}  // namespace detail

/// Dense row-major tensor handle. Copies share the underlying node, so a
/// Tensor behaves like a reference into the recorded computation graph.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_values(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor row(std::vector<double> values);  // 1 x n

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rows() const;  // rank-2 helpers; a rank-1 tensor counts as 1 x n
    std::size_t cols() const;

    const std::vector<double>& values() const;
    std::vector<double>& mutable_values();  // in-place edits (optimizer updates)
    double item() const;                    // scalar tensors only
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    const std::vector<double>& grad() const;  // throws DataError when absent
    void zero_grad();

    detail::TensorNode* node() const { return node_.get(); }
    detail::NodePtr node_ptr() const { return node_; }

private:
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    detail::NodePtr node_;

    friend Tensor make_op_output(Shape, std::vector<double>, std::vector<Tensor>,
                                 std::function<void(detail::TensorNode&, const std::vector<double>&,
                                                    const detail::GradSink&)>);
};

// Core differentiable ops. Every op validates shapes and throws ShapeError
// naming the op and the offending shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // element-wise
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& sizes);
Tensor row_slice(const Tensor& t, std::size_t index);  // 1 x cols view of a rank-2 tensor

/// Column-wise max over rows with mask 1. Throws DataError when every
/// position is masked.
Tensor max_pool_positions(const Tensor& t, const Mask& mask);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// Softmax along the last axis. Masked positions receive exactly 0 weight;
/// rows normalize over the unmasked positions. The mask length must equal
/// the last-axis extent; pass nullptr for no masking. A fully masked row
/// throws DataError.
Tensor softmax_masked(const Tensor& t, const Mask* mask);

Tensor scale(const Tensor& a, double factor);
Tensor transpose(const Tensor& t);
Tensor sum(const Tensor& a);  // scalar
Tensor log(const Tensor& a);  // ln(max(x, 1e-12)); clamped region has zero gradient
Tensor add_bias(const Tensor& m, const Tensor& bias);  // bias row broadcast over rows

/// Inverted dropout; identity when training is off or drop_prob is 0.
Tensor dropout(const Tensor& a, double drop_prob, Rng& rng, bool training);

/// Reverse-mode accumulation from a scalar loss. Gradients are added into
/// every reachable tensor with requires_grad, so repeated calls without
/// zero_grad accumulate. Throws ShapeError for a non-scalar loss.
void backward(const Tensor& loss);

struct Parameter {
    std::string name;
    Tensor tensor;
};

/// Adam with bias correction. step() consumes and clears gradients;
/// a parameter with no accumulated gradient raises DataError.
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(std::vector<Parameter>& params);
    void reset();

    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    struct Moments {
        std::vector<double> m, v;
    };
    std::vector<Moments> state_;  // parallel to params by position
};

/// Plain gradient descent fallback; same step contract as Adam.
class Sgd {
public:
    explicit Sgd(double lr = 1e-3) : lr_(lr) {}
    void step(std::vector<Parameter>& params);

private:
    double lr_;
};

/// Checkpoint: `<base>.json` manifest (names, shapes, optional config blob)
/// plus `<base>.bin`, the parameters' values as little-endian float32 in
/// manifest order.
void save_checkpoint(const std::string& base_path, const std::vector<Parameter>& params,
                     const std::string& config_json);

struct Checkpoint {
    std::vector<Parameter> params;
    std::string config_json;  // empty when the manifest carries none
};

Checkpoint load_checkpoint(const std::string& base_path);

}  // namespace veritree::ad
