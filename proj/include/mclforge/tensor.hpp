#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mclforge/errors.hpp"

namespace mclforge {

/// Dense rank-1 or rank-2 tensor of doubles with an optional gradient buffer.
///
/// A Tensor is a cheap shared handle: copies alias the same storage. Values
/// are written once at creation (parameters are the exception, mutated in
/// place by their own optimizer step); gradients accumulate across backward
/// passes until zero_grad().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double v);

    bool valid() const { return data_ != nullptr; }
    const std::vector<int>& shape() const { return data_->shape; }
    int rank() const { return static_cast<int>(data_->shape.size()); }
    std::size_t size() const { return data_->values.size(); }
    bool is_scalar() const { return valid() && size() == 1; }

    /// Rows/cols of a rank-2 tensor; a rank-1 tensor is viewed as one row.
    int rows() const { return rank() == 2 ? data_->shape[0] : 1; }
    int cols() const { return rank() == 2 ? data_->shape[1] : data_->shape[0]; }

    std::span<const double> values() const { return data_->values; }
    std::span<double> values_mut() { return data_->values; }
    double item() const;

    bool requires_grad() const { return data_->requires_grad; }
    bool has_grad() const { return valid() && !data_->grad.empty(); }
    std::span<const double> grad() const { return data_->grad; }

    // Gradient accumulation is the one sanctioned mutation of shared
    // storage, so these are callable through const handles.
    std::span<double> grad_mut() const { return data_->grad; }
    /// Allocate the gradient buffer (zero-filled) if absent.
    void ensure_grad() const;
    /// Reset an allocated gradient buffer to zero; no-op when unallocated.
    void zero_grad() const;

    /// Identity comparison (same underlying storage).
    bool same_storage(const Tensor& other) const { return data_ == other.data_; }

private:
    struct Data {
        std::vector<int> shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Data> data_;

    explicit Tensor(std::shared_ptr<Data> d) : data_(std::move(d)) {}
};

/// Reverse-mode tape. Each operation computes its result eagerly and, when
/// recording and at least one input requires grad, appends a node holding
/// the local backward rule. Nodes are appended in execution order, so the
/// tape is always topologically sorted and one reverse sweep fills every
/// reachable gradient.
///
/// A record is confined to one training step and one thread of control;
/// distinct records may run in parallel.
class ComputationRecord {
public:
    explicit ComputationRecord(bool recording = true) : recording_(recording) {}

    ComputationRecord(const ComputationRecord&) = delete;
    ComputationRecord& operator=(const ComputationRecord&) = delete;

    bool recording() const { return recording_; }
    std::size_t node_count() const { return nodes_.size(); }

    // -- core ops ---------------------------------------------------------

    /// [r x k] . [k x c] -> [r x c]
    Tensor matmul(const Tensor& a, const Tensor& b);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor add(const Tensor& a, double s);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, double s);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double s);
    Tensor relu(const Tensor& a);
    Tensor exp(const Tensor& a);
    /// Natural log; every element must be strictly positive.
    Tensor log(const Tensor& a);
    /// Subtract the per-row maximum (rank-1: the global maximum). The exact
    /// gradient includes the argmax term; ties resolve to the first maximum.
    Tensor max_subtract(const Tensor& a);

    // -- structured ops used by the network and loss graphs ---------------

    /// Add a rank-1 row vector [c] to every row of [r x c].
    Tensor add_row(const Tensor& a, const Tensor& row);
    /// Sum each row of [r x c] -> [r].
    Tensor row_sum(const Tensor& a);
    /// Subtract col[i] from every element of row i of [r x c].
    Tensor sub_col(const Tensor& a, const Tensor& col);
    /// out[i] = a[i, idx[i]] for [r x c] -> [r].
    Tensor gather_cols(const Tensor& a, const std::vector<int>& idx);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    /// Dot product of a rank-1 tensor with a constant weight vector -> scalar.
    Tensor weighted_sum(const Tensor& a, const std::vector<double>& w);

    /// Reverse sweep from a scalar loss. Grads of tensors created by this
    /// record are reset first, so repeated sweeps are idempotent; leaf
    /// grads accumulate and must be zeroed by the caller between passes.
    void backward(const Tensor& loss);

private:
    struct Node {
        std::function<void()> backprop;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> outputs_;
    bool recording_;

    Tensor make_output(std::vector<int> shape, bool inputs_need_grad);
    void push_node(const Tensor& out, std::function<void()> backprop);
};

}  // namespace mclforge
