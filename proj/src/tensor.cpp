#include "mclforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

namespace mclforge {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 2) {
        throw ShapeError("tensor rank must be 1 or 2, got rank " +
                         std::to_string(shape.size()));
    }
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": operand shapes do not match");
    }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    auto d = std::make_shared<Data>();
    d->shape = std::move(shape);
    d->values.assign(n, 0.0);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
    const std::size_t n = shape_size(shape);
    if (values.size() != n) {
        throw ShapeError("value count does not match shape");
    }
    auto d = std::make_shared<Data>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

double Tensor::item() const {
    if (!is_scalar()) throw ContractError("item() requires a scalar tensor");
    return data_->values[0];
}

void Tensor::ensure_grad() const {
    if (data_->grad.empty()) data_->grad.assign(data_->values.size(), 0.0);
}

void Tensor::zero_grad() const {
    std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
}

// ---------------------------------------------------------------------------

Tensor ComputationRecord::make_output(std::vector<int> shape, bool inputs_need_grad) {
    Tensor out = Tensor::zeros(std::move(shape), recording_ && inputs_need_grad);
    if (out.requires_grad()) outputs_.push_back(out);
    return out;
}

void ComputationRecord::push_node(const Tensor& out, std::function<void()> backprop) {
    if (recording_ && out.requires_grad()) {
        nodes_.push_back({std::move(backprop)});
    }
}

Tensor ComputationRecord::matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: both operands must be rank-2");
    }
    const int r = a.rows(), k = a.cols(), c = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions do not match (" +
                         std::to_string(k) + " vs " + std::to_string(b.rows()) + ")");
    }
    Tensor out = make_output({r, c}, a.requires_grad() || b.requires_grad());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values_mut();
    for (int i = 0; i < r; ++i) {
        for (int l = 0; l < k; ++l) {
            const double ail = av[static_cast<std::size_t>(i) * k + l];
            if (ail == 0.0) continue;
            const std::size_t brow = static_cast<std::size_t>(l) * c;
            const std::size_t orow = static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) {
                ov[orow + j] += ail * bv[brow + j];
            }
        }
    }
    push_node(out, [a, b, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const int r2 = a.rows(), k2 = a.cols(), c2 = b.cols();
        if (a.requires_grad()) {
            a.ensure_grad();
            auto ga = a.grad_mut();
            const auto bv2 = b.values();
            for (int i = 0; i < r2; ++i) {
                for (int l = 0; l < k2; ++l) {
                    double acc = 0.0;
                    for (int j = 0; j < c2; ++j) {
                        acc += g[static_cast<std::size_t>(i) * c2 + j] *
                               bv2[static_cast<std::size_t>(l) * c2 + j];
                    }
                    ga[static_cast<std::size_t>(i) * k2 + l] += acc;
                }
            }
        }
        if (b.requires_grad()) {
            b.ensure_grad();
            auto gb = b.grad_mut();
            const auto av2 = a.values();
            for (int l = 0; l < k2; ++l) {
                for (int i = 0; i < r2; ++i) {
                    const double ail = av2[static_cast<std::size_t>(i) * k2 + l];
                    if (ail == 0.0) continue;
                    for (int j = 0; j < c2; ++j) {
                        gb[static_cast<std::size_t>(l) * c2 + j] +=
                            ail * g[static_cast<std::size_t>(i) * c2 + j];
                    }
                }
            }
        }
    });
    return out;
}

Tensor ComputationRecord::add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    push_node(out, [a, b, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        if (a.requires_grad()) {
            a.ensure_grad();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            b.ensure_grad();
            auto gb = b.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
    return out;
}

Tensor ComputationRecord::add(const Tensor& a, double s) {
    Tensor out = make_output(a.shape(), a.requires_grad());
    const auto av = a.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + s;
    push_node(out, [a, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
}

Tensor ComputationRecord::sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    push_node(out, [a, b, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        if (a.requires_grad()) {
            a.ensure_grad();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            b.ensure_grad();
            auto gb = b.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
    return out;
}

Tensor ComputationRecord::sub(const Tensor& a, double s) { return add(a, -s); }

Tensor ComputationRecord::mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    push_node(out, [a, b, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        if (a.requires_grad()) {
            a.ensure_grad();
            auto ga = a.grad_mut();
            const auto bv2 = b.values();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (b.requires_grad()) {
            b.ensure_grad();
            auto gb = b.grad_mut();
            const auto av2 = a.values();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
        }
    });
    return out;
}

Tensor ComputationRecord::scale(const Tensor& a, double s) {
    Tensor out = make_output(a.shape(), a.requires_grad());
    const auto av = a.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
    push_node(out, [a, out, s]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
    return out;
}

Tensor ComputationRecord::relu(const Tensor& a) {
    Tensor out = make_output(a.shape(), a.requires_grad());
    const auto av = a.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
    push_node(out, [a, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const auto av2 = a.values();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av2[i] > 0.0) ga[i] += g[i];
        }
    });
    return out;
}

Tensor ComputationRecord::exp(const Tensor& a) {
    Tensor out = make_output(a.shape(), a.requires_grad());
    const auto av = a.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::exp(av[i]);
    push_node(out, [a, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const auto exp_values = out.values();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * exp_values[i];
    });
    return out;
}

Tensor ComputationRecord::log(const Tensor& a) {
    const auto av = a.values();
    for (double v : av) {
        if (!(v > 0.0)) {
            throw DomainError("log: input must be strictly positive");
        }
    }
    Tensor out = make_output(a.shape(), a.requires_grad());
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i]);
    push_node(out, [a, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const auto av2 = a.values();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av2[i];
    });
    return out;
}

Tensor ComputationRecord::max_subtract(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    Tensor out = make_output(a.shape(), a.requires_grad());
    const auto av = a.values();
    auto ov = out.values_mut();
    std::vector<int> argmax(static_cast<std::size_t>(r), 0);
    for (int i = 0; i < r; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        int best = 0;
        for (int j = 1; j < c; ++j) {
            if (av[base + j] > av[base + best]) best = j;
        }
        argmax[static_cast<std::size_t>(i)] = best;
        const double m = av[base + best];
        for (int j = 0; j < c; ++j) ov[base + j] = av[base + j] - m;
    }
    push_node(out, [a, out, argmax]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const int r2 = a.rows(), c2 = a.cols();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (int i = 0; i < r2; ++i) {
            const std::size_t base = static_cast<std::size_t>(i) * c2;
            double row_total = 0.0;
            for (int j = 0; j < c2; ++j) {
                ga[base + j] += g[base + j];
                row_total += g[base + j];
            }
            ga[base + argmax[static_cast<std::size_t>(i)]] -= row_total;
        }
    });
    return out;
}

Tensor ComputationRecord::add_row(const Tensor& a, const Tensor& row) {
    if (a.rank() != 2 || row.rank() != 1 || row.cols() != a.cols()) {
        throw ShapeError("add_row: need [r x c] and [c]");
    }
    const int r = a.rows(), c = a.cols();
    Tensor out = make_output(a.shape(), a.requires_grad() || row.requires_grad());
    const auto av = a.values();
    const auto rv = row.values();
    auto ov = out.values_mut();
    for (int i = 0; i < r; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) ov[base + j] = av[base + j] + rv[static_cast<std::size_t>(j)];
    }
    push_node(out, [a, row, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const int r2 = a.rows(), c2 = a.cols();
        if (a.requires_grad()) {
            a.ensure_grad();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (row.requires_grad()) {
            row.ensure_grad();
            auto gr = row.grad_mut();
            for (int i = 0; i < r2; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * c2;
                for (int j = 0; j < c2; ++j) gr[static_cast<std::size_t>(j)] += g[base + j];
            }
        }
    });
    return out;
}

Tensor ComputationRecord::row_sum(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("row_sum: rank-2 input required");
    const int r = a.rows(), c = a.cols();
    Tensor out = make_output({r}, a.requires_grad());
    const auto av = a.values();
    auto ov = out.values_mut();
    for (int i = 0; i < r; ++i) {
        double acc = 0.0;
        const std::size_t base = static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) acc += av[base + j];
        ov[static_cast<std::size_t>(i)] = acc;
    }
    push_node(out, [a, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const int r2 = a.rows(), c2 = a.cols();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (int i = 0; i < r2; ++i) {
            const std::size_t base = static_cast<std::size_t>(i) * c2;
            for (int j = 0; j < c2; ++j) ga[base + j] += g[static_cast<std::size_t>(i)];
        }
    });
    return out;
}

Tensor ComputationRecord::sub_col(const Tensor& a, const Tensor& col) {
    if (a.rank() != 2 || col.rank() != 1 || col.cols() != a.rows()) {
        throw ShapeError("sub_col: need [r x c] and [r]");
    }
    const int r = a.rows(), c = a.cols();
    Tensor out = make_output(a.shape(), a.requires_grad() || col.requires_grad());
    const auto av = a.values();
    const auto cv = col.values();
    auto ov = out.values_mut();
    for (int i = 0; i < r; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) ov[base + j] = av[base + j] - cv[static_cast<std::size_t>(i)];
    }
    push_node(out, [a, col, out]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const int r2 = a.rows(), c2 = a.cols();
        if (a.requires_grad()) {
            a.ensure_grad();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (col.requires_grad()) {
            col.ensure_grad();
            auto gc = col.grad_mut();
            for (int i = 0; i < r2; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * c2;
                double row_total = 0.0;
                for (int j = 0; j < c2; ++j) row_total += g[base + j];
                gc[static_cast<std::size_t>(i)] -= row_total;
            }
        }
    });
    return out;
}

Tensor ComputationRecord::gather_cols(const Tensor& a, const std::vector<int>& idx) {
    if (a.rank() != 2) throw ShapeError("gather_cols: rank-2 input required");
    const int r = a.rows(), c = a.cols();
    if (static_cast<int>(idx.size()) != r) {
        throw ShapeError("gather_cols: one index per row required");
    }
    for (int j : idx) {
        if (j < 0 || j >= c) throw ContractError("gather_cols: index out of range");
    }
    Tensor out = make_output({r}, a.requires_grad());
    const auto av = a.values();
    auto ov = out.values_mut();
    for (int i = 0; i < r; ++i) {
        ov[static_cast<std::size_t>(i)] =
            av[static_cast<std::size_t>(i) * c + idx[static_cast<std::size_t>(i)]];
    }
    push_node(out, [a, out, idx]() mutable {
        if (!out.has_grad()) return;
        const auto g = out.grad();
        const int r2 = a.rows(), c2 = a.cols();
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (int i = 0; i < r2; ++i) {
            ga[static_cast<std::size_t>(i) * c2 + idx[static_cast<std::size_t>(i)]] +=
                g[static_cast<std::size_t>(i)];
        }
    });
    return out;
}

Tensor ComputationRecord::sum(const Tensor& a) {
    Tensor out = make_output({1}, a.requires_grad());
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    out.values_mut()[0] = acc;
    push_node(out, [a, out]() mutable {
        if (!out.has_grad()) return;
        const double g = out.grad()[0];
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return out;
}

Tensor ComputationRecord::mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor ComputationRecord::weighted_sum(const Tensor& a, const std::vector<double>& w) {
    if (a.rank() != 1 || a.size() != w.size()) {
        throw ShapeError("weighted_sum: rank-1 input matching weight count required");
    }
    Tensor out = make_output({1}, a.requires_grad());
    const auto av = a.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += av[i] * w[i];
    out.values_mut()[0] = acc;
    push_node(out, [a, out, w]() mutable {
        if (!out.has_grad()) return;
        const double g = out.grad()[0];
        a.ensure_grad();
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < w.size(); ++i) ga[i] += g * w[i];
    });
    return out;
}

void ComputationRecord::backward(const Tensor& loss) {
    if (!loss.valid() || !loss.is_scalar()) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    if (nodes_.empty()) {
        throw ContractError("backward: record is empty");
    }
    for (const Tensor& t : outputs_) t.zero_grad();
    loss.ensure_grad();
    loss.grad_mut()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backprop();
    }
}

}  // namespace mclforge
