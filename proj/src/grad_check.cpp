#include "mclforge/grad_check.hpp"

#include <cmath>
#include <vector>

namespace mclforge {

double grad_check(const TensorFunction& f, Tensor theta, double eps) {
    if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
    if (!theta.requires_grad()) {
        throw ContractError("grad_check: theta must require grad");
    }

    theta.ensure_grad();
    theta.zero_grad();
    std::vector<double> analytic;
    {
        ComputationRecord rec;
        Tensor loss = f(rec, theta);
        if (!loss.is_scalar()) {
            throw ContractError("grad_check: f must return a scalar");
        }
        rec.backward(loss);
        analytic.assign(theta.grad().begin(), theta.grad().end());
    }

    auto eval = [&]() {
        ComputationRecord rec(/*recording=*/false);
        return f(rec, theta).item();
    };

    double max_rel_err = 0.0;
    auto tv = theta.values_mut();
    for (std::size_t i = 0; i < tv.size(); ++i) {
        const double saved = tv[i];
        tv[i] = saved + eps;
        const double hi = eval();
        tv[i] = saved - eps;
        const double lo = eval();
        tv[i] = saved;
        const double numeric = (hi - lo) / (2.0 * eps);
        const double rel =
            std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        if (rel > max_rel_err) max_rel_err = rel;
    }
    return max_rel_err;
}

}  // namespace mclforge
