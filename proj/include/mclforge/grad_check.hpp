#pragma once

#include <functional>

#include "mclforge/tensor.hpp"

namespace mclforge {

/// A differentiable scalar function of one tensor, expressed as graph
/// construction against the given record.
using TensorFunction = std::function<Tensor(ComputationRecord&, const Tensor&)>;

/// Compare the reverse-mode gradient of f at theta against central finite
/// differences with step eps. Returns the maximum over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
///
/// f must be deterministic and theta must require grad.
double grad_check(const TensorFunction& f, Tensor theta, double eps);

}  // namespace mclforge
