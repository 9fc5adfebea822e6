#ifndef DSCMP_NUMKIT_GRAD_CHECK_HPP_
#define DSCMP_NUMKIT_GRAD_CHECK_HPP_

#include <functional>
#include <string>

#include "dscmp/numkit/param_store.hpp"

namespace dscmp {

/// Scalar objective over a ParamStore. When `accumulate` is true it must add its
/// analytic gradient into params.grads() (the checker zeroes them first).
/// It must be deterministic: freeze any randomness inside.
using Objective = std::function<double(ParamStore& params, bool accumulate)>;

struct GradCheckReport {
    double max_rel_error = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0;
    double worst_numeric = 0;
    std::size_t entries_checked = 0;
};

/// Compares the analytic gradient of `f` against central differences
/// (f(θ+eps) − f(θ−eps)) / (2·eps) for every entry of every parameter accepted by
/// `filter` (all when empty). Relative error is |a−n| / max(|a|, |n|, 1e-8).
/// Parameter values are restored afterwards. Throws NumericError on a non-finite loss
/// and std::invalid_argument when eps is outside [1e-7, 1e-3].
GradCheckReport grad_check(const Objective& f, ParamStore& params, double eps,
                           const std::function<bool(const std::string&)>& filter = {});

}  // namespace dscmp

#endif  // DSCMP_NUMKIT_GRAD_CHECK_HPP_
