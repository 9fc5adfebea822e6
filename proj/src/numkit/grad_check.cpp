#include "dscmp/numkit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dscmp {

namespace {

double checked_eval(const Objective& f, ParamStore& params, bool accumulate) {
    const double value = f(params, accumulate);
    if (!std::isfinite(value)) throw NumericError("grad_check: objective returned a non-finite value");
    return value;
}

}  // namespace

GradCheckReport grad_check(const Objective& f, ParamStore& params, double eps,
                           const std::function<bool(const std::string&)>& filter) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");

    params.zero_grad();
    checked_eval(f, params, true);
    const Gradients analytic = params.grads();

    GradCheckReport report;
    for (ParamId id : params.ids()) {
        const std::string& name = params.name(id);
        if (filter && !filter(name)) continue;
        const std::size_t n = params.value(id).size();
        for (std::size_t k = 0; k < n; ++k) {
            const Real saved = params.value(id)[k];
            params.mutable_value(id)[k] = saved + static_cast<Real>(eps);
            const double plus = checked_eval(f, params, false);
            params.mutable_value(id)[k] = saved - static_cast<Real>(eps);
            const double minus = checked_eval(f, params, false);
            params.mutable_value(id)[k] = saved;

            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = analytic[id][k];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            ++report.entries_checked;
            if (rel > report.max_rel_error || report.entries_checked == 1) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = k;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    params.zero_grad();
    return report;
}

}  // namespace dscmp
