#pragma once

// Central-difference gradient checks shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>

#include "leakgan/nn.hpp"

namespace leakgan::testing {

struct GradCheck {
    double relative_error = 0; // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    double worst_entry = 0;    // max entrywise relative error over entries above the noise floor
    long entries = 0;
};

/// `loss` must read the values behind `params`; `analytic` mirrors them view by view.
inline GradCheck check_gradient(const ParamList &params, const ParamList &analytic,
                                const std::function<double()> &loss, double h = 1e-5) {
    GradCheck out;
    double diff2 = 0, an2 = 0, fd2 = 0;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (Index i = 0; i < params[k].size(); ++i) {
            double &x = params[k].data[i];
            const double keep = x;
            x = keep + h;
            const double up = loss();
            x = keep - h;
            const double down = loss();
            x = keep;
            const double fd = (up - down) / (2 * h);
            const double an = analytic[k].data[i];
            diff2 += (fd - an) * (fd - an);
            an2 += an * an;
            fd2 += fd * fd;
            const double scale = std::max(std::abs(fd), std::abs(an));
            if (scale > 1e-6) out.worst_entry = std::max(out.worst_entry, std::abs(fd - an) / scale);
            ++out.entries;
        }
    const double denom = std::max(std::sqrt(an2), std::sqrt(fd2));
    out.relative_error = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
    return out;
}

} // namespace leakgan::testing
