#pragma once

#include <vector>

#include "bkst/numerics.hpp"

namespace bkst {

/// Feedback gains k1(1, xi) and k2(1, xi) sampled on a uniform xi grid.
struct GainVector {
    IntervalGrid grid{2};
    std::vector<double> g1, g2;

    GainVector() = default;
    GainVector(const IntervalGrid& g, std::vector<double> a, std::vector<double> b);

    /// Linear resampling onto another grid; identity when the grids agree.
    GainVector resampled(const IntervalGrid& target) const;

    static GainVector zeros(const IntervalGrid& g);
};

}  // namespace bkst
