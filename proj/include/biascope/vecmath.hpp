#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace biascope {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace biascope
