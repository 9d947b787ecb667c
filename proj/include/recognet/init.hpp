#pragma once

#include <cmath>

#include "recognet/rng.hpp"
#include "recognet/tensor.hpp"

namespace recognet {

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
}

// Kaiming-uniform over fan-in: bound = sqrt(6 / fan_in). For conv weights
// [Cout,Cin,kH,kW] the fan-in is Cin*kH*kW.
template <typename T>
void kaiming_uniform(Tensor<T>& w, Rng& rng, int fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    fill_uniform(w, rng, -bound, bound);
}

template <typename T>
void kaiming_uniform_conv(Tensor<T>& w, Rng& rng) {
    const Shape& s = w.shape();
    kaiming_uniform(w, rng, s[1] * s[2] * s[3]);
}

}  // namespace recognet
