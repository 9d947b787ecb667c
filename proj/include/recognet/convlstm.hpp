#pragma once

#include <string>
#include <vector>

#include "recognet/init.hpp"
#include "recognet/ops.hpp"
#include "recognet/tensor.hpp"

namespace recognet {

// Gate order inside the fused weight/bias: input, forget, cell, output.
enum class Gate { input = 0, forget = 1, cell = 2, output = 3 };

inline const char* gate_name(Gate g) {
    switch (g) {
        case Gate::input: return "input";
        case Gate::forget: return "forget";
        case Gate::cell: return "cell";
        default: return "output";
    }
}

// Convolutional LSTM cell parameters. The four input-to-gate and four
// hidden-to-gate kernels are stored as one fused convolution over the
// concatenated [x, h] with 4*hidden output channels; accessors below expose
// the per-gate kernels of the unfused formulation.
template <typename T>
struct ConvLstmParams {
    int in_channels = 0;
    int hidden_channels = 0;
    int kernel = 3;
    Tensor<T> weight;  // [4*hidden, in+hidden, k, k]
    Tensor<T> bias;    // [4*hidden]

    int padding() const { return (kernel - 1) / 2; }

    static ConvLstmParams init(int in_channels, int hidden_channels, int kernel, Rng& rng) {
        if (kernel < 1 || kernel % 2 == 0)
            throw std::invalid_argument("ConvLstmParams: kernel must be odd, got " +
                                        std::to_string(kernel));
        ConvLstmParams p;
        p.in_channels = in_channels;
        p.hidden_channels = hidden_channels;
        p.kernel = kernel;
        p.weight = Tensor<T>::zeros({4 * hidden_channels, in_channels + hidden_channels, kernel, kernel},
                                    true);
        p.bias = Tensor<T>::zeros({4 * hidden_channels}, true);
        kaiming_uniform_conv(p.weight, rng);
        // Forget-gate bias starts at +1 so early training does not forget.
        auto& b = p.bias.data();
        for (int i = hidden_channels; i < 2 * hidden_channels; ++i) b[i] = T(1);
        return p;
    }

    // Assemble fused parameters from the eight per-gate kernels
    // (input-to-gate [hid,in,k,k], hidden-to-gate [hid,hid,k,k]) and four
    // biases, in gate order i,f,g,o.
    static ConvLstmParams assemble(const std::vector<Tensor<T>>& input_kernels,
                                   const std::vector<Tensor<T>>& hidden_kernels,
                                   const std::vector<Tensor<T>>& biases) {
        if (input_kernels.size() != 4 || hidden_kernels.size() != 4 || biases.size() != 4)
            throw std::invalid_argument("ConvLstmParams::assemble: need 4 kernels per side");
        ConvLstmParams p;
        p.hidden_channels = input_kernels[0].extent(0);
        p.in_channels = input_kernels[0].extent(1);
        p.kernel = input_kernels[0].extent(2);
        std::vector<Tensor<T>> rows;
        std::vector<Tensor<T>> bias_parts;
        for (int gi = 0; gi < 4; ++gi) {
            rows.push_back(concat<T>({input_kernels[gi], hidden_kernels[gi]}, 1));
            bias_parts.push_back(biases[gi]);
        }
        Tensor<T> w = concat<T>(rows, 0);
        Tensor<T> b = concat<T>(bias_parts, 0);
        p.weight = Tensor<T>::from_data(w.shape(), w.data(), true);
        p.bias = Tensor<T>::from_data(b.shape(), b.data(), true);
        return p;
    }

    Tensor<T> input_kernel(Gate g) const {
        const int hid = hidden_channels;
        Tensor<T> block = narrow(narrow(weight, 0, static_cast<int>(g) * hid, hid), 1, 0, in_channels);
        return Tensor<T>::from_data(block.shape(), block.data());
    }
    Tensor<T> hidden_kernel(Gate g) const {
        const int hid = hidden_channels;
        Tensor<T> block =
            narrow(narrow(weight, 0, static_cast<int>(g) * hid, hid), 1, in_channels, hid);
        return Tensor<T>::from_data(block.shape(), block.data());
    }
    Tensor<T> gate_bias(Gate g) const {
        Tensor<T> block = narrow(bias, 0, static_cast<int>(g) * hidden_channels, hidden_channels);
        return Tensor<T>::from_data(block.shape(), block.data());
    }
};

// The (H_t, C_t) pair threaded through a slice sequence.
template <typename T>
struct ConvLstmState {
    Tensor<T> hidden;  // [N, hid, H, W]
    Tensor<T> cell;

    static ConvLstmState zeros(int n, int hidden_channels, int h, int w) {
        return {Tensor<T>::zeros({n, hidden_channels, h, w}),
                Tensor<T>::zeros({n, hidden_channels, h, w})};
    }
};

template <typename T>
struct CellDetail {
    Tensor<T> input_gate, forget_gate, cell_gate, output_gate;
    ConvLstmState<T> state;
};

namespace detail {

template <typename T>
void validate_cell_shapes(const Tensor<T>& x, const ConvLstmState<T>& state,
                          const ConvLstmParams<T>& p) {
    require_rank4(x.shape(), "cell_step", "input");
    require_rank4(state.hidden.shape(), "cell_step", "hidden state");
    if (x.extent(1) != p.in_channels)
        throw std::invalid_argument(
            "cell_step: input has " + std::to_string(x.extent(1)) + " channels but the input-to-gate "
            "kernels (i/f/g/o) expect " + std::to_string(p.in_channels));
    if (state.hidden.extent(1) != p.hidden_channels)
        throw std::invalid_argument(
            "cell_step: hidden state has " + std::to_string(state.hidden.extent(1)) +
            " channels but the hidden-to-gate kernels (i/f/g/o) expect " +
            std::to_string(p.hidden_channels));
    if (state.hidden.shape() != state.cell.shape())
        throw std::invalid_argument("cell_step: hidden " + shape_str(state.hidden.shape()) +
                                    " and cell " + shape_str(state.cell.shape()) + " shapes differ");
    if (x.extent(0) != state.hidden.extent(0) || x.extent(2) != state.hidden.extent(2) ||
        x.extent(3) != state.hidden.extent(3))
        throw std::invalid_argument("cell_step: input " + shape_str(x.shape()) +
                                    " does not spatially match state " +
                                    shape_str(state.hidden.shape()));
}

}  // namespace detail

// One recurrence step: gates from the fused convolution over [x, h], then
//   C_t = f (*) C_{t-1} + i (*) g,  H_t = o (*) tanh(C_t).
template <typename T>
CellDetail<T> cell_step_detail(const Tensor<T>& x, const ConvLstmState<T>& state,
                               const ConvLstmParams<T>& params) {
    detail::validate_cell_shapes(x, state, params);
    const int hid = params.hidden_channels;
    Tensor<T> z = conv2d(concat<T>({x, state.hidden}, 1), params.weight, params.bias, 1,
                         params.padding(), 1);
    Tensor<T> i = sigmoid(narrow(z, 1, 0, hid));
    Tensor<T> f = sigmoid(narrow(z, 1, hid, hid));
    Tensor<T> g = tanh_op(narrow(z, 1, 2 * hid, hid));
    Tensor<T> o = sigmoid(narrow(z, 1, 3 * hid, hid));
    Tensor<T> cell = add(mul(f, state.cell), mul(i, g));
    Tensor<T> hidden = mul(o, tanh_op(cell));
    return {i, f, g, o, {hidden, cell}};
}

template <typename T>
ConvLstmState<T> cell_step(const Tensor<T>& x, const ConvLstmState<T>& state,
                           const ConvLstmParams<T>& params) {
    return cell_step_detail(x, state, params).state;
}

template <typename T>
struct SequenceResult {
    std::vector<Tensor<T>> hiddens;
    ConvLstmState<T> final_state;
};

// Causal fold of cell_step over a slice sequence. Output t is the hidden
// state after consuming x_1..x_t.
template <typename T>
SequenceResult<T> run_sequence(const std::vector<Tensor<T>>& xs, const ConvLstmParams<T>& params,
                               const ConvLstmState<T>* init = nullptr) {
    if (xs.empty()) throw std::invalid_argument("run_sequence: empty sequence");
    detail::require_rank4(xs[0].shape(), "run_sequence", "input");
    for (size_t t = 1; t < xs.size(); ++t)
        if (xs[t].shape() != xs[0].shape())
            throw std::invalid_argument("run_sequence: shape drift at index " + std::to_string(t) +
                                        ": " + shape_str(xs[t].shape()) + " vs " +
                                        shape_str(xs[0].shape()));
    ConvLstmState<T> state =
        init ? *init
             : ConvLstmState<T>::zeros(xs[0].extent(0), params.hidden_channels, xs[0].extent(2),
                                       xs[0].extent(3));
    SequenceResult<T> result;
    result.hiddens.reserve(xs.size());
    for (const auto& x : xs) {
        state = cell_step(x, state, params);
        result.hiddens.push_back(state.hidden);
    }
    result.final_state = state;
    return result;
}

}  // namespace recognet
