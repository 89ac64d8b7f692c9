#pragma once

// Embedding, dense, LSTM cell and Luong attention on top of the tensor tape.
// All layers accept either a single example (rank-1 input) or a batch
// (rank-2 input, one example per row).

#include "flightcast/error.hpp"
#include "flightcast/random.hpp"
#include "flightcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace flightcast {

/// Weights uniform in +-1/sqrt(fan_in), drawn from `rng`.
inline Tensor uniform_parameter(Shape shape, std::size_t fan_in, Pcg32& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::vector<double> values(element_count(shape));
    for (double& v : values) {
        v = rng.uniform(-bound, bound);
    }
    return Tensor::parameter(std::move(shape), std::move(values));
}

inline Tensor zero_parameter(Shape shape) {
    return Tensor::parameter(shape, std::vector<double>(element_count(shape), 0.0));
}

// ---------------------------------------------------------------------------

struct EmbeddingTable {
    std::string feature;
    std::size_t cardinality = 0;
    std::size_t dim = 0;
    Tensor weights; // [cardinality x dim]

    /// A lookup selects exactly one row, so the effective fan-in is 1.
    static EmbeddingTable create(std::string feature, std::size_t cardinality, std::size_t dim, Pcg32& rng) {
        if (cardinality < 1 || dim < 1) {
            throw ContractError("embedding '" + feature + "' needs cardinality >= 1 and dim >= 1");
        }
        return {std::move(feature), cardinality, dim, uniform_parameter({cardinality, dim}, 1, rng)};
    }
};

/// Default width: min(8, ceil(cardinality / 2)).
constexpr std::size_t default_embedding_dim(std::size_t cardinality) {
    return std::min<std::size_t>(8, (cardinality + 1) / 2);
}

inline Tensor embedding_lookup(const EmbeddingTable& table, std::span<const std::size_t> indices) {
    for (std::size_t index : indices) {
        if (index >= table.cardinality) {
            throw CategoryError("feature '" + table.feature + "': category " + std::to_string(index) + " outside [0, " +
                                std::to_string(table.cardinality) + ")");
        }
    }
    return gather_rows(table.weights, indices);
}

/// Single-category lookup, returns [dim].
inline Tensor embedding_lookup(const EmbeddingTable& table, std::size_t index) {
    const std::size_t one[] = {index};
    return reshape(embedding_lookup(table, std::span<const std::size_t>(one)), {table.dim});
}

// ---------------------------------------------------------------------------

struct DenseParams {
    Tensor weight; // [out x in]
    Tensor bias;   // [out]

    std::size_t in() const { return weight.dim(1); }
    std::size_t out() const { return weight.dim(0); }

    static DenseParams create(std::size_t in, std::size_t out, Pcg32& rng) {
        return {uniform_parameter({out, in}, in, rng), uniform_parameter({out}, in, rng)};
    }
};

inline Tensor dense_forward(const DenseParams& p, const Tensor& x) { return linear(x, p.weight, p.bias); }

// ---------------------------------------------------------------------------

struct LstmParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    // input, forget, output gates and the cell candidate
    Tensor w_i, w_f, w_o, w_g; // [hidden x input]
    Tensor u_i, u_f, u_o, u_g; // [hidden x hidden]
    Tensor b_i, b_f, b_o, b_g; // [hidden]

    static LstmParams create(std::size_t input_dim, std::size_t hidden_dim, Pcg32& rng) {
        if (input_dim < 1 || hidden_dim < 1) {
            throw ContractError("LSTM dimensions must be positive");
        }
        LstmParams p;
        p.input_dim = input_dim;
        p.hidden_dim = hidden_dim;
        for (Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_g}) *w = uniform_parameter({hidden_dim, input_dim}, hidden_dim, rng);
        for (Tensor* u : {&p.u_i, &p.u_f, &p.u_o, &p.u_g}) *u = uniform_parameter({hidden_dim, hidden_dim}, hidden_dim, rng);
        for (Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) *b = uniform_parameter({hidden_dim}, hidden_dim, rng);
        return p;
    }

    void validate() const {
        auto check = [](const Tensor& t, const Shape& expected, const char* name) {
            if (!t.defined() || t.shape() != expected) {
                throw DimensionError(std::string("LSTM ") + name + " expected " + to_string(expected) +
                                     (t.defined() ? ", got " + to_string(t.shape()) : std::string(", missing")));
            }
        };
        check(w_i, {hidden_dim, input_dim}, "W_i");
        check(w_f, {hidden_dim, input_dim}, "W_f");
        check(w_o, {hidden_dim, input_dim}, "W_o");
        check(w_g, {hidden_dim, input_dim}, "W_g");
        check(u_i, {hidden_dim, hidden_dim}, "U_i");
        check(u_f, {hidden_dim, hidden_dim}, "U_f");
        check(u_o, {hidden_dim, hidden_dim}, "U_o");
        check(u_g, {hidden_dim, hidden_dim}, "U_g");
        check(b_i, {hidden_dim}, "b_i");
        check(b_f, {hidden_dim}, "b_f");
        check(b_o, {hidden_dim}, "b_o");
        check(b_g, {hidden_dim}, "b_g");
    }
};

struct LstmState {
    Tensor h;
    Tensor c;

    static LstmState zeros(std::size_t batch, std::size_t hidden) { return {Tensor({batch, hidden}), Tensor({batch, hidden})}; }
    static LstmState zeros(std::size_t hidden) { return {Tensor({hidden}), Tensor({hidden})}; }
};

namespace detail {

inline Tensor gate(const LstmParams& p, const Tensor& x, const Tensor& h_prev, const Tensor& w, const Tensor& u,
                   const Tensor& b, Activation act, const char* name) {
    const Tensor pre = add(linear(x, w, b), linear(h_prev, u, Tensor(Shape{p.hidden_dim})));
    try {
        return apply_activation(pre, act);
    } catch (const NumericError&) {
        throw NumericError(std::string("LSTM ") + name + ": non-finite pre-activation");
    }
}

} // namespace detail

/// i,f,o = sigmoid(W x + U h + b); g = tanh(...); c = f*c_prev + i*g; h = o*tanh(c).
inline LstmState lstm_cell_step(const LstmParams& p, const Tensor& x, const LstmState& prev) {
    const Tensor i = detail::gate(p, x, prev.h, p.w_i, p.u_i, p.b_i, Activation::sigmoid, "input gate");
    const Tensor f = detail::gate(p, x, prev.h, p.w_f, p.u_f, p.b_f, Activation::sigmoid, "forget gate");
    const Tensor o = detail::gate(p, x, prev.h, p.w_o, p.u_o, p.b_o, Activation::sigmoid, "output gate");
    const Tensor g = detail::gate(p, x, prev.h, p.w_g, p.u_g, p.b_g, Activation::tanh, "cell candidate");
    if (f.shape() != prev.c.shape()) {
        throw DimensionError("LSTM cell state " + to_string(prev.c.shape()) + " does not match gates " + to_string(f.shape()));
    }
    Tensor c = add(mul(f, prev.c), mul(i, g));
    Tensor h = mul(o, tanh(c));
    return {std::move(h), std::move(c)};
}

// ---------------------------------------------------------------------------

enum class AttentionKind { dot, general };

inline std::string to_string(AttentionKind kind) { return kind == AttentionKind::dot ? "dot" : "general"; }

inline AttentionKind parse_attention_kind(const std::string& text) {
    if (text == "dot") return AttentionKind::dot;
    if (text == "general") return AttentionKind::general;
    throw ConfigError("unknown attention kind '" + text + "' (expected dot|general)");
}

struct AttentionParams {
    AttentionKind kind = AttentionKind::general;
    std::optional<Tensor> w_a; // [hidden x hidden], general only
    Tensor w_c;                // [hidden x 2*hidden], applied to [context; h]

    static AttentionParams create(AttentionKind kind, std::size_t hidden, Pcg32& rng) {
        AttentionParams p;
        p.kind = kind;
        if (kind == AttentionKind::general) {
            p.w_a = uniform_parameter({hidden, hidden}, hidden, rng);
        }
        p.w_c = uniform_parameter({hidden, 2 * hidden}, 2 * hidden, rng);
        return p;
    }
};

struct AttentionOutput {
    Tensor h_tilde; // [B x hidden]
    Tensor weights; // [B x steps]
    Tensor context; // [B x hidden]
};

/// Batched form: decoder_h [B x H], encoder_hs [B x S x H].
inline AttentionOutput luong_attention_batch(const AttentionParams& p, const Tensor& decoder_h, const Tensor& encoder_hs) {
    if (encoder_hs.rank() != 3 || encoder_hs.dim(1) == 0) {
        throw ContractError("attention needs at least one encoder step, got " + to_string(encoder_hs.shape()));
    }
    if (p.w_a.has_value() != (p.kind == AttentionKind::general)) {
        throw ContractError("attention W_a must be present exactly for the general score");
    }
    const Tensor query = p.kind == AttentionKind::general ? matmul(decoder_h, *p.w_a) : decoder_h;
    Tensor weights = softmax(batched_dot(query, encoder_hs));
    Tensor context = batched_weighted_sum(weights, encoder_hs);
    const std::size_t hidden = decoder_h.dim(1);
    Tensor h_tilde = tanh(linear(concat({context, decoder_h}, 1), p.w_c, Tensor(Shape{hidden})));
    return {std::move(h_tilde), std::move(weights), std::move(context)};
}

/// Single example: decoder_h [H], encoder_hs [S x H]; outputs are rank 1.
inline AttentionOutput luong_attention(const AttentionParams& p, const Tensor& decoder_h, const Tensor& encoder_hs) {
    if (encoder_hs.rank() != 2 || encoder_hs.dim(0) == 0) {
        throw ContractError("attention needs at least one encoder step");
    }
    const std::size_t steps = encoder_hs.dim(0);
    const std::size_t hidden = encoder_hs.dim(1);
    if (decoder_h.rank() != 1 || decoder_h.dim(0) != hidden) {
        throw DimensionError("attention: decoder state " + to_string(decoder_h.shape()) + " vs encoder states " +
                             to_string(encoder_hs.shape()));
    }
    AttentionOutput out = luong_attention_batch(p, reshape(decoder_h, {1, hidden}), reshape(encoder_hs, {1, steps, hidden}));
    return {reshape(out.h_tilde, {hidden}), reshape(out.weights, {steps}), reshape(out.context, {hidden})};
}

} // namespace flightcast
