#pragma once

// Dense row-major double tensors with a dynamic reverse-mode tape.
//
// Operations record themselves onto the tape that is active on the calling
// thread (see Tape::Recording) whenever at least one operand requires a
// gradient. Without an active tape the same calls run as plain inference.

#include "flightcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flightcast {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until first touched
    bool requires_grad = false;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) {
            grad.assign(data.size(), 0.0);
        }
        return grad;
    }
};

using NodePtr = std::shared_ptr<TensorNode>;

} // namespace detail

class Tape;

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : node_(std::make_shared<detail::TensorNode>()) {
        node_->data.assign(element_count(shape), fill);
        node_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::TensorNode>()) {
        if (element_count(shape) != values.size()) {
            throw DimensionError("tensor shape " + to_string(shape) + " holds " + std::to_string(element_count(shape)) +
                                 " values, got " + std::to_string(values.size()));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(values);
    }

    static Tensor scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

    /// Trainable leaf.
    static Tensor parameter(Shape shape, std::vector<double> values) {
        Tensor t(std::move(shape), std::move(values));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    std::vector<double> values() const { return node_->data; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    double item() const {
        if (size() != 1) {
            throw DimensionError("item() on tensor of shape " + to_string(shape()));
        }
        return node_->data[0];
    }
    double operator[](std::size_t i) const { return node_->data[i]; }
    double at(std::size_t row, std::size_t col) const { return node_->data.at(row * node_->shape.at(1) + col); }

    /// Independent copy that does not participate in any tape.
    Tensor clone() const {
        Tensor out(shape(), node_->data);
        out.node_->requires_grad = node_->requires_grad;
        return out;
    }

    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

    const detail::NodePtr& node() const { return node_; }

private:
    detail::NodePtr node_;
};

/// Ordered record of differentiable operations for one forward pass.
class Tape {
public:
    using BackwardRule = std::function<void(const std::vector<double>& output_grad)>;

    struct Entry {
        std::vector<detail::NodePtr> inputs;
        detail::NodePtr output;
        BackwardRule backward;
    };

    /// RAII guard that makes this tape the recording target for the current thread.
    class Recording {
    public:
        explicit Recording(Tape& tape) : previous_(current()) { current() = &tape; }
        ~Recording() { current() = previous_; }
        Recording(const Recording&) = delete;
        Recording& operator=(const Recording&) = delete;

    private:
        Tape* previous_;
    };

    /// Temporarily disables recording (inference inside a training step).
    class Paused {
    public:
        Paused() : previous_(current()) { current() = nullptr; }
        ~Paused() { current() = previous_; }
        Paused(const Paused&) = delete;
        Paused& operator=(const Paused&) = delete;

    private:
        Tape* previous_;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] Recording record() { return Recording(*this); }

    static Tape* active() { return current(); }

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    void push(Entry entry) { entries_.push_back(std::move(entry)); }

    void clear() { entries_.clear(); }

    /// Seeds d(loss)/d(loss) = 1 and replays every backward rule once, newest first.
    /// Leaf gradients accumulate; call zero_grad on parameters between steps.
    void backward(const Tensor& loss) {
        if (!loss.defined() || loss.size() != 1) {
            throw ContractError("backward requires a scalar loss, got shape " +
                                (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
        }
        if (!loss.requires_grad()) {
            return; // constant loss: every gradient is zero
        }
        loss.node()->ensure_grad()[0] += 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (!it->output->grad.empty()) {
                it->backward(it->output->grad);
            }
        }
    }

private:
    static Tape*& current() {
        thread_local Tape* tape = nullptr;
        return tape;
    }

    std::vector<Entry> entries_;
};

namespace detail {

/// Builds an op result and, when warranted, records its backward rule.
/// `make_rule` is only invoked if recording happens; it receives the output node.
template <class MakeRule>
Tensor finish(Shape shape, std::vector<double> values, const std::vector<const Tensor*>& inputs, MakeRule&& make_rule) {
    Tensor out(std::move(shape), std::move(values));
    Tape* tape = Tape::active();
    const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
    if (tape != nullptr && needs) {
        out.set_requires_grad(true);
        Tape::Entry entry;
        entry.inputs.reserve(inputs.size());
        for (const Tensor* t : inputs) {
            entry.inputs.push_back(t->node());
        }
        entry.output = out.node();
        entry.backward = make_rule(out.node());
        tape->push(std::move(entry));
    }
    return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

inline void require_finite(std::span<const double> values, const char* op) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite input");
        }
    }
}

inline void accumulate(const NodePtr& node, std::size_t i, double g) {
    if (node->requires_grad) {
        node->ensure_grad()[i] += g;
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[m x k] * b[k x n] -> [m x n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += av * bd[p * n + j];
            }
        }
    }
    return detail::finish({m, n}, std::move(out), {&a, &b}, [an = a.node(), bn = b.node(), m, k, n](const detail::NodePtr&) {
        return [an, bn, m, k, n](const std::vector<double>& g) {
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            acc += g[i * n + j] * bn->data[p * n + j];
                        }
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = an->data[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) {
                            gb[p * n + j] += av * g[i * n + j];
                        }
                    }
                }
            }
        };
    });
}

/// x W^T + b for x of shape [in] or [rows x in], W [out x in], b [out].
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        throw DimensionError("linear: weight " + to_string(weight.shape()) + " and bias " + to_string(bias.shape()) +
                             " are inconsistent");
    }
    const std::size_t in = weight.dim(1);
    const std::size_t outd = weight.dim(0);
    const bool vector_input = x.rank() == 1;
    if ((vector_input && x.dim(0) != in) || (!vector_input && (x.rank() != 2 || x.dim(1) != in))) {
        throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " + to_string(weight.shape()));
    }
    const std::size_t rows = vector_input ? 1 : x.dim(0);
    std::vector<double> out(rows * outd);
    const auto xd = x.data();
    const auto wd = weight.data();
    const auto bd = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xd.data() + r * in;
        for (std::size_t o = 0; o < outd; ++o) {
            const double* wr = wd.data() + o * in;
            double acc = bd[o];
            for (std::size_t i = 0; i < in; ++i) {
                acc += xr[i] * wr[i];
            }
            out[r * outd + o] = acc;
        }
    }
    Shape shape = vector_input ? Shape{outd} : Shape{rows, outd};
    return detail::finish(std::move(shape), std::move(out), {&x, &weight, &bias},
                          [xn = x.node(), wn = weight.node(), bn = bias.node(), rows, in, outd](const detail::NodePtr&) {
                              return [xn, wn, bn, rows, in, outd](const std::vector<double>& g) {
                                  if (xn->requires_grad) {
                                      auto& gx = xn->ensure_grad();
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          for (std::size_t o = 0; o < outd; ++o) {
                                              const double go = g[r * outd + o];
                                              const double* wr = wn->data.data() + o * in;
                                              double* gxr = gx.data() + r * in;
                                              for (std::size_t i = 0; i < in; ++i) {
                                                  gxr[i] += go * wr[i];
                                              }
                                          }
                                      }
                                  }
                                  if (wn->requires_grad) {
                                      auto& gw = wn->ensure_grad();
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          const double* xr = xn->data.data() + r * in;
                                          for (std::size_t o = 0; o < outd; ++o) {
                                              const double go = g[r * outd + o];
                                              double* gwr = gw.data() + o * in;
                                              for (std::size_t i = 0; i < in; ++i) {
                                                  gwr[i] += go * xr[i];
                                              }
                                          }
                                      }
                                  }
                                  if (bn->requires_grad) {
                                      auto& gb = bn->ensure_grad();
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          for (std::size_t o = 0; o < outd; ++o) {
                                              gb[o] += g[r * outd + o];
                                          }
                                      }
                                  }
                              };
                          });
}

// ---------------------------------------------------------------------------
// Elementwise

enum class Elementwise { add, sub, mul };

inline Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind) {
    detail::require_same_shape(a, b, "elementwise");
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(ad.size());
    switch (kind) {
    case Elementwise::add:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
        break;
    case Elementwise::sub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
        break;
    case Elementwise::mul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
        break;
    }
    return detail::finish(a.shape(), std::move(out), {&a, &b}, [an = a.node(), bn = b.node(), kind](const detail::NodePtr&) {
        return [an, bn, kind](const std::vector<double>& g) {
            const std::size_t n = g.size();
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                if (kind == Elementwise::mul) {
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bn->data[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                }
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                if (kind == Elementwise::mul) {
                    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * an->data[i];
                } else if (kind == Elementwise::sub) {
                    for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
                }
            }
        };
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::mul); }

/// x * factor for a constant factor.
inline Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) {
        v *= factor;
    }
    return detail::finish(x.shape(), std::move(out), {&x}, [xn = x.node(), factor](const detail::NodePtr&) {
        return [xn, factor](const std::vector<double>& g) {
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
        };
    });
}

// ---------------------------------------------------------------------------
// Activations

enum class Activation { sigmoid, tanh, softmax_lastdim };

inline Tensor apply_activation(const Tensor& x, Activation kind) {
    const auto xd = x.data();
    detail::require_finite(xd, kind == Activation::sigmoid ? "sigmoid" : kind == Activation::tanh ? "tanh" : "softmax");
    std::vector<double> out(xd.size());
    std::size_t width = 0;
    switch (kind) {
    case Activation::sigmoid:
        for (std::size_t i = 0; i < xd.size(); ++i) {
            // split by sign so exp never overflows
            if (xd[i] >= 0.0) {
                out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
            } else {
                const double e = std::exp(xd[i]);
                out[i] = e / (1.0 + e);
            }
        }
        break;
    case Activation::tanh:
        for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::tanh(xd[i]);
        break;
    case Activation::softmax_lastdim: {
        if (x.rank() == 0 || x.shape().back() == 0) {
            throw ContractError("softmax requires a last dimension of at least 1");
        }
        width = x.shape().back();
        for (std::size_t start = 0; start < xd.size(); start += width) {
            double peak = xd[start];
            for (std::size_t j = 1; j < width; ++j) peak = std::max(peak, xd[start + j]);
            double total = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
                out[start + j] = std::exp(xd[start + j] - peak);
                total += out[start + j];
            }
            for (std::size_t j = 0; j < width; ++j) out[start + j] /= total;
        }
        break;
    }
    }
    return detail::finish(x.shape(), std::move(out), {&x}, [xn = x.node(), kind, width](const detail::NodePtr& yn) {
        return [xn, yn, kind, width](const std::vector<double>& g) {
            const auto& y = yn->data;
            auto& gx = xn->ensure_grad();
            switch (kind) {
            case Activation::sigmoid:
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
                break;
            case Activation::tanh:
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            case Activation::softmax_lastdim:
                for (std::size_t start = 0; start < g.size(); start += width) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < width; ++j) dot += g[start + j] * y[start + j];
                    for (std::size_t j = 0; j < width; ++j) gx[start + j] += y[start + j] * (g[start + j] - dot);
                }
                break;
            }
        };
    });
}

inline Tensor sigmoid(const Tensor& x) { return apply_activation(x, Activation::sigmoid); }
inline Tensor tanh(const Tensor& x) { return apply_activation(x, Activation::tanh); }
inline Tensor softmax(const Tensor& x) { return apply_activation(x, Activation::softmax_lastdim); }

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (element_count(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return detail::finish(std::move(shape), std::move(out), {&x}, [xn = x.node()](const detail::NodePtr&) {
        return [xn](const std::vector<double>& g) {
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
    });
}

/// Joins tensors of equal rank along `axis`; all other dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) {
        throw ContractError("concat: no inputs");
    }
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) {
        throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + to_string(first));
    }
    Shape shape = first;
    shape[axis] = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) {
            ok = d == axis || s[d] == first[d];
        }
        if (!ok) {
            throw DimensionError("concat: " + to_string(s) + " incompatible with " + to_string(first) + " on axis " +
                                 std::to_string(axis));
        }
        shape[axis] += s[axis];
    }
    std::size_t outer = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t out_row = shape[axis] * inner;

    std::vector<double> out(element_count(shape));
    std::vector<std::size_t> widths;
    widths.reserve(parts.size());
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.shape()[axis] * inner;
        const auto pd = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * w), w, out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
        }
        widths.push_back(w);
        offset += w;
    }
    std::vector<const Tensor*> inputs;
    inputs.reserve(parts.size());
    for (const Tensor& p : parts) inputs.push_back(&p);
    return detail::finish(std::move(shape), std::move(out), inputs, [&parts, widths, outer, out_row](const detail::NodePtr&) {
        std::vector<detail::NodePtr> nodes;
        nodes.reserve(parts.size());
        for (const Tensor& p : parts) nodes.push_back(p.node());
        return [nodes = std::move(nodes), widths, outer, out_row](const std::vector<double>& g) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                const std::size_t w = widths[k];
                if (nodes[k]->requires_grad) {
                    auto& gp = nodes[k]->ensure_grad();
                    for (std::size_t o = 0; o < outer; ++o) {
                        for (std::size_t j = 0; j < w; ++j) gp[o * w + j] += g[o * out_row + off + j];
                    }
                }
                off += w;
            }
        };
    });
}

/// Rows `indices` of a [rows x width] table -> [indices.size() x width].
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
    if (table.rank() != 2) {
        throw DimensionError("gather_rows: table must be rank 2, got " + to_string(table.shape()));
    }
    const std::size_t rows = table.dim(0);
    const std::size_t width = table.dim(1);
    std::vector<double> out(indices.size() * width);
    const auto td = table.data();
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= rows) {
            throw CategoryError("gather_rows: index " + std::to_string(indices[r]) + " outside [0, " + std::to_string(rows) + ")");
        }
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(indices[r] * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    return detail::finish({indices.size(), width}, std::move(out), {&table},
                          [tn = table.node(), idx = std::vector<std::size_t>(indices.begin(), indices.end()), width](const detail::NodePtr&) {
                              return [tn, idx, width](const std::vector<double>& g) {
                                  auto& gt = tn->ensure_grad();
                                  for (std::size_t r = 0; r < idx.size(); ++r) {
                                      for (std::size_t j = 0; j < width; ++j) gt[idx[r] * width + j] += g[r * width + j];
                                  }
                              };
                          });
}

// ---------------------------------------------------------------------------
// Batched attention primitives

/// scores[b, s] = <query[b, :], keys[b, s, :]> for query [B x H], keys [B x S x H].
inline Tensor batched_dot(const Tensor& query, const Tensor& keys) {
    if (query.rank() != 2 || keys.rank() != 3 || keys.dim(0) != query.dim(0) || keys.dim(2) != query.dim(1)) {
        throw DimensionError("batched_dot: query " + to_string(query.shape()) + " vs keys " + to_string(keys.shape()));
    }
    const std::size_t batch = keys.dim(0);
    const std::size_t steps = keys.dim(1);
    const std::size_t hidden = keys.dim(2);
    std::vector<double> out(batch * steps, 0.0);
    const auto qd = query.data();
    const auto kd = keys.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < steps; ++s) {
            double acc = 0.0;
            for (std::size_t h = 0; h < hidden; ++h) acc += qd[b * hidden + h] * kd[(b * steps + s) * hidden + h];
            out[b * steps + s] = acc;
        }
    }
    return detail::finish({batch, steps}, std::move(out), {&query, &keys},
                          [qn = query.node(), kn = keys.node(), batch, steps, hidden](const detail::NodePtr&) {
                              return [qn, kn, batch, steps, hidden](const std::vector<double>& g) {
                                  for (std::size_t b = 0; b < batch; ++b) {
                                      for (std::size_t s = 0; s < steps; ++s) {
                                          const double gs = g[b * steps + s];
                                          const std::size_t kbase = (b * steps + s) * hidden;
                                          if (qn->requires_grad) {
                                              auto& gq = qn->ensure_grad();
                                              for (std::size_t h = 0; h < hidden; ++h) gq[b * hidden + h] += gs * kn->data[kbase + h];
                                          }
                                          if (kn->requires_grad) {
                                              auto& gk = kn->ensure_grad();
                                              for (std::size_t h = 0; h < hidden; ++h) gk[kbase + h] += gs * qn->data[b * hidden + h];
                                          }
                                      }
                                  }
                              };
                          });
}

/// out[b, :] = sum_s weights[b, s] * values[b, s, :] for weights [B x S], values [B x S x H].
inline Tensor batched_weighted_sum(const Tensor& weights, const Tensor& values) {
    if (weights.rank() != 2 || values.rank() != 3 || values.dim(0) != weights.dim(0) || values.dim(1) != weights.dim(1)) {
        throw DimensionError("batched_weighted_sum: weights " + to_string(weights.shape()) + " vs values " + to_string(values.shape()));
    }
    const std::size_t batch = values.dim(0);
    const std::size_t steps = values.dim(1);
    const std::size_t hidden = values.dim(2);
    std::vector<double> out(batch * hidden, 0.0);
    const auto wd = weights.data();
    const auto vd = values.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < steps; ++s) {
            const double w = wd[b * steps + s];
            for (std::size_t h = 0; h < hidden; ++h) out[b * hidden + h] += w * vd[(b * steps + s) * hidden + h];
        }
    }
    return detail::finish({batch, hidden}, std::move(out), {&weights, &values},
                          [wn = weights.node(), vn = values.node(), batch, steps, hidden](const detail::NodePtr&) {
                              return [wn, vn, batch, steps, hidden](const std::vector<double>& g) {
                                  for (std::size_t b = 0; b < batch; ++b) {
                                      for (std::size_t s = 0; s < steps; ++s) {
                                          const std::size_t vbase = (b * steps + s) * hidden;
                                          if (wn->requires_grad) {
                                              double acc = 0.0;
                                              for (std::size_t h = 0; h < hidden; ++h) acc += g[b * hidden + h] * vn->data[vbase + h];
                                              wn->ensure_grad()[b * steps + s] += acc;
                                          }
                                          if (vn->requires_grad) {
                                              auto& gv = vn->ensure_grad();
                                              const double w = wn->data[b * steps + s];
                                              for (std::size_t h = 0; h < hidden; ++h) gv[vbase + h] += w * g[b * hidden + h];
                                          }
                                      }
                                  }
                              };
                          });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return detail::finish({1}, {total}, {&x}, [xn = x.node()](const detail::NodePtr&) {
        return [xn](const std::vector<double>& g) {
            auto& gx = xn->ensure_grad();
            for (double& v : gx) v += g[0];
        };
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// mean((prediction - target)^2).
inline Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
    const Tensor diff = sub(prediction, target);
    return mean(mul(diff, diff));
}

// ---------------------------------------------------------------------------
// Gradient utilities

inline void zero_grads(std::span<Tensor> params) {
    for (Tensor& p : params) p.zero_grad();
}

/// Runs `loss_fn` on a fresh tape and back-propagates into `params`, which are zeroed first.
template <class LossFn>
double compute_gradients(LossFn&& loss_fn, std::span<Tensor> params) {
    zero_grads(params);
    for (Tensor& p : params) p.mutable_grad();
    Tape tape;
    Tensor loss;
    {
        auto recording = tape.record();
        loss = loss_fn();
    }
    tape.backward(loss);
    return loss.item();
}

/// Largest |analytic - central difference| / max(1, |central difference|) over
/// every coordinate of every parameter.
template <class LossFn>
double grad_check(LossFn&& loss_fn, std::span<Tensor> params, double eps) {
    if (!(eps > 0.0)) {
        throw ContractError("grad_check: eps must be positive");
    }
    const double base = compute_gradients(loss_fn, params);
    if (!std::isfinite(base)) {
        throw NumericError("grad_check: non-finite loss");
    }
    Tape::Paused paused;
    double worst = 0.0;
    for (Tensor& p : params) {
        const std::vector<double> analytic(p.grad().begin(), p.grad().end());
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = loss_fn().item();
            values[i] = saved - eps;
            const double down = loss_fn().item();
            values[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check: non-finite loss at perturbed parameter");
            }
            const double numeric = (up - down) / (2.0 * eps);
            worst = std::max(worst, std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric)));
        }
    }
    return worst;
}

} // namespace flightcast
