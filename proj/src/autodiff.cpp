#include "mamorl/autodiff.hpp"

#include "mamorl/errors.hpp"

#include <cmath>
#include <sstream>

namespace mamorl::ad {

Tensor make_tensor(Matrix value, bool requires_grad, std::string name) {
    auto node = std::make_shared<TensorNode>();
    node->shape = {value.rows(), value.cols()};
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->name = std::move(name);
    node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
    return node;
}

Tensor make_vector(const RowVector& value, bool requires_grad, std::string name) {
    auto node = make_tensor(Matrix(value), requires_grad, std::move(name));
    node->shape = {value.size()};
    return node;
}

Tensor constant(Matrix value) { return make_tensor(std::move(value), false); }

std::string shape_string(const TensorNode& t) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) out << 'x';
        out << t.shape[i];
    }
    out << ']';
    return out.str();
}

Tensor Tape::output(Matrix value, std::initializer_list<Tensor> inputs) {
    bool tracked = false;
    if (recording()) {
        for (const auto& in : inputs) tracked = tracked || in->requires_grad;
    }
    return make_tensor(std::move(value), tracked);
}

Tensor Tape::output(Matrix value, const std::vector<Tensor>& inputs) {
    bool tracked = false;
    if (recording()) {
        for (const auto& in : inputs) tracked = tracked || in->requires_grad;
    }
    return make_tensor(std::move(value), tracked);
}

void Tape::record(std::vector<Tensor> inputs, Tensor out, std::function<void()> pullback) {
    if (!recording() || !out->requires_grad) return;
    entries_.push_back({std::move(inputs), std::move(out), std::move(pullback)});
}

void Tape::backward(const Tensor& loss) {
    if (loss->size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_string(*loss));
    }
    if (!loss->requires_grad) return;
    loss->grad.array() += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        it->pullback();
    }
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

namespace {

enum class Broadcast { kNone, kLeft, kRight };

// kRight: b is a single row repeated over a's rows; kLeft: the reverse.
Broadcast classify(const TensorNode& a, const TensorNode& b, const char* op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
    if (a.cols() == b.cols() && b.rows() == 1) return Broadcast::kRight;
    if (a.cols() == b.cols() && a.rows() == 1) return Broadcast::kLeft;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                         shape_string(b));
}

Matrix expand(const TensorNode& t, Index rows) {
    if (t.rows() == rows) return t.value;
    return t.value.replicate(rows, 1);
}

void accumulate(TensorNode& target, const Matrix& g) {
    if (!target.requires_grad) return;
    if (target.rows() == g.rows()) {
        target.grad += g;
    } else {
        target.grad += g.colwise().sum();
    }
}

void check_finite(const TensorNode& t, const char* op) {
    if (!t.value.allFinite()) {
        throw NumericInputError(std::string(op) + ": non-finite input");
    }
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a->cols() != b->rows()) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_string(*a) + " x " +
                             shape_string(*b));
    }
    auto out = tape.output(a->value * b->value, {a, b});
    tape.record({a, b}, out, [a, b, o = out.get()] {
        if (a->requires_grad) a->grad.noalias() += o->grad * b->value.transpose();
        if (b->requires_grad) b->grad.noalias() += a->value.transpose() * o->grad;
    });
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    classify(*a, *b, "add");
    const Index rows = std::max(a->rows(), b->rows());
    auto out = tape.output(expand(*a, rows) + expand(*b, rows), {a, b});
    tape.record({a, b}, out, [a, b, o = out.get()] {
        accumulate(*a, o->grad);
        accumulate(*b, o->grad);
    });
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    classify(*a, *b, "sub");
    const Index rows = std::max(a->rows(), b->rows());
    auto out = tape.output(expand(*a, rows) - expand(*b, rows), {a, b});
    tape.record({a, b}, out, [a, b, o = out.get()] {
        accumulate(*a, o->grad);
        accumulate(*b, -o->grad);
    });
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    classify(*a, *b, "mul");
    const Index rows = std::max(a->rows(), b->rows());
    auto out = tape.output(expand(*a, rows).cwiseProduct(expand(*b, rows)), {a, b});
    tape.record({a, b}, out, [a, b, rows, o = out.get()] {
        if (a->requires_grad) accumulate(*a, o->grad.cwiseProduct(expand(*b, rows)));
        if (b->requires_grad) accumulate(*b, o->grad.cwiseProduct(expand(*a, rows)));
    });
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
    auto out = tape.output(a->value * factor, {a});
    tape.record({a}, out, [a, factor, o = out.get()] { a->grad += factor * o->grad; });
    return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
    auto out = tape.output(a->value.cwiseMax(0.0), {a});
    tape.record({a}, out, [a, o = out.get()] {
        a->grad.array() += (a->value.array() > 0.0).select(o->grad.array(), 0.0);
    });
    return out;
}

Tensor tanh(Tape& tape, const Tensor& a) {
    auto out = tape.output(a->value.array().tanh().matrix(), {a});
    tape.record({a}, out, [a, o = out.get()] {
        a->grad.array() += o->grad.array() * (1.0 - o->value.array().square());
    });
    return out;
}

Tensor elementwise(Tape& tape, OpKind kind, const Tensor& a, const Tensor& b) {
    const bool binary = kind == OpKind::kAdd || kind == OpKind::kMul;
    if (binary && !b) throw ContractError("elementwise: binary op requires two operands");
    switch (kind) {
        case OpKind::kAdd: return add(tape, a, b);
        case OpKind::kMul: return mul(tape, a, b);
        case OpKind::kRelu: return relu(tape, a);
        case OpKind::kTanh: return tanh(tape, a);
    }
    throw ContractError("elementwise: unknown op kind");
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add(tape, matmul(tape, x, weight), bias);
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const Index d = x->cols();
    if (d < 2) {
        throw DimensionError("layer_norm: degenerate normalisation over " + std::to_string(d) +
                             " feature(s)");
    }
    if (gain->size() != d || bias->size() != d) {
        throw DimensionError("layer_norm: gain/bias " + shape_string(*gain) + "/" +
                             shape_string(*bias) + " do not match " + shape_string(*x));
    }
    const Eigen::VectorXd mu = x->value.rowwise().mean();
    Matrix centered = x->value.colwise() - mu;
    const Eigen::VectorXd var = centered.array().square().rowwise().mean();
    const Eigen::VectorXd inv_std = (var.array() + eps).rsqrt();
    Matrix xhat = centered.array().colwise() * inv_std.array();
    const RowVector g = gain->value.reshaped<Eigen::RowMajor>().transpose();
    const RowVector b = bias->value.reshaped<Eigen::RowMajor>().transpose();
    Matrix y = (xhat.array().rowwise() * g.array()).rowwise() + b.array();

    auto out = tape.output(std::move(y), {x, gain, bias});
    tape.record({x, gain, bias}, out, [x, gain, bias, xhat, inv_std, g, o = out.get()] {
        const Matrix& gy = o->grad;
        if (gain->requires_grad) {
            const RowVector dg = gy.cwiseProduct(xhat).colwise().sum();
            gain->grad += dg.reshaped(gain->rows(), gain->cols());
        }
        if (bias->requires_grad) {
            const RowVector db = gy.colwise().sum();
            bias->grad += db.reshaped(bias->rows(), bias->cols());
        }
        if (x->requires_grad) {
            const Matrix gxhat = gy.array().rowwise() * g.array();
            const Eigen::VectorXd m1 = gxhat.rowwise().mean();
            const Eigen::VectorXd m2 = gxhat.cwiseProduct(xhat).rowwise().mean();
            Matrix gx = (gxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
            x->grad += (gx.array().colwise() * inv_std.array()).matrix();
        }
    });
    return out;
}

Tensor softmax(Tape& tape, const Tensor& x) {
    check_finite(*x, "softmax");
    Matrix y = x->value.colwise() - x->value.rowwise().maxCoeff();
    y = y.array().exp();
    y = y.array().colwise() / y.rowwise().sum().array();
    auto out = tape.output(std::move(y), {x});
    tape.record({x}, out, [x, o = out.get()] {
        const Eigen::VectorXd dot = o->grad.cwiseProduct(o->value).rowwise().sum();
        x->grad += o->value.cwiseProduct(o->grad.colwise() - dot);
    });
    return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no operands");
    const Index rows = parts.front()->rows();
    Index cols = 0;
    for (const auto& p : parts) {
        if (p->rows() != rows) {
            throw DimensionError("concat_cols: row mismatch " + shape_string(*parts.front()) +
                                 " vs " + shape_string(*p));
        }
        cols += p->cols();
    }
    Matrix y(rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
        y.middleCols(at, p->cols()) = p->value;
        at += p->cols();
    }
    auto out = tape.output(std::move(y), parts);
    tape.record(parts, out, [parts, o = out.get()] {
        Index at = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) p->grad += o->grad.middleCols(at, p->cols());
            at += p->cols();
        }
    });
    return out;
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no operands");
    const Index cols = parts.front()->cols();
    Index rows = 0;
    for (const auto& p : parts) {
        if (p->cols() != cols) {
            throw DimensionError("concat_rows: column mismatch " + shape_string(*parts.front()) +
                                 " vs " + shape_string(*p));
        }
        rows += p->rows();
    }
    Matrix y(rows, cols);
    Index at = 0;
    for (const auto& p : parts) {
        y.middleRows(at, p->rows()) = p->value;
        at += p->rows();
    }
    auto out = tape.output(std::move(y), parts);
    tape.record(parts, out, [parts, o = out.get()] {
        Index at = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) p->grad += o->grad.middleRows(at, p->rows());
            at += p->rows();
        }
    });
    return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, Index begin, Index count) {
    if (begin < 0 || count < 1 || begin + count > x->rows()) {
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") outside " + shape_string(*x));
    }
    auto out = tape.output(x->value.middleRows(begin, count), {x});
    tape.record({x}, out, [x, begin, count, o = out.get()] {
        x->grad.middleRows(begin, count) += o->grad;
    });
    return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, Index begin, Index count) {
    if (begin < 0 || count < 1 || begin + count > x->cols()) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") outside " + shape_string(*x));
    }
    auto out = tape.output(x->value.middleCols(begin, count), {x});
    tape.record({x}, out, [x, begin, count, o = out.get()] {
        x->grad.middleCols(begin, count) += o->grad;
    });
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    auto out = tape.output(Matrix::Constant(1, 1, x->value.sum()), {x});
    tape.record({x}, out, [x, o = out.get()] { x->grad.array() += o->grad(0, 0); });
    return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x->size());
    auto out = tape.output(Matrix::Constant(1, 1, x->value.sum() * inv), {x});
    tape.record({x}, out, [x, inv, o = out.get()] { x->grad.array() += o->grad(0, 0) * inv; });
    return out;
}

Tensor sum_cols(Tape& tape, const Tensor& x) {
    auto out = tape.output(x->value.rowwise().sum(), {x});
    tape.record({x}, out, [x, o = out.get()] { x->grad.colwise() += o->grad.col(0); });
    return out;
}

Tensor grouped_attention(Tape& tape, const Tensor& queries, const Tensor& keys,
                         const Tensor& values, Index n_groups, Index heads,
                         std::vector<Matrix>* weights) {
    const Index rows = queries->rows();
    const Index width = queries->cols();
    if (keys->rows() != rows || values->rows() != rows || keys->cols() != width ||
        values->cols() != width) {
        throw DimensionError("grouped_attention: q/k/v shapes " + shape_string(*queries) + ", " +
                             shape_string(*keys) + ", " + shape_string(*values) + " differ");
    }
    if (n_groups < 1 || rows % n_groups != 0) {
        throw DimensionError("grouped_attention: " + std::to_string(rows) +
                             " rows do not split into " + std::to_string(n_groups) + " groups");
    }
    if (heads < 1 || width % heads != 0) {
        throw DimensionError("grouped_attention: width " + std::to_string(width) +
                             " not divisible by " + std::to_string(heads) + " heads");
    }
    const Index members = rows / n_groups;
    const Index head_dim = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

    auto gather = [members, n_groups, head_dim](const Matrix& src, Index g, Index h) {
        Matrix block(members, head_dim);
        for (Index i = 0; i < members; ++i) {
            block.row(i) = src.block(i * n_groups + g, h * head_dim, 1, head_dim);
        }
        return block;
    };

    // attention matrices, indexed [g * heads + h]
    auto alphas = std::make_shared<std::vector<Matrix>>(n_groups * heads);
    Matrix z(rows, width);
    for (Index g = 0; g < n_groups; ++g) {
        for (Index h = 0; h < heads; ++h) {
            const Matrix q = gather(queries->value, g, h);
            const Matrix k = gather(keys->value, g, h);
            const Matrix v = gather(values->value, g, h);
            Matrix s = (q * k.transpose()) * inv_sqrt;
            s = s.colwise() - s.rowwise().maxCoeff();
            s = s.array().exp();
            s = s.array().colwise() / s.rowwise().sum().array();
            const Matrix zg = s * v;
            for (Index i = 0; i < members; ++i) {
                z.block(i * n_groups + g, h * head_dim, 1, head_dim) = zg.row(i);
            }
            (*alphas)[g * heads + h] = std::move(s);
        }
    }
    if (weights) *weights = *alphas;

    auto out = tape.output(std::move(z), {queries, keys, values});
    tape.record({queries, keys, values}, out,
                [=, q_node = queries, k_node = keys, v_node = values, o = out.get()] {
                    for (Index g = 0; g < n_groups; ++g) {
                        for (Index h = 0; h < heads; ++h) {
                            const Matrix& a = (*alphas)[g * heads + h];
                            const Matrix dz = gather(o->grad, g, h);
                            const Matrix q = gather(q_node->value, g, h);
                            const Matrix k = gather(k_node->value, g, h);
                            const Matrix v = gather(v_node->value, g, h);
                            const Matrix da = dz * v.transpose();
                            const Matrix dv = a.transpose() * dz;
                            const Eigen::VectorXd dot = da.cwiseProduct(a).rowwise().sum();
                            const Matrix ds = a.cwiseProduct(da.colwise() - dot) * inv_sqrt;
                            const Matrix dq = ds * k;
                            const Matrix dk = ds.transpose() * q;
                            for (Index i = 0; i < members; ++i) {
                                const Index r = i * n_groups + g;
                                if (q_node->requires_grad)
                                    q_node->grad.block(r, h * head_dim, 1, head_dim) += dq.row(i);
                                if (k_node->requires_grad)
                                    k_node->grad.block(r, h * head_dim, 1, head_dim) += dk.row(i);
                                if (v_node->requires_grad)
                                    v_node->grad.block(r, h * head_dim, 1, head_dim) += dv.row(i);
                            }
                        }
                    }
                });
    return out;
}

}  // namespace mamorl::ad
