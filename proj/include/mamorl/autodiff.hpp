#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mamorl::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Shaped array of doubles taking part in reverse-mode differentiation.
///
/// Rank-1 tensors of shape {d} are stored as a 1 x d row so that they
/// broadcast along the leading dimension of a rank-2 operand.
struct TensorNode {
    std::vector<Index> shape;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::string name;

    Index rows() const { return value.rows(); }
    Index cols() const { return value.cols(); }
    Index size() const { return value.size(); }
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using Tensor = std::shared_ptr<TensorNode>;

Tensor make_tensor(Matrix value, bool requires_grad = false, std::string name = {});
Tensor make_vector(const RowVector& value, bool requires_grad = false, std::string name = {});
Tensor constant(Matrix value);

std::string shape_string(const TensorNode& t);

/// Define-by-run record of primitive operations.
///
/// Entries are appended in evaluation order, so replaying them backwards
/// visits every node only after all of its consumers. An inference tape
/// computes values but records nothing.
class Tape {
public:
    enum class Mode { kRecord, kInference };

    explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}

    bool recording() const { return mode_ == Mode::kRecord; }
    std::size_t size() const { return entries_.size(); }

    /// Creates the output node for an op; grads are tracked iff any input tracks them
    /// and the tape is recording.
    Tensor output(Matrix value, std::initializer_list<Tensor> inputs);
    Tensor output(Matrix value, const std::vector<Tensor>& inputs);

    void record(std::vector<Tensor> inputs, Tensor out, std::function<void()> pullback);

    /// Seeds d(loss)/d(loss) = 1 and accumulates grads into every tracked ancestor.
    void backward(const Tensor& loss);

    void clear() { entries_.clear(); }

private:
    struct Entry {
        std::vector<Tensor> inputs;
        Tensor out;
        std::function<void()> pullback;
    };

    Mode mode_;
    std::vector<Entry> entries_;
};

void backward(const Tensor& loss, Tape& tape);

enum class OpKind { kAdd, kMul, kRelu, kTanh };

Tensor elementwise(Tape& tape, OpKind kind, const Tensor& a, const Tensor& b = nullptr);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor relu(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);

/// y = a W + b with b broadcast over rows.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise normalisation to zero mean and unit variance, then gain and bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

/// Row-wise softmax with max subtraction.
Tensor softmax(Tape& tape, const Tensor& x);

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_rows(Tape& tape, const Tensor& x, Index begin, Index count);
Tensor slice_cols(Tape& tape, const Tensor& x, Index begin, Index count);

/// Scalar sum of all entries.
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
/// Sum along the last axis: r x c -> r x 1.
Tensor sum_cols(Tape& tape, const Tensor& x);

/// Multi-head scaled dot-product attention inside groups of rows.
///
/// Rows are laid out member-major: row (i * n_groups + g) belongs to member i
/// of group g. Every group attends only over its own members. Columns are
/// split into `heads` equal blocks, one per head. When `weights` is non-null it
/// receives the attention matrices, indexed [g * heads + head], each
/// members x members and row-stochastic.
Tensor grouped_attention(Tape& tape, const Tensor& queries, const Tensor& keys,
                         const Tensor& values, Index n_groups, Index heads,
                         std::vector<Matrix>* weights = nullptr);

}  // namespace mamorl::ad
