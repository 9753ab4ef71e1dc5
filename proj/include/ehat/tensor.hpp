#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ehat/errors.hpp"
#include "ehat/mat.hpp"
#include "ehat/rng.hpp"

namespace ehat {

class Graph;

enum class Mode { train, eval };

// Trainable parameter: a named matrix with a persistent gradient
// accumulator. Owned by a ParameterStore.
struct Param {
    std::string path;
    Mat value;
    Mat grad;

    Param(std::string p, Mat v) : path(std::move(p)), value(std::move(v)) {
        grad = Mat(value.rows, value.cols);
    }
};

// Named map of trainable parameters. Paths are unique; iteration is in
// sorted path order so checkpoints and gradient checks are reproducible.
class ParameterStore {
public:
    Param& create(const std::string& path, Mat init);
    Param* find(const std::string& path);
    Param& get(const std::string& path);
    bool contains(const std::string& path) const { return params_.count(path) != 0; }

    std::size_t total_count() const;            // total scalar entries
    std::size_t count_with_prefix(const std::string& prefix) const;
    void zero_grads();

    // Sorted by path.
    std::vector<Param*> all();
    std::vector<const Param*> all() const;

private:
    std::map<std::string, std::unique_ptr<Param>> params_;
};

// One node of a reverse-mode graph: a value, an optional gradient of the
// same shape, and a closure that pushes this node's gradient to its
// parents. Nodes are owned by the Graph that created them.
struct TensorNode {
    Graph* graph = nullptr;
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> backward;
    Param* param = nullptr;
};

// Lightweight handle to a graph node. Valid while the owning Graph lives.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorNode* n) : n_(n) {}

    bool defined() const { return n_ != nullptr; }
    const Mat& value() const { return n_->value; }
    const Mat& grad() const { return n_->grad; }
    std::size_t rows() const { return n_->value.rows; }
    std::size_t cols() const { return n_->value.cols; }
    std::vector<std::size_t> shape() const { return {rows(), cols()}; }
    bool requires_grad() const { return n_->requires_grad; }

    TensorNode* node() const { return n_; }

private:
    TensorNode* n_ = nullptr;
};

// Holds the tape for one forward/backward pass. Construction order is a
// topological order, so backward just walks the tape in reverse. A graph
// built with grad_enabled=false records no closures and allocates no
// gradients (inference mode). Single-threaded during construction and
// backward; node values are immutable once created.
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return tape_.size(); }

    Tensor leaf(Mat v, bool requires_grad = false);
    Tensor constant(Mat v) { return leaf(std::move(v), false); }
    Tensor param(Param& p);

    // Fills grads of every requires_grad node reachable from loss. Loss
    // must be scalar (1x1). Repeated calls accumulate.
    void backward(Tensor loss);

    // Internal: used by op builders.
    Tensor make(Mat value, std::vector<Tensor> parents, const char* op_name,
                std::function<void()> backward_fn = nullptr);

private:
    std::deque<std::unique_ptr<TensorNode>> tape_;
    bool grad_enabled_;
};

// ---- Operations ----------------------------------------------------------
// All ops validate shapes (DimensionError) and reject non-finite outputs
// (NumericError). Elementwise add/mul accept a same-shape tensor, a 1 x n
// row vector broadcast over rows, or a 1 x 1 scalar; nothing else.

Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor a);
Tensor softmax_rows(Tensor a);
Tensor log_softmax_rows(Tensor a);
Tensor relu(Tensor a);
Tensor sigmoid(Tensor a);
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor scale(Tensor a, double s);
Tensor add_scalar(Tensor a, double s);
Tensor concat_cols(Tensor a, Tensor b);
Tensor concat_rows(Tensor a, Tensor b);
Tensor slice_rows(Tensor a, std::size_t r0, std::size_t r1); // [r0, r1)
Tensor scale_rows(Tensor a, Tensor v);   // row i scaled by v(i,0); v is m x 1
Tensor cumsum_rows(Tensor a);            // row t = sum of rows 0..t
Tensor row_sums(Tensor a);               // m x 1
Tensor sum(Tensor a);                    // 1 x 1
Tensor dropout(Tensor a, double rate, Mode mode, RngStream& rng);
Tensor embed_rows(Tensor table, const std::vector<int>& ids);
Tensor pick_cols(Tensor a, const std::vector<int>& ids); // y(i,0) = a(i, ids[i])
Tensor layer_norm_rows(Tensor x, Tensor gamma, Tensor beta, double eps = 1e-5);

// ---- Gradient checking ----------------------------------------------------

// Builds the graph twice to detect non-determinism (ContractError), then
// compares analytic parameter gradients against central differences.
// Returns the max over all parameter entries of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

GradCheckReport grad_check(ParameterStore& params,
                           const std::function<Tensor(Graph&)>& builder,
                           double eps = 1e-5);

namespace testing {
// Fault injection for verifying that grad_check actually detects a broken
// backward pass. Never set outside tests.
extern bool corrupt_matmul_backward;
} // namespace testing

} // namespace ehat
