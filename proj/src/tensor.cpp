#include <algorithm>
#include <cmath>
#include <cstring>

#include "ehat/kernels.hpp"
#include "ehat/tensor.hpp"

namespace ehat {

namespace testing {
bool corrupt_matmul_backward = false;
} // namespace testing

namespace {

const kernels::Ops& K() { return kernels::active(); }

void check_finite(const char* op, const Mat& m) {
    for (double v : m.a) {
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + ": non-finite value in " + shape_str(m) + " output");
    }
}

Mat transpose_mat(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

void require_same_graph(Tensor a, Tensor b, const char* op) {
    if (a.node()->graph != b.node()->graph)
        throw ContractError(std::string(op) + ": operands belong to different graphs");
}

} // namespace

// ---- ParameterStore --------------------------------------------------------

Param& ParameterStore::create(const std::string& path, Mat init) {
    auto [it, inserted] = params_.emplace(path, nullptr);
    if (!inserted) throw ContractError("parameter path already exists: " + path);
    it->second = std::make_unique<Param>(path, std::move(init));
    return *it->second;
}

Param* ParameterStore::find(const std::string& path) {
    auto it = params_.find(path);
    return it == params_.end() ? nullptr : it->second.get();
}

Param& ParameterStore::get(const std::string& path) {
    Param* p = find(path);
    if (!p) throw ContractError("no such parameter: " + path);
    return *p;
}

std::size_t ParameterStore::total_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p->value.size();
    return n;
}

std::size_t ParameterStore::count_with_prefix(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& [path, p] : params_)
        if (path.rfind(prefix, 0) == 0) n += p->value.size();
    return n;
}

void ParameterStore::zero_grads() {
    for (auto& [_, p] : params_) std::fill(p->grad.a.begin(), p->grad.a.end(), 0.0);
}

std::vector<Param*> ParameterStore::all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& [_, p] : params_) out.push_back(p.get());
    return out;
}

std::vector<const Param*> ParameterStore::all() const {
    std::vector<const Param*> out;
    out.reserve(params_.size());
    for (const auto& [_, p] : params_) out.push_back(p.get());
    return out;
}

// ---- Graph -----------------------------------------------------------------

Tensor Graph::make(Mat value, std::vector<Tensor> parents, const char* op_name,
                   std::function<void()> backward_fn) {
    check_finite(op_name, value);
    auto node = std::make_unique<TensorNode>();
    node->graph = this;
    node->value = std::move(value);
    if (grad_enabled_) {
        for (Tensor p : parents)
            if (p.defined() && p.node()->requires_grad) node->requires_grad = true;
        if (node->requires_grad) {
            node->grad = Mat(node->value.rows, node->value.cols);
            node->backward = std::move(backward_fn);
        }
    }
    tape_.push_back(std::move(node));
    return Tensor(tape_.back().get());
}

Tensor Graph::leaf(Mat v, bool requires_grad) {
    auto node = std::make_unique<TensorNode>();
    node->graph = this;
    node->value = std::move(v);
    if (grad_enabled_ && requires_grad) {
        node->requires_grad = true;
        node->grad = Mat(node->value.rows, node->value.cols);
    }
    tape_.push_back(std::move(node));
    return Tensor(tape_.back().get());
}

Tensor Graph::param(Param& p) {
    if (!grad_enabled_) return leaf(p.value, false);
    Tensor t = leaf(p.value, true);
    TensorNode* n = t.node();
    Param* pp = &p;
    n->backward = [n, pp]() { K().axpy(1.0, n->grad.data(), pp->grad.data(), n->grad.size()); };
    n->param = pp;
    return t;
}

void Graph::backward(Tensor loss) {
    if (!grad_enabled_) throw ContractError("backward: graph was built with gradients disabled");
    if (loss.rows() != 1 || loss.cols() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.value()));
    if (!loss.node()->requires_grad) return; // nothing reachable requires grad
    loss.node()->grad.at(0, 0) += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        TensorNode* n = it->get();
        if (n->requires_grad && n->backward) n->backward();
    }
}

// ---- Op helpers ------------------------------------------------------------

namespace {

Graph& G(Tensor t) { return *t.node()->graph; }

} // namespace

// ---- Ops -------------------------------------------------------------------

Tensor matmul(Tensor a, Tensor b) {
    require_same_graph(a, b, "matmul");
    const Mat& A = a.value();
    const Mat& B = b.value();
    if (A.cols != B.rows)
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(A) + " * " + shape_str(B));
    Mat C(A.rows, B.cols);
    K().gemm(A.data(), B.data(), C.data(), A.rows, A.cols, B.cols);
    Tensor out = G(a).make(std::move(C), {a, b}, "matmul");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    if (on->requires_grad) {
        on->backward = [on, an, bn]() {
            const Mat& dC = on->grad;
            if (an->requires_grad) {
                Mat bt = transpose_mat(bn->value);
                Mat tmp(dC.rows, bt.cols);
                K().gemm(dC.data(), bt.data(), tmp.data(), dC.rows, dC.cols, bt.cols);
                if (testing::corrupt_matmul_backward && tmp.size() > 0) tmp.a[0] += 0.5;
                K().axpy(1.0, tmp.data(), an->grad.data(), tmp.size());
            }
            if (bn->requires_grad) {
                Mat at = transpose_mat(an->value);
                Mat tmp(at.rows, dC.cols);
                K().gemm(at.data(), dC.data(), tmp.data(), at.rows, at.cols, dC.cols);
                K().axpy(1.0, tmp.data(), bn->grad.data(), tmp.size());
            }
        };
    }
    return out;
}

Tensor transpose(Tensor a) {
    Mat T = transpose_mat(a.value());
    Tensor out = G(a).make(std::move(T), {a}, "transpose");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            Mat gt = transpose_mat(on->grad);
            K().axpy(1.0, gt.data(), an->grad.data(), gt.size());
        };
    }
    return out;
}

Tensor softmax_rows(Tensor a) {
    const Mat& A = a.value();
    Mat Y(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* x = A.row(i);
        double* y = Y.row(i);
        double m = x[0];
        for (std::size_t j = 1; j < A.cols; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols; ++j) {
            y[j] = std::exp(x[j] - m);
            s += y[j];
        }
        for (std::size_t j = 0; j < A.cols; ++j) y[j] /= s;
    }
    Tensor out = G(a).make(std::move(Y), {a}, "softmax_rows");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            const Mat& Yv = on->value;
            const Mat& dY = on->grad;
            for (std::size_t i = 0; i < Yv.rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < Yv.cols; ++j) dot += dY.at(i, j) * Yv.at(i, j);
                for (std::size_t j = 0; j < Yv.cols; ++j)
                    an->grad.at(i, j) += Yv.at(i, j) * (dY.at(i, j) - dot);
            }
        };
    }
    return out;
}

Tensor log_softmax_rows(Tensor a) {
    const Mat& A = a.value();
    Mat Y(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* x = A.row(i);
        double* y = Y.row(i);
        double m = x[0];
        for (std::size_t j = 1; j < A.cols; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols; ++j) s += std::exp(x[j] - m);
        const double lse = m + std::log(s);
        for (std::size_t j = 0; j < A.cols; ++j) y[j] = x[j] - lse;
    }
    Tensor out = G(a).make(std::move(Y), {a}, "log_softmax_rows");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            const Mat& Yv = on->value;
            const Mat& dY = on->grad;
            for (std::size_t i = 0; i < Yv.rows; ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < Yv.cols; ++j) gsum += dY.at(i, j);
                for (std::size_t j = 0; j < Yv.cols; ++j)
                    an->grad.at(i, j) += dY.at(i, j) - std::exp(Yv.at(i, j)) * gsum;
            }
        };
    }
    return out;
}

Tensor relu(Tensor a) {
    const Mat& A = a.value();
    Mat Y(A.rows, A.cols);
    K().relu(A.data(), Y.data(), A.size());
    Tensor out = G(a).make(std::move(Y), {a}, "relu");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            const Mat& X = an->value;
            for (std::size_t i = 0; i < X.size(); ++i)
                if (X.a[i] > 0.0) an->grad.a[i] += on->grad.a[i];
        };
    }
    return out;
}

Tensor sigmoid(Tensor a) {
    const Mat& A = a.value();
    Mat Y(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) {
        const double x = A.a[i];
        if (x >= 0.0) {
            Y.a[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            Y.a[i] = e / (1.0 + e);
        }
    }
    Tensor out = G(a).make(std::move(Y), {a}, "sigmoid");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            const Mat& Yv = on->value;
            for (std::size_t i = 0; i < Yv.size(); ++i)
                an->grad.a[i] += on->grad.a[i] * Yv.a[i] * (1.0 - Yv.a[i]);
        };
    }
    return out;
}

namespace {

enum class Broadcast { same, row, scalar };

Broadcast broadcast_kind(const Mat& a, const Mat& b, const char* op) {
    if (a.same_shape(b)) return Broadcast::same;
    if (b.rows == 1 && b.cols == 1) return Broadcast::scalar;
    if (b.rows == 1 && b.cols == a.cols) return Broadcast::row;
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " are not broadcast-compatible (same shape, 1x" +
                         std::to_string(a.cols) + " row, or 1x1 scalar)");
}

} // namespace

Tensor add(Tensor a, Tensor b) {
    require_same_graph(a, b, "add");
    const Mat& A = a.value();
    const Mat& B = b.value();
    const Broadcast kind = broadcast_kind(A, B, "add");
    Mat Y(A.rows, A.cols);
    switch (kind) {
        case Broadcast::same:
            K().add(A.data(), B.data(), Y.data(), A.size());
            break;
        case Broadcast::row:
            for (std::size_t i = 0; i < A.rows; ++i)
                K().add(A.row(i), B.data(), Y.row(i), A.cols);
            break;
        case Broadcast::scalar: {
            const double s = B.at(0, 0);
            for (std::size_t i = 0; i < A.size(); ++i) Y.a[i] = A.a[i] + s;
            break;
        }
    }
    Tensor out = G(a).make(std::move(Y), {a, b}, "add");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    if (on->requires_grad) {
        on->backward = [on, an, bn, kind]() {
            const Mat& dY = on->grad;
            if (an->requires_grad) K().axpy(1.0, dY.data(), an->grad.data(), dY.size());
            if (bn->requires_grad) {
                switch (kind) {
                    case Broadcast::same:
                        K().axpy(1.0, dY.data(), bn->grad.data(), dY.size());
                        break;
                    case Broadcast::row:
                        for (std::size_t i = 0; i < dY.rows; ++i)
                            K().axpy(1.0, dY.row(i), bn->grad.data(), dY.cols);
                        break;
                    case Broadcast::scalar: {
                        double s = 0.0;
                        for (double v : dY.a) s += v;
                        bn->grad.at(0, 0) += s;
                        break;
                    }
                }
            }
        };
    }
    return out;
}

Tensor sub(Tensor a, Tensor b) {
    require_same_graph(a, b, "sub");
    const Mat& A = a.value();
    const Mat& B = b.value();
    if (!A.same_shape(B))
        throw DimensionError("sub: shapes differ, " + shape_str(A) + " vs " + shape_str(B));
    Mat Y(A.rows, A.cols);
    K().sub(A.data(), B.data(), Y.data(), A.size());
    Tensor out = G(a).make(std::move(Y), {a, b}, "sub");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    if (on->requires_grad) {
        on->backward = [on, an, bn]() {
            if (an->requires_grad) K().axpy(1.0, on->grad.data(), an->grad.data(), on->grad.size());
            if (bn->requires_grad) K().axpy(-1.0, on->grad.data(), bn->grad.data(), on->grad.size());
        };
    }
    return out;
}

Tensor mul(Tensor a, Tensor b) {
    require_same_graph(a, b, "mul");
    const Mat& A = a.value();
    const Mat& B = b.value();
    const Broadcast kind = broadcast_kind(A, B, "mul");
    Mat Y(A.rows, A.cols);
    switch (kind) {
        case Broadcast::same:
            K().mul(A.data(), B.data(), Y.data(), A.size());
            break;
        case Broadcast::row:
            for (std::size_t i = 0; i < A.rows; ++i)
                K().mul(A.row(i), B.data(), Y.row(i), A.cols);
            break;
        case Broadcast::scalar:
            K().scale(A.data(), B.at(0, 0), Y.data(), A.size());
            break;
    }
    Tensor out = G(a).make(std::move(Y), {a, b}, "mul");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    if (on->requires_grad) {
        on->backward = [on, an, bn, kind]() {
            const Mat& dY = on->grad;
            const Mat& A = an->value;
            const Mat& B = bn->value;
            switch (kind) {
                case Broadcast::same:
                    if (an->requires_grad) K().madd(dY.data(), B.data(), an->grad.data(), dY.size());
                    if (bn->requires_grad) K().madd(dY.data(), A.data(), bn->grad.data(), dY.size());
                    break;
                case Broadcast::row:
                    if (an->requires_grad)
                        for (std::size_t i = 0; i < dY.rows; ++i)
                            K().madd(dY.row(i), B.data(), an->grad.row(i), dY.cols);
                    if (bn->requires_grad)
                        for (std::size_t i = 0; i < dY.rows; ++i)
                            K().madd(dY.row(i), A.row(i), bn->grad.data(), dY.cols);
                    break;
                case Broadcast::scalar: {
                    if (an->requires_grad) K().axpy(B.at(0, 0), dY.data(), an->grad.data(), dY.size());
                    if (bn->requires_grad) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < dY.size(); ++i) s += dY.a[i] * A.a[i];
                        bn->grad.at(0, 0) += s;
                    }
                    break;
                }
            }
        };
    }
    return out;
}

Tensor scale(Tensor a, double s) {
    const Mat& A = a.value();
    Mat Y(A.rows, A.cols);
    K().scale(A.data(), s, Y.data(), A.size());
    Tensor out = G(a).make(std::move(Y), {a}, "scale");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an, s]() { K().axpy(s, on->grad.data(), an->grad.data(), on->grad.size()); };
    }
    return out;
}

Tensor add_scalar(Tensor a, double s) {
    const Mat& A = a.value();
    Mat Y(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) Y.a[i] = A.a[i] + s;
    Tensor out = G(a).make(std::move(Y), {a}, "add_scalar");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() { K().axpy(1.0, on->grad.data(), an->grad.data(), on->grad.size()); };
    }
    return out;
}

Tensor concat_cols(Tensor a, Tensor b) {
    require_same_graph(a, b, "concat_cols");
    const Mat& A = a.value();
    const Mat& B = b.value();
    if (A.rows != B.rows)
        throw DimensionError("concat_cols: row counts differ, " + shape_str(A) + " vs " + shape_str(B));
    Mat Y(A.rows, A.cols + B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        std::memcpy(Y.row(i), A.row(i), A.cols * sizeof(double));
        std::memcpy(Y.row(i) + A.cols, B.row(i), B.cols * sizeof(double));
    }
    Tensor out = G(a).make(std::move(Y), {a, b}, "concat_cols");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    if (on->requires_grad) {
        on->backward = [on, an, bn]() {
            const Mat& dY = on->grad;
            const std::size_t ac = an->value.cols;
            const std::size_t bc = bn->value.cols;
            for (std::size_t i = 0; i < dY.rows; ++i) {
                if (an->requires_grad) K().axpy(1.0, dY.row(i), an->grad.row(i), ac);
                if (bn->requires_grad) K().axpy(1.0, dY.row(i) + ac, bn->grad.row(i), bc);
            }
        };
    }
    return out;
}

Tensor concat_rows(Tensor a, Tensor b) {
    require_same_graph(a, b, "concat_rows");
    const Mat& A = a.value();
    const Mat& B = b.value();
    if (A.cols != B.cols)
        throw DimensionError("concat_rows: col counts differ, " + shape_str(A) + " vs " + shape_str(B));
    Mat Y(A.rows + B.rows, A.cols);
    std::memcpy(Y.data(), A.data(), A.size() * sizeof(double));
    std::memcpy(Y.data() + A.size(), B.data(), B.size() * sizeof(double));
    Tensor out = G(a).make(std::move(Y), {a, b}, "concat_rows");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    if (on->requires_grad) {
        on->backward = [on, an, bn]() {
            const Mat& dY = on->grad;
            if (an->requires_grad) K().axpy(1.0, dY.data(), an->grad.data(), an->grad.size());
            if (bn->requires_grad)
                K().axpy(1.0, dY.data() + an->grad.size(), bn->grad.data(), bn->grad.size());
        };
    }
    return out;
}

Tensor slice_rows(Tensor a, std::size_t r0, std::size_t r1) {
    const Mat& A = a.value();
    if (r0 > r1 || r1 > A.rows)
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                             ") out of bounds for " + shape_str(A));
    Mat Y(r1 - r0, A.cols);
    std::memcpy(Y.data(), A.row(r0), Y.size() * sizeof(double));
    Tensor out = G(a).make(std::move(Y), {a}, "slice_rows");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an, r0]() {
            K().axpy(1.0, on->grad.data(), an->grad.row(r0), on->grad.size());
        };
    }
    return out;
}

Tensor scale_rows(Tensor a, Tensor v) {
    require_same_graph(a, v, "scale_rows");
    const Mat& A = a.value();
    const Mat& V = v.value();
    if (V.rows != A.rows || V.cols != 1)
        throw DimensionError("scale_rows: scaler must be " + std::to_string(A.rows) + "x1, got " +
                             shape_str(V));
    Mat Y(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i)
        K().scale(A.row(i), V.at(i, 0), Y.row(i), A.cols);
    Tensor out = G(a).make(std::move(Y), {a, v}, "scale_rows");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    TensorNode* vn = v.node();
    if (on->requires_grad) {
        on->backward = [on, an, vn]() {
            const Mat& dY = on->grad;
            const Mat& A = an->value;
            const Mat& V = vn->value;
            for (std::size_t i = 0; i < dY.rows; ++i) {
                if (an->requires_grad) K().axpy(V.at(i, 0), dY.row(i), an->grad.row(i), dY.cols);
                if (vn->requires_grad) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < dY.cols; ++j) s += dY.at(i, j) * A.at(i, j);
                    vn->grad.at(i, 0) += s;
                }
            }
        };
    }
    return out;
}

Tensor cumsum_rows(Tensor a) {
    const Mat& A = a.value();
    Mat Y(A.rows, A.cols);
    if (A.rows > 0) {
        std::memcpy(Y.row(0), A.row(0), A.cols * sizeof(double));
        for (std::size_t i = 1; i < A.rows; ++i)
            K().add(Y.row(i - 1), A.row(i), Y.row(i), A.cols);
    }
    Tensor out = G(a).make(std::move(Y), {a}, "cumsum_rows");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            const Mat& dY = on->grad;
            Mat suffix(1, dY.cols);
            for (std::size_t i = dY.rows; i-- > 0;) {
                K().add(suffix.data(), dY.row(i), suffix.data(), dY.cols);
                K().axpy(1.0, suffix.data(), an->grad.row(i), dY.cols);
            }
        };
    }
    return out;
}

Tensor row_sums(Tensor a) {
    const Mat& A = a.value();
    Mat Y(A.rows, 1);
    for (std::size_t i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols; ++j) s += A.at(i, j);
        Y.at(i, 0) = s;
    }
    Tensor out = G(a).make(std::move(Y), {a}, "row_sums");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            for (std::size_t i = 0; i < an->grad.rows; ++i) {
                const double g = on->grad.at(i, 0);
                for (std::size_t j = 0; j < an->grad.cols; ++j) an->grad.at(i, j) += g;
            }
        };
    }
    return out;
}

Tensor sum(Tensor a) {
    const Mat& A = a.value();
    double s = 0.0;
    for (double v : A.a) s += v;
    Mat Y(1, 1);
    Y.at(0, 0) = s;
    Tensor out = G(a).make(std::move(Y), {a}, "sum");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        on->backward = [on, an]() {
            const double g = on->grad.at(0, 0);
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad.a[i] += g;
        };
    }
    return out;
}

Tensor dropout(Tensor a, double rate, Mode mode, RngStream& rng) {
    if (rate >= 1.0 || rate < 0.0)
        throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    if (mode == Mode::eval || rate == 0.0) return a;
    const Mat& A = a.value();
    Mat mask(A.rows, A.cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.a[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    Mat Y(A.rows, A.cols);
    K().mul(A.data(), mask.data(), Y.data(), A.size());
    Tensor out = G(a).make(std::move(Y), {a}, "dropout");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        auto m = std::make_shared<Mat>(std::move(mask));
        on->backward = [on, an, m]() {
            K().madd(on->grad.data(), m->data(), an->grad.data(), on->grad.size());
        };
    }
    return out;
}

Tensor embed_rows(Tensor table, const std::vector<int>& ids) {
    const Mat& T = table.value();
    Mat Y(ids.size(), T.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= T.rows)
            throw DataError("embed_rows: id " + std::to_string(ids[i]) + " out of range for table " +
                            shape_str(T));
        std::memcpy(Y.row(i), T.row(ids[i]), T.cols * sizeof(double));
    }
    Tensor out = G(table).make(std::move(Y), {table}, "embed_rows");
    TensorNode* on = out.node();
    TensorNode* tn = table.node();
    if (on->requires_grad) {
        auto idv = std::make_shared<std::vector<int>>(ids);
        on->backward = [on, tn, idv]() {
            for (std::size_t i = 0; i < idv->size(); ++i)
                K().axpy(1.0, on->grad.row(i), tn->grad.row((*idv)[i]), on->grad.cols);
        };
    }
    return out;
}

Tensor pick_cols(Tensor a, const std::vector<int>& ids) {
    const Mat& A = a.value();
    if (ids.size() != A.rows)
        throw DimensionError("pick_cols: need one index per row of " + shape_str(A) + ", got " +
                             std::to_string(ids.size()));
    Mat Y(A.rows, 1);
    for (std::size_t i = 0; i < A.rows; ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= A.cols)
            throw DataError("pick_cols: column " + std::to_string(ids[i]) + " out of range for " +
                            shape_str(A));
        Y.at(i, 0) = A.at(i, ids[i]);
    }
    Tensor out = G(a).make(std::move(Y), {a}, "pick_cols");
    TensorNode* on = out.node();
    TensorNode* an = a.node();
    if (on->requires_grad) {
        auto idv = std::make_shared<std::vector<int>>(ids);
        on->backward = [on, an, idv]() {
            for (std::size_t i = 0; i < idv->size(); ++i)
                an->grad.at(i, (*idv)[i]) += on->grad.at(i, 0);
        };
    }
    return out;
}

Tensor layer_norm_rows(Tensor x, Tensor gamma, Tensor beta, double eps) {
    require_same_graph(x, gamma, "layer_norm_rows");
    require_same_graph(x, beta, "layer_norm_rows");
    const Mat& X = x.value();
    const Mat& Gm = gamma.value();
    const Mat& Bt = beta.value();
    if (Gm.rows != 1 || Gm.cols != X.cols || Bt.rows != 1 || Bt.cols != X.cols)
        throw DimensionError("layer_norm_rows: gamma/beta must be 1x" + std::to_string(X.cols));
    const std::size_t d = X.cols;
    Mat Y(X.rows, d);
    auto xhat = std::make_shared<Mat>(X.rows, d);
    auto inv_std = std::make_shared<Mat>(X.rows, 1);
    for (std::size_t i = 0; i < X.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += X.at(i, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = X.at(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std->at(i, 0) = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (X.at(i, j) - mean) * is;
            xhat->at(i, j) = xh;
            Y.at(i, j) = xh * Gm.at(0, j) + Bt.at(0, j);
        }
    }
    Tensor out = G(x).make(std::move(Y), {x, gamma, beta}, "layer_norm_rows");
    TensorNode* on = out.node();
    TensorNode* xn = x.node();
    TensorNode* gn = gamma.node();
    TensorNode* bn = beta.node();
    if (on->requires_grad) {
        on->backward = [on, xn, gn, bn, xhat, inv_std]() {
            const Mat& dY = on->grad;
            const Mat& Gm = gn->value;
            const std::size_t d = dY.cols;
            for (std::size_t i = 0; i < dY.rows; ++i) {
                double sum_dxhat = 0.0;
                double sum_dxhat_xhat = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = dY.at(i, j) * Gm.at(0, j);
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xhat->at(i, j);
                }
                const double is = inv_std->at(i, 0);
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = dY.at(i, j) * Gm.at(0, j);
                    if (xn->requires_grad)
                        xn->grad.at(i, j) +=
                            is * (dxh - inv_d * sum_dxhat - xhat->at(i, j) * inv_d * sum_dxhat_xhat);
                    if (gn->requires_grad) gn->grad.at(0, j) += dY.at(i, j) * xhat->at(i, j);
                    if (bn->requires_grad) bn->grad.at(0, j) += dY.at(i, j);
                }
            }
        };
    }
    return out;
}

// ---- grad_check ------------------------------------------------------------

GradCheckReport grad_check(ParameterStore& params,
                           const std::function<Tensor(Graph&)>& builder, double eps) {
    auto eval_loss = [&]() {
        Graph g(false);
        Tensor loss = builder(g);
        if (loss.rows() != 1 || loss.cols() != 1)
            throw ContractError("grad_check: builder must produce a scalar loss");
        return loss.value().at(0, 0);
    };

    const double v1 = eval_loss();
    const double v2 = eval_loss();
    if (std::memcmp(&v1, &v2, sizeof(double)) != 0)
        throw ContractError("grad_check: builder is non-deterministic (two evaluations differ)");

    params.zero_grads();
    {
        Graph g(true);
        Tensor loss = builder(g);
        g.backward(loss);
    }

    GradCheckReport report;
    for (Param* p : params.all()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.a[i];
            p->value.a[i] = saved + eps;
            const double fp = eval_loss();
            p->value.a[i] = saved - eps;
            const double fm = eval_loss();
            p->value.a[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = p->grad.a[i];
            const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(analytic - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p->path;
                report.worst_index = i;
            }
        }
    }
    return report;
}

} // namespace ehat
