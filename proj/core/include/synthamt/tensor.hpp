#pragma once

#include "synthamt/rng.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace synthamt::nn {

#ifdef SYNTHAMT_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

// Dense row-major matrix; everything in the model is 2-D (scalars are 1x1).
struct Mat {
    int rows = 0, cols = 0;
    std::vector<Real> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(size_t(r) * size_t(c), Real(0)) {}

    Real& operator()(int i, int j) { return d[size_t(i) * cols + j]; }
    Real operator()(int i, int j) const { return d[size_t(i) * cols + j]; }
    size_t size() const { return d.size(); }

    static Mat scalar(Real v) {
        Mat m(1, 1);
        m.d[0] = v;
        return m;
    }
};

// C += A * B and friends, via Eigen maps (single-threaded, deterministic)
void gemm_acc(Mat& c, const Mat& a, const Mat& b, bool trans_a = false, bool trans_b = false);

class Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the dynamically built computation graph. backprop accumulates
// this node's grad into its parents' grads.
class Node {
public:
    Mat val;
    Mat grad; // allocated lazily, same shape as val
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.rows != val.rows || grad.cols != val.cols) grad = Mat(val.rows, val.cols);
    }
    Real scalar() const { return val.d[0]; }
};

// While a guard is alive, new leaves/ops do not record gradients.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
};
bool grad_enabled();

NodePtr leaf(Mat v, bool requires_grad = false);
NodePtr constant(Mat v);

NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr add(const NodePtr& a, const NodePtr& b);          // same shape
NodePtr add_rowvec(const NodePtr& a, const NodePtr& bias); // bias is 1 x cols
NodePtr scale(const NodePtr& a, Real c);
NodePtr transpose(const NodePtr& a);
NodePtr slice_cols(const NodePtr& a, int c0, int c1);
NodePtr slice_rows(const NodePtr& a, int r0, int r1);
NodePtr concat_cols(const std::vector<NodePtr>& parts);
NodePtr reshape(const NodePtr& a, int rows, int cols); // row-major view copy

// Row-wise softmax; causal masks column j > row i (square input).
NodePtr softmax_rows(const NodePtr& a, bool causal = false);
NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias,
                   Real eps = Real(1e-5));
NodePtr gelu(const NodePtr& a);                 // exact erf form
NodePtr leaky_relu(const NodePtr& a, Real slope);
NodePtr sigmoid(const NodePtr& a);
NodePtr dropout(const NodePtr& a, double rate, Rng& rng);

// rows of `table` gathered by id
NodePtr embed_rows(const std::vector<int>& ids, const NodePtr& table);

// mean over positions with weight > 0 of -log softmax(logits)[target]
NodePtr cross_entropy_logits(const NodePtr& logits, const std::vector<int>& targets,
                             const std::vector<Real>& weights);

// -t log p - (1-t) log(1-p) on a 1x1 probability, clamped to [1e-7, 1-1e-7]
NodePtr bce_loss(const NodePtr& p, Real target);

NodePtr add_scaled(const NodePtr& a, const NodePtr& b, Real cb); // a + cb * b, 1x1 or same shape
NodePtr mean_scalars(const std::vector<NodePtr>& xs);

NodePtr detach(const NodePtr& a);

// reverse-mode sweep from a 1x1 loss
void backward(const NodePtr& loss);

// standalone BCE with the same clamping, for reports and tests
double bce(double target, double p);

} // namespace synthamt::nn
