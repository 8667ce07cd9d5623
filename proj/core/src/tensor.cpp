#include "synthamt/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace synthamt::nn {

namespace {

using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap map(const Mat& m) { return CMap(m.d.data(), m.rows, m.cols); }
Map map(Mat& m) { return Map(m.d.data(), m.rows, m.cols); }

thread_local int g_no_grad_depth = 0;

NodePtr make_node(Mat val, std::vector<NodePtr> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p->requires_grad) n->requires_grad = true;
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backprop = std::move(backprop);
        }
    }
    return n;
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

} // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

void gemm_acc(Mat& c, const Mat& a, const Mat& b, bool trans_a, bool trans_b) {
    auto am = map(a), bm = map(b);
    auto cm = map(c);
    if (!trans_a && !trans_b) cm.noalias() += am * bm;
    else if (trans_a && !trans_b) cm.noalias() += am.transpose() * bm;
    else if (!trans_a && trans_b) cm.noalias() += am * bm.transpose();
    else cm.noalias() += am.transpose() * bm.transpose();
}

NodePtr leaf(Mat v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

NodePtr constant(Mat v) { return leaf(std::move(v), false); }

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    if (a->val.cols != b->val.rows) throw std::invalid_argument("matmul: inner dim mismatch");
    Mat out(a->val.rows, b->val.cols);
    gemm_acc(out, a->val, b->val);
    return make_node(std::move(out), {a, b}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) {
            a.ensure_grad();
            gemm_acc(a.grad, n.grad, b.val, false, true);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            gemm_acc(b.grad, a.val, n.grad, true, false);
        }
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->val, b->val, "add");
    Mat out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] += b->val.d[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = *n.parents[size_t(k)];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) p.grad.d[i] += n.grad.d[i];
        }
    });
}

NodePtr add_rowvec(const NodePtr& a, const NodePtr& bias) {
    if (bias->val.rows != 1 || bias->val.cols != a->val.cols)
        throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
    Mat out = a->val;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) += bias->val(0, j);
    return make_node(std::move(out), {a, bias}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a.grad.d[i] += n.grad.d[i];
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) b.grad(0, j) += n.grad(i, j);
        }
    });
}

NodePtr scale(const NodePtr& a, Real c) {
    Mat out = a->val;
    for (auto& v : out.d) v *= c;
    return make_node(std::move(out), {a}, [c](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.d[i] += c * n.grad.d[i];
    });
}

NodePtr transpose(const NodePtr& a) {
    Mat out(a->val.cols, a->val.rows);
    for (int i = 0; i < a->val.rows; ++i)
        for (int j = 0; j < a->val.cols; ++j) out(j, i) = a->val(i, j);
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) a.grad(j, i) += n.grad(i, j);
    });
}

NodePtr slice_cols(const NodePtr& a, int c0, int c1) {
    if (c0 < 0 || c1 > a->val.cols || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range");
    Mat out(a->val.rows, c1 - c0);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) = a->val(i, c0 + j);
    return make_node(std::move(out), {a}, [c0](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) a.grad(i, c0 + j) += n.grad(i, j);
    });
}

NodePtr slice_rows(const NodePtr& a, int r0, int r1) {
    if (r0 < 0 || r1 > a->val.rows || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range");
    Mat out(r1 - r0, a->val.cols);
    std::copy_n(a->val.d.begin() + size_t(r0) * a->val.cols, out.size(), out.d.begin());
    return make_node(std::move(out), {a}, [r0](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        size_t off = size_t(r0) * a.grad.cols;
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.d[off + i] += n.grad.d[i];
    });
}

NodePtr concat_cols(const std::vector<NodePtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int rows = parts[0]->val.rows, cols = 0;
    for (const auto& p : parts) {
        if (p->val.rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p->val.cols;
    }
    Mat out(rows, cols);
    int at = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p->val.cols; ++j) out(i, at + j) = p->val(i, j);
        at += p->val.cols;
    }
    return make_node(std::move(out), parts, [](Node& n) {
        int at = 0;
        for (auto& pp : n.parents) {
            auto& p = *pp;
            if (p.requires_grad) {
                p.ensure_grad();
                for (int i = 0; i < p.grad.rows; ++i)
                    for (int j = 0; j < p.grad.cols; ++j) p.grad(i, j) += n.grad(i, at + j);
            }
            at += p.val.cols;
        }
    });
}

NodePtr reshape(const NodePtr& a, int rows, int cols) {
    if (size_t(rows) * size_t(cols) != a->val.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Mat out(rows, cols);
    out.d = a->val.d;
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.d[i] += n.grad.d[i];
    });
}

NodePtr softmax_rows(const NodePtr& a, bool causal) {
    if (causal && a->val.rows != a->val.cols)
        throw std::invalid_argument("softmax_rows: causal mask needs a square matrix");
    Mat out = a->val;
    for (int i = 0; i < out.rows; ++i) {
        int valid = causal ? i + 1 : out.cols;
        Real m = out(i, 0);
        for (int j = 1; j < valid; ++j) m = std::max(m, out(i, j));
        Real sum = 0;
        for (int j = 0; j < valid; ++j) {
            out(i, j) = std::exp(out(i, j) - m);
            sum += out(i, j);
        }
        for (int j = 0; j < valid; ++j) out(i, j) /= sum;
        for (int j = valid; j < out.cols; ++j) out(i, j) = 0;
    }
    return make_node(std::move(out), {a}, [causal](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (int i = 0; i < n.val.rows; ++i) {
            int valid = causal ? i + 1 : n.val.cols;
            Real dot = 0;
            for (int j = 0; j < valid; ++j) dot += n.grad(i, j) * n.val(i, j);
            for (int j = 0; j < valid; ++j)
                a.grad(i, j) += n.val(i, j) * (n.grad(i, j) - dot);
        }
    });
}

NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias, Real eps) {
    int R = x->val.rows, C = x->val.cols;
    if (gain->val.cols != C || bias->val.cols != C || gain->val.rows != 1 || bias->val.rows != 1)
        throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
    Mat out(R, C);
    auto stats = std::make_shared<Mat>(R, 2); // mean, inv std
    for (int i = 0; i < R; ++i) {
        Real mu = 0;
        for (int j = 0; j < C; ++j) mu += x->val(i, j);
        mu /= Real(C);
        Real var = 0;
        for (int j = 0; j < C; ++j) {
            Real d = x->val(i, j) - mu;
            var += d * d;
        }
        var /= Real(C);
        Real inv = Real(1) / std::sqrt(var + eps);
        (*stats)(i, 0) = mu;
        (*stats)(i, 1) = inv;
        for (int j = 0; j < C; ++j)
            out(i, j) = (x->val(i, j) - mu) * inv * gain->val(0, j) + bias->val(0, j);
    }
    return make_node(std::move(out), {x, gain, bias}, [stats](Node& n) {
        auto& x = *n.parents[0];
        auto& g = *n.parents[1];
        auto& b = *n.parents[2];
        int R = x.val.rows, C = x.val.cols;
        for (int i = 0; i < R; ++i) {
            Real mu = (*stats)(i, 0), inv = (*stats)(i, 1);
            if (g.requires_grad || b.requires_grad) {
                if (g.requires_grad) g.ensure_grad();
                if (b.requires_grad) b.ensure_grad();
                for (int j = 0; j < C; ++j) {
                    Real xhat = (x.val(i, j) - mu) * inv;
                    if (g.requires_grad) g.grad(0, j) += n.grad(i, j) * xhat;
                    if (b.requires_grad) b.grad(0, j) += n.grad(i, j);
                }
            }
            if (x.requires_grad) {
                x.ensure_grad();
                Real sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (int j = 0; j < C; ++j) {
                    Real xhat = (x.val(i, j) - mu) * inv;
                    Real dxhat = n.grad(i, j) * g.val(0, j);
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                for (int j = 0; j < C; ++j) {
                    Real xhat = (x.val(i, j) - mu) * inv;
                    Real dxhat = n.grad(i, j) * g.val(0, j);
                    x.grad(i, j) += inv * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / Real(C));
                }
            }
        }
    });
}

NodePtr gelu(const NodePtr& a) {
    Mat out = a->val;
    for (auto& v : out.d) {
        Real phi = Real(0.5) * (Real(1) + std::erf(v / Real(std::numbers::sqrt2)));
        v = v * phi;
    }
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        const Real inv_sqrt2pi = Real(1) / std::sqrt(Real(2) * Real(std::numbers::pi));
        for (size_t i = 0; i < n.grad.size(); ++i) {
            Real x = a.val.d[i];
            Real phi = Real(0.5) * (Real(1) + std::erf(x / Real(std::numbers::sqrt2)));
            Real pdf = inv_sqrt2pi * std::exp(Real(-0.5) * x * x);
            a.grad.d[i] += n.grad.d[i] * (phi + x * pdf);
        }
    });
}

NodePtr leaky_relu(const NodePtr& a, Real slope) {
    Mat out = a->val;
    for (auto& v : out.d)
        if (v < 0) v *= slope;
    return make_node(std::move(out), {a}, [slope](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            a.grad.d[i] += n.grad.d[i] * (a.val.d[i] < 0 ? slope : Real(1));
    });
}

NodePtr sigmoid(const NodePtr& a) {
    Mat out = a->val;
    for (auto& v : out.d) v = Real(1) / (Real(1) + std::exp(-v));
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            Real s = n.val.d[i];
            a.grad.d[i] += n.grad.d[i] * s * (Real(1) - s);
        }
    });
}

NodePtr dropout(const NodePtr& a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    auto mask = std::make_shared<std::vector<Real>>(a->val.size());
    Real keep_inv = Real(1.0 / (1.0 - rate));
    Mat out = a->val;
    for (size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = rng.bernoulli(rate) ? Real(0) : keep_inv;
        out.d[i] *= (*mask)[i];
    }
    return make_node(std::move(out), {a}, [mask](Node& n) {
        auto& a = *n.parents[0];
        if (!a.requires_grad) return;
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.d[i] += n.grad.d[i] * (*mask)[i];
    });
}

NodePtr embed_rows(const std::vector<int>& ids, const NodePtr& table) {
    Mat out(int(ids.size()), table->val.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table->val.rows)
            throw std::invalid_argument("embed_rows: id out of range");
        std::copy_n(table->val.d.begin() + size_t(ids[i]) * table->val.cols,
                    size_t(table->val.cols), out.d.begin() + i * size_t(table->val.cols));
    }
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return make_node(std::move(out), {table}, [ids_copy](Node& n) {
        auto& t = *n.parents[0];
        if (!t.requires_grad) return;
        t.ensure_grad();
        for (size_t i = 0; i < ids_copy->size(); ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                t.grad((*ids_copy)[i], j) += n.grad(int(i), j);
    });
}

NodePtr cross_entropy_logits(const NodePtr& logits, const std::vector<int>& targets,
                             const std::vector<Real>& weights) {
    int R = logits->val.rows, C = logits->val.cols;
    if (int(targets.size()) != R || int(weights.size()) != R)
        throw std::invalid_argument("cross_entropy_logits: targets/weights must have one entry per row");
    auto probs = std::make_shared<Mat>(R, C);
    Real total_w = 0, loss = 0;
    for (int i = 0; i < R; ++i) total_w += (weights[size_t(i)] > 0 ? weights[size_t(i)] : Real(0));
    if (total_w <= 0) total_w = 1;
    for (int i = 0; i < R; ++i) {
        Real m = logits->val(i, 0);
        for (int j = 1; j < C; ++j) m = std::max(m, logits->val(i, j));
        Real sum = 0;
        for (int j = 0; j < C; ++j) {
            (*probs)(i, j) = std::exp(logits->val(i, j) - m);
            sum += (*probs)(i, j);
        }
        for (int j = 0; j < C; ++j) (*probs)(i, j) /= sum;
        Real w = weights[size_t(i)] > 0 ? weights[size_t(i)] : Real(0);
        if (w > 0) loss += -w * std::log(std::max((*probs)(i, targets[size_t(i)]), Real(1e-30)));
    }
    Mat out = Mat::scalar(loss / total_w);
    auto tgt = std::make_shared<std::vector<int>>(targets);
    auto w = std::make_shared<std::vector<Real>>(weights);
    return make_node(std::move(out), {logits}, [probs, tgt, w, total_w](Node& n) {
        auto& l = *n.parents[0];
        if (!l.requires_grad) return;
        l.ensure_grad();
        Real g = n.grad.d[0] / total_w;
        for (int i = 0; i < l.val.rows; ++i) {
            Real wi = (*w)[size_t(i)] > 0 ? (*w)[size_t(i)] : Real(0);
            if (wi <= 0) continue; // padding rows get exactly zero gradient
            for (int j = 0; j < l.val.cols; ++j) {
                Real p = (*probs)(i, j);
                l.grad(i, j) += g * wi * (p - (j == (*tgt)[size_t(i)] ? Real(1) : Real(0)));
            }
        }
    });
}

double bce(double target, double p) {
    double pc = std::clamp(p, 1e-7, 1.0 - 1e-7);
    return -target * std::log(pc) - (1.0 - target) * std::log(1.0 - pc);
}

NodePtr bce_loss(const NodePtr& p, Real target) {
    if (p->val.size() != 1) throw std::invalid_argument("bce_loss: expects a 1x1 probability");
    const Real eps = Real(1e-7);
    Real pc = std::clamp(p->val.d[0], eps, Real(1) - eps);
    Mat out = Mat::scalar(-target * std::log(pc) - (Real(1) - target) * std::log(Real(1) - pc));
    return make_node(std::move(out), {p}, [target, eps](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        Real raw = p.val.d[0];
        if (raw <= eps || raw >= Real(1) - eps) return; // clamped region
        p.grad.d[0] += n.grad.d[0] * (raw - target) / (raw * (Real(1) - raw));
    });
}

NodePtr add_scaled(const NodePtr& a, const NodePtr& b, Real cb) {
    check_same_shape(a->val, b->val, "add_scaled");
    Mat out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out.d[i] += cb * b->val.d[i];
    return make_node(std::move(out), {a, b}, [cb](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a.grad.d[i] += n.grad.d[i];
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b.grad.d[i] += cb * n.grad.d[i];
        }
    });
}

NodePtr mean_scalars(const std::vector<NodePtr>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean_scalars: empty");
    Real sum = 0;
    for (const auto& x : xs) {
        if (x->val.size() != 1) throw std::invalid_argument("mean_scalars: non-scalar input");
        sum += x->val.d[0];
    }
    Real inv = Real(1) / Real(xs.size());
    Mat out = Mat::scalar(sum * inv);
    return make_node(std::move(out), xs, [inv](Node& n) {
        for (auto& pp : n.parents) {
            if (!pp->requires_grad) continue;
            pp->ensure_grad();
            pp->grad.d[0] += n.grad.d[0] * inv;
        }
    });
}

NodePtr detach(const NodePtr& a) { return leaf(a->val, false); }

void backward(const NodePtr& loss) {
    if (loss->val.size() != 1) throw std::invalid_argument("backward: loss must be 1x1");
    if (!loss->requires_grad) return;

    // iterative post-order topo sort
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad.d[0] = 1;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

} // namespace synthamt::nn
