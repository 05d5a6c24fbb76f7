#include "veritree/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "veritree/errors.hpp"

namespace veritree::ad {

using detail::GradSink;
using detail::NodePtr;
using detail::TensorNode;

namespace {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() > 2)
        throw ShapeError(std::string(op) + ": expected rank <= 2, got shape " +
                         shape_str(t.shape()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

}  // namespace

Tensor make_op_output(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                      std::function<void(TensorNode&, const std::vector<double>&, const GradSink&)>
                          backprop) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    bool needs = false;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) {
        needs = needs || in.requires_grad();
        node->parents.push_back(in.node_ptr());
    }
    node->requires_grad = needs;
    if (needs) node->backprop = std::move(backprop);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const std::size_t n = shape_size(shape);
    if (n == 0 || shape.empty()) throw ShapeError("tensor shape must be non-empty and positive");
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values.assign(n, value);
    return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
    if (shape.empty()) throw ShapeError("tensor shape must be non-empty");
    if (shape_size(shape) != values.size())
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_values({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return from_values({1, n}, std::move(values));
}

const Shape& Tensor::shape() const {
    if (!node_) throw DataError("use of an undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size() const { return shape_size(shape()); }

std::size_t Tensor::rows() const {
    const Shape& s = shape();
    return s.size() == 1 ? 1 : s[0];
}

std::size_t Tensor::cols() const {
    const Shape& s = shape();
    return s.size() == 1 ? s[0] : s[1];
}

const std::vector<double>& Tensor::values() const {
    if (!node_) throw DataError("use of an undefined tensor");
    return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
    if (!node_) throw DataError("use of an undefined tensor");
    return node_->values;
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
    return values()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    check_rank2(*this, "at");
    if (r >= rows() || c >= cols())
        throw ShapeError("at(" + std::to_string(r) + ", " + std::to_string(c) +
                         "): out of range for shape " + shape_str(shape()));
    return values()[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!node_) throw DataError("use of an undefined tensor");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad())
        throw DataError("tensor has no accumulated gradient (call backward first)");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

// ---------------------------------------------------------------------------
// Element-wise ops

namespace {

void require_same_view(const char* op, const Tensor& a, const Tensor& b) {
    check_rank2(a, op);
    check_rank2(b, op);
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

Shape view_shape(const Tensor& t) { return Shape{t.rows(), t.cols()}; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_view("add", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_op_output(view_shape(a), std::move(out), {a, b},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              auto& gb = sink(*self.parents[1]);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  ga[i] += g[i];
                                  gb[i] += g[i];
                              }
                          });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_view("sub", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_op_output(view_shape(a), std::move(out), {a, b},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              auto& gb = sink(*self.parents[1]);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  ga[i] += g[i];
                                  gb[i] -= g[i];
                              }
                          });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_view("mul", a, b);
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_op_output(view_shape(a), std::move(out), {a, b},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              auto& gb = sink(*self.parents[1]);
                              const auto& av = self.parents[0]->values;
                              const auto& bv = self.parents[1]->values;
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  ga[i] += g[i] * bv[i];
                                  gb[i] += g[i] * av[i];
                              }
                          });
}

Tensor abs(const Tensor& a) {
    check_rank2(a, "abs");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(av[i]);
    return make_op_output(view_shape(a), std::move(out), {a},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              const auto& av = self.parents[0]->values;
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const double s = av[i] > 0 ? 1.0 : (av[i] < 0 ? -1.0 : 0.0);
                                  ga[i] += g[i] * s;
                              }
                          });
}

Tensor relu(const Tensor& a) {
    check_rank2(a, "relu");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0 ? av[i] : 0.0;
    return make_op_output(view_shape(a), std::move(out), {a},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              const auto& av = self.parents[0]->values;
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  if (av[i] > 0) ga[i] += g[i];
                          });
}

Tensor tanh(const Tensor& a) {
    check_rank2(a, "tanh");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
    return make_op_output(view_shape(a), std::move(out), {a},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const double y = self.values[i];
                                  ga[i] += g[i] * (1.0 - y * y);
                              }
                          });
}

Tensor sigmoid(const Tensor& a) {
    check_rank2(a, "sigmoid");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
    return make_op_output(view_shape(a), std::move(out), {a},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const double y = self.values[i];
                                  ga[i] += g[i] * y * (1.0 - y);
                              }
                          });
}

Tensor scale(const Tensor& a, double factor) {
    check_rank2(a, "scale");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
    return make_op_output(view_shape(a), std::move(out), {a},
                          [factor](TensorNode& self, const std::vector<double>& g,
                                   const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
                          });
}

namespace {
constexpr double kLogFloor = 1e-12;  // probability floor for cross-entropy
}

Tensor log(const Tensor& a) {
    check_rank2(a, "log");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(av[i], kLogFloor));
    return make_op_output(view_shape(a), std::move(out), {a},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              const auto& av = self.parents[0]->values;
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  if (av[i] > kLogFloor) ga[i] += g[i] / av[i];
                          });
}

Tensor sum(const Tensor& a) {
    check_rank2(a, "sum");
    double total = 0.0;
    for (double v : a.values()) total += v;
    return make_op_output({1, 1}, {total}, {a},
                          [](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
                              auto& ga = sink(*self.parents[0]);
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                          });
}

// ---------------------------------------------------------------------------
// Structural ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2) shape_fail("matmul", a, b);
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    return make_op_output(
        {m, n}, std::move(out), {a, b},
        [m, k, n](TensorNode& self, const std::vector<double>& g, const GradSink& sink) {
            auto& ga = sink(*self.parents[0]);
            auto& gb = sink(*self.parents[1]);
            const auto& av = self.parents[0]->values;
            const auto& bv = self.parents[1]->values;
            // dA = g . B^T ; dB = A^T . g
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
                    ga[i * k + p] += acc;
                }
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) acc += av[i * k + p] * g[i * n + j];
                    gb[p * n + j] += acc;
                }
        });
}

Tensor transpose(const Tensor& t) {
    check_rank2(t, "transpose");
    const std::size_t r = t.rows(), c = t.cols();
    std::vector<double> out(r * c);
    const auto& tv = t.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = tv[i * c + j];
    return make_op_output({c, r}, std::move(out), {t},
                          [r, c](TensorNode& self, const std::vector<double>& g,
                                 const GradSink& sink) {
                              auto& gt = sink(*self.parents[0]);
                              for (std::size_t i = 0; i < r; ++i)
                                  for (std::size_t j = 0; j < c; ++j)
                                      gt[i * c + j] += g[j * r + i];
                          });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
    for (const auto& p : parts) check_rank2(p, "concat");

    std::size_t rows = parts[0].rows(), cols = parts[0].cols();
    std::vector<std::size_t> extents;
    extents.reserve(parts.size());
    if (axis == 0) {
        rows = 0;
        for (const auto& p : parts) {
            if (p.cols() != cols) shape_fail("concat", parts[0], p);
            extents.push_back(p.rows());
            rows += p.rows();
        }
    } else {
        cols = 0;
        for (const auto& p : parts) {
            if (p.rows() != rows) shape_fail("concat", parts[0], p);
            extents.push_back(p.cols());
            cols += p.cols();
        }
    }

    std::vector<double> out(rows * cols);
    if (axis == 0) {
        std::size_t row0 = 0;
        for (const auto& p : parts) {
            std::copy(p.values().begin(), p.values().end(), out.begin() + row0 * cols);
            row0 += p.rows();
        }
    } else {
        std::size_t col0 = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p.cols();
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(p.values().begin() + i * pc, p.values().begin() + (i + 1) * pc,
                          out.begin() + i * cols + col0);
            col0 += pc;
        }
    }

    return make_op_output(
        {rows, cols}, std::move(out), parts,
        [axis, extents, rows, cols](TensorNode& self, const std::vector<double>& g,
                                    const GradSink& sink) {
            std::size_t offset = 0;
            for (std::size_t p = 0; p < self.parents.size(); ++p) {
                auto& gp = sink(*self.parents[p]);
                if (axis == 0) {
                    const std::size_t pr = extents[p];
                    for (std::size_t i = 0; i < pr * cols; ++i) gp[i] += g[offset * cols + i];
                    offset += pr;
                } else {
                    const std::size_t pc = extents[p];
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < pc; ++j)
                            gp[i * pc + j] += g[i * cols + offset + j];
                    offset += pc;
                }
            }
        });
}

std::vector<Tensor> split(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& sizes) {
    check_rank2(t, "split");
    if (axis > 1) throw ShapeError("split: axis must be 0 or 1");
    const std::size_t rows = t.rows(), cols = t.cols();
    std::size_t total = 0;
    for (auto s : sizes) {
        if (s == 0) throw ShapeError("split: zero-sized piece");
        total += s;
    }
    if (total != (axis == 0 ? rows : cols))
        throw ShapeError("split: piece sizes sum to " + std::to_string(total) +
                         ", axis extent is " + std::to_string(axis == 0 ? rows : cols));

    std::vector<Tensor> out;
    out.reserve(sizes.size());
    std::size_t offset = 0;
    for (std::size_t piece = 0; piece < sizes.size(); ++piece) {
        const std::size_t extent = sizes[piece];
        std::vector<double> vals;
        Shape shape;
        if (axis == 0) {
            shape = {extent, cols};
            vals.assign(t.values().begin() + offset * cols,
                        t.values().begin() + (offset + extent) * cols);
        } else {
            shape = {rows, extent};
            vals.resize(rows * extent);
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(t.values().begin() + i * cols + offset,
                          t.values().begin() + i * cols + offset + extent,
                          vals.begin() + i * extent);
        }
        const std::size_t piece_offset = offset;
        out.push_back(make_op_output(
            std::move(shape), std::move(vals), {t},
            [axis, piece_offset, extent, rows, cols](TensorNode& self,
                                                     const std::vector<double>& g,
                                                     const GradSink& sink) {
                auto& gt = sink(*self.parents[0]);
                if (axis == 0) {
                    for (std::size_t i = 0; i < extent * cols; ++i)
                        gt[piece_offset * cols + i] += g[i];
                } else {
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < extent; ++j)
                            gt[i * cols + piece_offset + j] += g[i * extent + j];
                }
            }));
        offset += extent;
    }
    return out;
}

Tensor row_slice(const Tensor& t, std::size_t index) {
    check_rank2(t, "row_slice");
    const std::size_t rows = t.rows(), cols = t.cols();
    if (index >= rows)
        throw ShapeError("row_slice: row " + std::to_string(index) + " out of range for shape " +
                         shape_str(t.shape()));
    std::vector<double> vals(t.values().begin() + index * cols,
                             t.values().begin() + (index + 1) * cols);
    return make_op_output({1, cols}, std::move(vals), {t},
                          [index, cols](TensorNode& self, const std::vector<double>& g,
                                        const GradSink& sink) {
                              auto& gt = sink(*self.parents[0]);
                              for (std::size_t j = 0; j < cols; ++j) gt[index * cols + j] += g[j];
                          });
}

Tensor max_pool_positions(const Tensor& t, const Mask& mask) {
    check_rank2(t, "max_pool_positions");
    const std::size_t rows = t.rows(), cols = t.cols();
    if (mask.size() != rows)
        throw ShapeError("max_pool_positions: mask length " + std::to_string(mask.size()) +
                         " does not match row count " + std::to_string(rows));
    bool any = false;
    for (auto m : mask) any = any || (m != 0);
    if (!any) throw DataError("max_pool_positions: every position is masked");

    std::vector<double> out(cols, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> argmax(cols, 0);
    const auto& tv = t.values();
    for (std::size_t i = 0; i < rows; ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < cols; ++j) {
            if (tv[i * cols + j] > out[j]) {
                out[j] = tv[i * cols + j];
                argmax[j] = i;
            }
        }
    }
    return make_op_output({1, cols}, std::move(out), {t},
                          [argmax, cols](TensorNode& self, const std::vector<double>& g,
                                         const GradSink& sink) {
                              auto& gt = sink(*self.parents[0]);
                              for (std::size_t j = 0; j < cols; ++j)
                                  gt[argmax[j] * cols + j] += g[j];
                          });
}

Tensor softmax_masked(const Tensor& t, const Mask* mask) {
    check_rank2(t, "softmax");
    const std::size_t rows = t.rows(), cols = t.cols();
    if (mask && mask->size() != cols)
        throw ShapeError("softmax: mask length " + std::to_string(mask->size()) +
                         " does not match last-axis extent " + std::to_string(cols));
    if (mask) {
        bool any = false;
        for (auto m : *mask) any = any || (m != 0);
        if (!any) throw DataError("softmax: every position is masked");
    }

    std::vector<double> out(rows * cols, 0.0);
    const auto& tv = t.values();
    for (std::size_t i = 0; i < rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cols; ++j)
            if (!mask || (*mask)[j]) mx = std::max(mx, tv[i * cols + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            if (mask && !(*mask)[j]) continue;
            const double e = std::exp(tv[i * cols + j] - mx);
            out[i * cols + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] /= z;
    }

    const bool has_mask = mask != nullptr;
    const Mask mask_copy = mask ? *mask : Mask{};
    return make_op_output(
        {rows, cols}, std::move(out), {t},
        [rows, cols, has_mask, mask_copy](TensorNode& self, const std::vector<double>& g,
                                          const GradSink& sink) {
            auto& gt = sink(*self.parents[0]);
            // dx_j = y_j (g_j - sum_k g_k y_k) over unmasked positions
            for (std::size_t i = 0; i < rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j)
                    dot += g[i * cols + j] * self.values[i * cols + j];
                for (std::size_t j = 0; j < cols; ++j) {
                    if (has_mask && !mask_copy[j]) continue;
                    const double y = self.values[i * cols + j];
                    gt[i * cols + j] += y * (g[i * cols + j] - dot);
                }
            }
        });
}

Tensor add_bias(const Tensor& m, const Tensor& bias) {
    check_rank2(m, "add_bias");
    check_rank2(bias, "add_bias");
    if (bias.rows() != 1 || bias.cols() != m.cols()) shape_fail("add_bias", m, bias);
    const std::size_t rows = m.rows(), cols = m.cols();
    std::vector<double> out(rows * cols);
    const auto& mv = m.values();
    const auto& bv = bias.values();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = mv[i * cols + j] + bv[j];
    return make_op_output({rows, cols}, std::move(out), {m, bias},
                          [rows, cols](TensorNode& self, const std::vector<double>& g,
                                       const GradSink& sink) {
                              auto& gm = sink(*self.parents[0]);
                              auto& gb = sink(*self.parents[1]);
                              for (std::size_t i = 0; i < rows; ++i)
                                  for (std::size_t j = 0; j < cols; ++j) {
                                      gm[i * cols + j] += g[i * cols + j];
                                      gb[j] += g[i * cols + j];
                                  }
                          });
}

Tensor dropout(const Tensor& a, double drop_prob, Rng& rng, bool training) {
    if (drop_prob < 0.0 || drop_prob >= 1.0)
        throw ConfigError("dropout probability must lie in [0, 1)");
    if (!training || drop_prob == 0.0) return a;
    const double keep = 1.0 - drop_prob;
    std::vector<double> mask_values(a.size());
    for (auto& v : mask_values) v = rng.next_double() >= drop_prob ? 1.0 / keep : 0.0;
    return mul(a, Tensor::from_values({a.rows(), a.cols()}, std::move(mask_values)));
}

// ---------------------------------------------------------------------------
// Reverse-mode accumulation

void backward(const Tensor& loss) {
    if (!loss.defined()) throw DataError("backward: undefined loss tensor");
    if (loss.size() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));

    // Post-order over the recorded graph, descending only into subgraphs
    // that can reach a grad-requiring tensor.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (loss.node()->requires_grad) stack.push_back({loss.node(), 0});
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next_parent == 0 && visited.count(top.node)) {
            stack.pop_back();
            continue;
        }
        if (top.next_parent < top.node->parents.size()) {
            TensorNode* parent = top.node->parents[top.next_parent++].get();
            if (parent->requires_grad && !visited.count(parent)) stack.push_back({parent, 0});
        } else {
            visited.insert(top.node);
            order.push_back(top.node);
            stack.pop_back();
        }
    }

    std::unordered_map<TensorNode*, std::vector<double>> local;
    local.reserve(order.size());
    const GradSink sink = [&local](TensorNode& node) -> std::vector<double>& {
        auto it = local.find(&node);
        if (it == local.end())
            it = local.emplace(&node, std::vector<double>(node.size(), 0.0)).first;
        return it->second;
    };

    if (!loss.node()->requires_grad) return;  // nothing to do: no tracked inputs
    sink(*loss.node())[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        auto found = local.find(node);
        if (found == local.end()) continue;  // no gradient flowed here
        if (node->backprop) node->backprop(*node, found->second, sink);
    }

    // Flush call-local buffers into the persistent accumulators.
    for (TensorNode* node : order) {
        auto found = local.find(node);
        if (found == local.end()) continue;
        if (node->grad.empty()) node->grad.assign(node->size(), 0.0);
        for (std::size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += found->second[i];
    }
}

// ---------------------------------------------------------------------------
// Optimizers

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr < 0) throw ConfigError("learning rate must be non-negative");
}

void Adam::reset() {
    t_ = 0;
    state_.clear();
}

void Adam::step(std::vector<Parameter>& params) {
    if (state_.empty()) state_.resize(params.size());
    if (state_.size() != params.size())
        throw ConfigError("optimizer state does not match parameter count");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Parameter& param = params[p];
        if (!param.tensor.has_grad())
            throw DataError("parameter '" + param.name + "' has no gradient");
        const auto& g = param.tensor.grad();
        auto& w = param.tensor.mutable_values();
        auto& st = state_[p];
        if (st.m.empty()) {
            st.m.assign(w.size(), 0.0);
            st.v.assign(w.size(), 0.0);
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
            st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        param.tensor.zero_grad();
    }
}

void Sgd::step(std::vector<Parameter>& params) {
    for (Parameter& param : params) {
        if (!param.tensor.has_grad())
            throw DataError("parameter '" + param.name + "' has no gradient");
        const auto& g = param.tensor.grad();
        auto& w = param.tensor.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
        param.tensor.zero_grad();
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: <base>.json manifest + <base>.bin little-endian float32 payload

namespace {

void put_f32_le(std::string& buf, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    buf.push_back(static_cast<char>(u & 0xff));
    buf.push_back(static_cast<char>((u >> 8) & 0xff));
    buf.push_back(static_cast<char>((u >> 16) & 0xff));
    buf.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
    const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                            (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& base_path, const std::vector<Parameter>& params,
                     const std::string& config_json) {
    nlohmann::json manifest;
    manifest["format"] = "veritree-checkpoint-v1";
    if (config_json.empty()) {
        manifest["config"] = nullptr;
    } else {
        try {
            manifest["config"] = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("checkpoint config is not valid JSON: ") + e.what());
        }
    }
    manifest["params"] = nlohmann::json::array();
    std::string payload;
    for (const auto& p : params) {
        manifest["params"].push_back(
            nlohmann::json{{"name", p.name}, {"shape", p.tensor.shape()}});
        for (double v : p.tensor.values()) put_f32_le(payload, static_cast<float>(v));
    }

    std::ofstream mf(base_path + ".json");
    if (!mf) throw DataError("cannot write checkpoint manifest '" + base_path + ".json'");
    mf << manifest.dump(2) << '\n';

    std::ofstream bf(base_path + ".bin", std::ios::binary);
    if (!bf) throw DataError("cannot write checkpoint payload '" + base_path + ".bin'");
    bf.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

Checkpoint load_checkpoint(const std::string& base_path) {
    std::ifstream mf(base_path + ".json");
    if (!mf) throw DataError("cannot open checkpoint manifest '" + base_path + ".json'");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(base_path + ".json: " + e.what());
    }

    std::ifstream bf(base_path + ".bin", std::ios::binary);
    if (!bf) throw DataError("cannot open checkpoint payload '" + base_path + ".bin'");
    std::string payload((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    Checkpoint out;
    if (manifest.contains("config") && !manifest.at("config").is_null())
        out.config_json = manifest.at("config").dump();

    std::size_t offset = 0;
    for (const auto& pj : manifest.at("params")) {
        Parameter p;
        p.name = pj.at("name").get<std::string>();
        Shape shape = pj.at("shape").get<Shape>();
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        if (offset + 4 * n > payload.size())
            throw DataError(base_path + ".bin: payload truncated at parameter '" + p.name + "'");
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i)
            values[i] = static_cast<double>(get_f32_le(
                reinterpret_cast<const unsigned char*>(payload.data() + offset + 4 * i)));
        offset += 4 * n;
        p.tensor = Tensor::from_values(std::move(shape), std::move(values));
        p.tensor.set_requires_grad(true);
        out.params.push_back(std::move(p));
    }
    if (offset != payload.size())
        throw DataError(base_path + ".bin: payload has " +
                        std::to_string(payload.size() - offset) + " trailing bytes");
    return out;
}

}  // namespace veritree::ad
