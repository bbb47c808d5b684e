#include "hfsda/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "hfsda/errors.hpp"

namespace hfsda::ag {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Var& a, int rank, const char* op) {
  if (a.value().ndim() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(a.shape()));
  }
}

template <typename F, typename DF>
Var unary_elementwise(const Var& x, F f, DF df) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(std::move(out), {x}, [x, df](Node& self) {
    const Tensor& xv = x.value();
    Tensor g(xv.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * df(xv[i], self.value[i]);
    accumulate(x, g);
  });
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (!node_ || node_->grad.size() != node_->value.size()) return Tensor(shape());
  return node_->grad;
}

void Var::backward() const {
  if (!node_) throw InvalidInput("backward on undefined variable");
  if (node_->value.size() != 1) {
    throw DimensionError("backward requires a scalar, got " + shape_string(shape()));
  }
  // Iterative post-order DFS to obtain a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (node_->requires_grad) stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad = Tensor(n->value.shape());
  node_->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p.requires_grad(); });
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const Var& p : parents) {
      if (p.defined()) n->parents.push_back(p.node());
    }
    n->backward_fn = std::move(backward);
  }
  return Var(std::move(n));
}

void accumulate(const Var& parent, const Tensor& g) {
  if (!parent.requires_grad()) return;
  parent.node()->ensure_grad() += g;
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.value().cols() != b.value().rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  Tensor out({a.value().rows(), b.value().cols()});
  out.mat().noalias() = a.value().mat() * b.value().mat();
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) {
      Tensor ga(a.shape());
      ga.mat().noalias() = self.grad.mat() * b.value().mat().transpose();
      accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor gb(b.shape());
      gb.mat().noalias() = a.value().mat().transpose() * self.grad.mat();
      accumulate(b, gb);
    }
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.value().cols(), a.value().rows()});
  out.mat() = a.value().mat().transpose();
  return make_result(std::move(out), {a}, [a](Node& self) {
    Tensor g(a.shape());
    g.mat() = self.grad.mat().transpose();
    accumulate(a, g);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  if (x.value().cols() != w.value().rows()) {
    throw DimensionError("linear: input width " + std::to_string(x.value().cols()) +
                         " does not match weight " + shape_string(w.shape()));
  }
  const int out_dim = w.value().cols();
  if (b.defined() && b.value().size() != static_cast<std::size_t>(out_dim)) {
    throw DimensionError("linear: bias " + shape_string(b.shape()) + " for output width " +
                         std::to_string(out_dim));
  }
  Tensor out({x.value().rows(), out_dim});
  out.mat().noalias() = x.value().mat() * w.value().mat();
  if (b.defined()) {
    const double* bv = b.value().data();
    for (int r = 0; r < out.rows(); ++r)
      for (int c = 0; c < out_dim; ++c) out.at(r, c) += bv[c];
  }
  return make_result(std::move(out), {x, w, b}, [x, w, b](Node& self) {
    if (x.requires_grad()) {
      Tensor gx(x.shape());
      gx.mat().noalias() = self.grad.mat() * w.value().mat().transpose();
      accumulate(x, gx);
    }
    if (w.requires_grad()) {
      Tensor gw(w.shape());
      gw.mat().noalias() = x.value().mat().transpose() * self.grad.mat();
      accumulate(w, gw);
    }
    if (b.requires_grad()) {
      Tensor gb(b.shape());
      const int cols = self.grad.cols();
      for (int r = 0; r < self.grad.rows(); ++r)
        for (int c = 0; c < cols; ++c) gb[static_cast<std::size_t>(c)] += self.grad.at(r, c);
      accumulate(b, gb);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    accumulate(b, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    if (b.requires_grad()) {
      Tensor g = self.grad;
      g *= -1.0;
      accumulate(b, g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= b.value()[i];
      accumulate(a, g);
    }
    if (b.requires_grad()) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a.value()[i];
      accumulate(b, g);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return make_result(std::move(out), {a}, [a, s](Node& self) {
    Tensor g = self.grad;
    g *= s;
    accumulate(a, g);
  });
}

Var add_row(const Var& a, const Var& row) {
  require_rank(a, 2, "add_row");
  const int cols = a.value().cols();
  if (row.value().size() != static_cast<std::size_t>(cols)) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " vs matrix " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) += row.value()[static_cast<std::size_t>(c)];
  return make_result(std::move(out), {a, row}, [a, row](Node& self) {
    accumulate(a, self.grad);
    if (row.requires_grad()) {
      Tensor g(row.shape());
      const int cols = self.grad.cols();
      for (int r = 0; r < self.grad.rows(); ++r)
        for (int c = 0; c < cols; ++c) g[static_cast<std::size_t>(c)] += self.grad.at(r, c);
      accumulate(row, g);
    }
  });
}

Var mul_row(const Var& a, const Var& row) {
  require_rank(a, 2, "mul_row");
  const int cols = a.value().cols();
  if (row.value().size() != static_cast<std::size_t>(cols)) {
    throw DimensionError("mul_row: row " + shape_string(row.shape()) + " vs matrix " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) *= row.value()[static_cast<std::size_t>(c)];
  return make_result(std::move(out), {a, row}, [a, row](Node& self) {
    const int cols = self.grad.cols();
    if (a.requires_grad()) {
      Tensor g = self.grad;
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < cols; ++c) g.at(r, c) *= row.value()[static_cast<std::size_t>(c)];
      accumulate(a, g);
    }
    if (row.requires_grad()) {
      Tensor g(row.shape());
      for (int r = 0; r < self.grad.rows(); ++r)
        for (int c = 0; c < cols; ++c)
          g[static_cast<std::size_t>(c)] += self.grad.at(r, c) * a.value().at(r, c);
      accumulate(row, g);
    }
  });
}

Var sigmoid(const Var& x) {
  return unary_elementwise(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var silu(const Var& x) {
  return unary_elementwise(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Var gelu(const Var& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return unary_elementwise(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v))); },
      [](double v, double) {
        const double u = k * (v + 0.044715 * v * v * v);
        const double t = std::tanh(u);
        const double du = k * (1.0 + 3.0 * 0.044715 * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  Tensor out = x.value();
  const int cols = out.cols();
  for (int r = 0; r < out.rows(); ++r) {
    double m = out.at(r, 0);
    for (int c = 1; c < cols; ++c) m = std::max(m, out.at(r, c));
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - m);
      s += out.at(r, c);
    }
    for (int c = 0; c < cols; ++c) out.at(r, c) /= s;
  }
  return make_result(std::move(out), {x}, [x](Node& self) {
    Tensor g(x.shape());
    const int cols = g.cols();
    for (int r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += self.grad.at(r, c) * self.value.at(r, c);
      for (int c = 0; c < cols; ++c) g.at(r, c) = self.value.at(r, c) * (self.grad.at(r, c) - dot);
    }
    accumulate(x, g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const int rows = x.value().rows();
  const int cols = x.value().cols();
  if (gamma.value().size() != static_cast<std::size_t>(cols) ||
      beta.value().size() != static_cast<std::size_t>(cols)) {
    throw DimensionError("layer_norm: affine parameters do not match width " +
                         std::to_string(cols));
  }
  Tensor xhat(x.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  Tensor out(x.shape());
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += x.value().at(r, c);
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = x.value().at(r, c) - mu;
      var += d * d;
    }
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (int c = 0; c < cols; ++c) {
      const double h = (x.value().at(r, c) - mu) * is;
      xhat.at(r, c) = h;
      out.at(r, c) = gamma.value()[static_cast<std::size_t>(c)] * h +
                     beta.value()[static_cast<std::size_t>(c)];
    }
  }
  return make_result(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const int rows = xhat.rows();
        const int cols = xhat.cols();
        if (gamma.requires_grad() || beta.requires_grad()) {
          Tensor gg(gamma.shape());
          Tensor gb(beta.shape());
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
              gg[static_cast<std::size_t>(c)] += self.grad.at(r, c) * xhat.at(r, c);
              gb[static_cast<std::size_t>(c)] += self.grad.at(r, c);
            }
          accumulate(gamma, gg);
          accumulate(beta, gb);
        }
        if (x.requires_grad()) {
          Tensor gx(x.shape());
          std::vector<double> dxhat(static_cast<std::size_t>(cols));
          for (int r = 0; r < rows; ++r) {
            double m1 = 0.0;
            double m2 = 0.0;
            for (int c = 0; c < cols; ++c) {
              const double d = self.grad.at(r, c) * gamma.value()[static_cast<std::size_t>(c)];
              dxhat[static_cast<std::size_t>(c)] = d;
              m1 += d;
              m2 += d * xhat.at(r, c);
            }
            m1 /= cols;
            m2 /= cols;
            const double is = inv_std[static_cast<std::size_t>(r)];
            for (int c = 0; c < cols; ++c)
              gx.at(r, c) = is * (dxhat[static_cast<std::size_t>(c)] - m1 - xhat.at(r, c) * m2);
          }
          accumulate(x, gx);
        }
      });
}

Var glu_cols(const Var& x) {
  require_rank(x, 2, "glu_cols");
  const int rows = x.value().rows();
  const int cols = x.value().cols();
  if (cols % 2 != 0) throw DimensionError("glu_cols: odd width " + std::to_string(cols));
  const int half = cols / 2;
  Tensor out({rows, half});
  Tensor gate({rows, half});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < half; ++c) {
      const double s = 1.0 / (1.0 + std::exp(-x.value().at(r, half + c)));
      gate.at(r, c) = s;
      out.at(r, c) = x.value().at(r, c) * s;
    }
  return make_result(std::move(out), {x}, [x, gate = std::move(gate)](Node& self) {
    const int rows = gate.rows();
    const int half = gate.cols();
    Tensor g(x.shape());
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < half; ++c) {
        const double s = gate.at(r, c);
        const double go = self.grad.at(r, c);
        g.at(r, c) = go * s;
        g.at(r, half + c) = go * x.value().at(r, c) * s * (1.0 - s);
      }
    accumulate(x, g);
  });
}

Var mean_rows(const Var& x) {
  require_rank(x, 2, "mean_rows");
  const int rows = x.value().rows();
  const int cols = x.value().cols();
  if (rows < 1) throw InvalidInput("mean_rows: empty input");
  // Each column is summed in ascending order so the result depends only on
  // the multiset of rows, never on their order.
  Tensor out({1, cols});
  std::vector<double> column(static_cast<std::size_t>(rows));
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) column[static_cast<std::size_t>(r)] = x.value().at(r, c);
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    out[static_cast<std::size_t>(c)] = s / rows;
  }
  return make_result(std::move(out), {x}, [x](Node& self) {
    Tensor g(x.shape());
    const int rows = g.rows();
    const int cols = g.cols();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) g.at(r, c) = self.grad[static_cast<std::size_t>(c)] / rows;
    accumulate(x, g);
  });
}

Var max_rows(const Var& x) {
  require_rank(x, 2, "max_rows");
  const int rows = x.value().rows();
  const int cols = x.value().cols();
  if (rows < 1) throw InvalidInput("max_rows: empty input");
  Tensor out({1, cols});
  std::vector<int> arg(static_cast<std::size_t>(cols), 0);
  for (int c = 0; c < cols; ++c) {
    double m = x.value().at(0, c);
    for (int r = 1; r < rows; ++r) {
      if (x.value().at(r, c) > m) {
        m = x.value().at(r, c);
        arg[static_cast<std::size_t>(c)] = r;
      }
    }
    out[static_cast<std::size_t>(c)] = m;
  }
  return make_result(std::move(out), {x}, [x, arg = std::move(arg)](Node& self) {
    Tensor g(x.shape());
    for (std::size_t c = 0; c < arg.size(); ++c)
      g.at(arg[c], static_cast<int>(c)) = self.grad[c];
    accumulate(x, g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  const int rows = parts.front().value().rows();
  int total = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + std::to_string(rows) + " vs " +
                           std::to_string(p.value().rows()));
    }
    total += p.value().cols();
  }
  Tensor out({rows, total});
  int offset = 0;
  for (const Var& p : parts) {
    const int w = p.value().cols();
    out.mat().middleCols(offset, w) = p.value().mat();
    offset += w;
  }
  return make_result(std::move(out), parts, [parts](Node& self) {
    int offset = 0;
    for (const Var& p : parts) {
      const int w = p.value().cols();
      if (p.requires_grad()) {
        Tensor g(p.shape());
        g.mat() = self.grad.mat().middleCols(offset, w);
        accumulate(p, g);
      }
      offset += w;
    }
  });
}

Var slice_cols(const Var& x, int start, int len) {
  require_rank(x, 2, "slice_cols");
  if (start < 0 || len < 0 || start + len > x.value().cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") outside " + shape_string(x.shape()));
  }
  Tensor out({x.value().rows(), len});
  out.mat() = x.value().mat().middleCols(start, len);
  return make_result(std::move(out), {x}, [x, start, len](Node& self) {
    Tensor g(x.shape());
    g.mat().middleCols(start, len) = self.grad.mat();
    accumulate(x, g);
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [x](Node& self) {
    accumulate(x, self.grad.reshaped(x.shape()));
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor::scalar(s), {x}, [x](Node& self) {
    accumulate(x, Tensor(x.shape(), self.grad[0]));
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw InvalidInput("mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var smooth_l1(const Var& pred, const Tensor& target, double beta) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("smooth_l1: shape mismatch " + shape_string(pred.shape()) + " vs " +
                         shape_string(target.shape()));
  }
  if (!(beta > 0)) throw InvalidInput("smooth_l1: beta must be positive");
  const std::size_t n = target.size();
  if (n == 0) throw InvalidInput("smooth_l1: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.value()[i] - target[i];
    const double a = std::abs(d);
    total += a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
  }
  return make_result(Tensor::scalar(total / static_cast<double>(n)), {pred},
                     [pred, target, beta](Node& self) {
                       const std::size_t n = target.size();
                       Tensor g(pred.shape());
                       const double s = self.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double d = pred.value()[i] - target[i];
                         g[i] = s * (std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0));
                       }
                       accumulate(pred, g);
                     });
}

Var dropout(const Var& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw InvalidInput("dropout probability must be < 1");
  Tensor keep(x.shape());
  const double s = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = rng.uniform() >= p ? s : 0.0;
  return mul(x, Var::constant(std::move(keep)));
}

Var conv2d(const Var& x, const Var& kernel, int stride_t, int stride_f, int pad_t, int pad_f) {
  require_rank(x, 3, "conv2d");
  require_rank(kernel, 4, "conv2d");
  const int cin = x.value().dim(0);
  const int t = x.value().dim(1);
  const int f = x.value().dim(2);
  const int cout = kernel.value().dim(0);
  const int kt = kernel.value().dim(2);
  const int kf = kernel.value().dim(3);
  if (kernel.value().dim(1) != cin) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  if (stride_t < 1 || stride_f < 1 || pad_t < 0 || pad_f < 0) {
    throw DimensionError("conv2d: invalid stride/padding");
  }
  if (kt > t + 2 * pad_t || kf > f + 2 * pad_f) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) +
                         " larger than padded input " + shape_string(x.shape()));
  }
  const int ot = (t + 2 * pad_t - kt) / stride_t + 1;
  const int of = (f + 2 * pad_f - kf) / stride_f + 1;
  const int patch = cin * kt * kf;
  const int positions = ot * of;

  Tensor cols({patch, positions});
  const double* xv = x.value().data();
  for (int c = 0; c < cin; ++c)
    for (int a = 0; a < kt; ++a)
      for (int b = 0; b < kf; ++b) {
        double* row = cols.data() + static_cast<std::size_t>((c * kt + a) * kf + b) * positions;
        for (int i = 0; i < ot; ++i) {
          const int ti = i * stride_t + a - pad_t;
          if (ti < 0 || ti >= t) continue;
          const double* xrow = xv + (static_cast<std::size_t>(c) * t + ti) * f;
          double* dst = row + static_cast<std::size_t>(i) * of;
          for (int j = 0; j < of; ++j) {
            const int fj = j * stride_f + b - pad_f;
            if (fj >= 0 && fj < f) dst[j] = xrow[fj];
          }
        }
      }

  Tensor out({cout, ot, of});
  ConstMatrixMap kmat(kernel.value().data(), cout, patch);
  MatrixMap omat(out.data(), cout, positions);
  omat.noalias() = kmat * cols.mat();

  return make_result(
      std::move(out), {x, kernel},
      [x, kernel, cols = std::move(cols), stride_t, stride_f, pad_t, pad_f, ot, of](Node& self) {
        const int cin = x.value().dim(0);
        const int t = x.value().dim(1);
        const int f = x.value().dim(2);
        const int cout = kernel.value().dim(0);
        const int kt = kernel.value().dim(2);
        const int kf = kernel.value().dim(3);
        const int patch = cin * kt * kf;
        const int positions = ot * of;
        ConstMatrixMap gmat(self.grad.data(), cout, positions);
        if (kernel.requires_grad()) {
          Tensor gk(kernel.shape());
          MatrixMap gkmat(gk.data(), cout, patch);
          gkmat.noalias() = gmat * cols.mat().transpose();
          accumulate(kernel, gk);
        }
        if (x.requires_grad()) {
          ConstMatrixMap kmat(kernel.value().data(), cout, patch);
          Tensor gcols({patch, positions});
          gcols.mat().noalias() = kmat.transpose() * gmat;
          Tensor gx(x.shape());
          double* gxv = gx.data();
          for (int c = 0; c < cin; ++c)
            for (int a = 0; a < kt; ++a)
              for (int b = 0; b < kf; ++b) {
                const double* row =
                    gcols.data() + static_cast<std::size_t>((c * kt + a) * kf + b) * positions;
                for (int i = 0; i < ot; ++i) {
                  const int ti = i * stride_t + a - pad_t;
                  if (ti < 0 || ti >= t) continue;
                  double* xrow = gxv + (static_cast<std::size_t>(c) * t + ti) * f;
                  const double* src = row + static_cast<std::size_t>(i) * of;
                  for (int j = 0; j < of; ++j) {
                    const int fj = j * stride_f + b - pad_f;
                    if (fj >= 0 && fj < f) xrow[fj] += src[j];
                  }
                }
              }
          accumulate(x, gx);
        }
      });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 3, "global_avg_pool");
  const int c = x.value().dim(0);
  const std::size_t area = x.value().size() / static_cast<std::size_t>(c);
  Tensor out({1, c});
  for (int k = 0; k < c; ++k) {
    double s = 0.0;
    const double* p = x.value().data() + static_cast<std::size_t>(k) * area;
    for (std::size_t i = 0; i < area; ++i) s += p[i];
    out[static_cast<std::size_t>(k)] = s / static_cast<double>(area);
  }
  return make_result(std::move(out), {x}, [x, area](Node& self) {
    Tensor g(x.shape());
    const int c = x.value().dim(0);
    for (int k = 0; k < c; ++k) {
      const double v = self.grad[static_cast<std::size_t>(k)] / static_cast<double>(area);
      double* p = g.data() + static_cast<std::size_t>(k) * area;
      std::fill(p, p + area, v);
    }
    accumulate(x, g);
  });
}

Var frames_from_channels(const Var& x) {
  require_rank(x, 3, "frames_from_channels");
  const int c = x.value().dim(0);
  const int t = x.value().dim(1);
  const int f = x.value().dim(2);
  Tensor out({t, c * f});
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < t; ++i)
      std::copy_n(x.value().data() + (static_cast<std::size_t>(k) * t + i) * f, f,
                  out.data() + static_cast<std::size_t>(i) * c * f + static_cast<std::size_t>(k) * f);
  return make_result(std::move(out), {x}, [x](Node& self) {
    const int c = x.value().dim(0);
    const int t = x.value().dim(1);
    const int f = x.value().dim(2);
    Tensor g(x.shape());
    for (int k = 0; k < c; ++k)
      for (int i = 0; i < t; ++i)
        std::copy_n(self.grad.data() + static_cast<std::size_t>(i) * c * f +
                        static_cast<std::size_t>(k) * f,
                    f, g.data() + (static_cast<std::size_t>(k) * t + i) * f);
    accumulate(x, g);
  });
}

Var depthwise_conv_time(const Var& x, const Var& kernel, const Var& bias) {
  require_rank(x, 2, "depthwise_conv_time");
  require_rank(kernel, 2, "depthwise_conv_time");
  const int t = x.value().rows();
  const int d = x.value().cols();
  const int k = kernel.value().rows();
  if (kernel.value().cols() != d || k % 2 == 0) {
    throw DimensionError("depthwise_conv_time: kernel " + shape_string(kernel.shape()) +
                         " incompatible with input " + shape_string(x.shape()));
  }
  const int pad = (k - 1) / 2;
  Tensor out({t, d});
  for (int i = 0; i < t; ++i) {
    double* o = out.data() + static_cast<std::size_t>(i) * d;
    if (bias.defined())
      for (int c = 0; c < d; ++c) o[c] = bias.value()[static_cast<std::size_t>(c)];
    for (int j = 0; j < k; ++j) {
      const int src = i + j - pad;
      if (src < 0 || src >= t) continue;
      const double* xr = x.value().data() + static_cast<std::size_t>(src) * d;
      const double* kr = kernel.value().data() + static_cast<std::size_t>(j) * d;
      for (int c = 0; c < d; ++c) o[c] += kr[c] * xr[c];
    }
  }
  return make_result(std::move(out), {x, kernel, bias}, [x, kernel, bias, pad](Node& self) {
    const int t = x.value().rows();
    const int d = x.value().cols();
    const int k = kernel.value().rows();
    Tensor gx(x.shape());
    Tensor gk(kernel.shape());
    Tensor gb({d});
    for (int i = 0; i < t; ++i) {
      const double* go = self.grad.data() + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < d; ++c) gb[static_cast<std::size_t>(c)] += go[c];
      for (int j = 0; j < k; ++j) {
        const int src = i + j - pad;
        if (src < 0 || src >= t) continue;
        const double* xr = x.value().data() + static_cast<std::size_t>(src) * d;
        const double* kr = kernel.value().data() + static_cast<std::size_t>(j) * d;
        double* gxr = gx.data() + static_cast<std::size_t>(src) * d;
        double* gkr = gk.data() + static_cast<std::size_t>(j) * d;
        for (int c = 0; c < d; ++c) {
          gxr[c] += kr[c] * go[c];
          gkr[c] += xr[c] * go[c];
        }
      }
    }
    accumulate(x, gx);
    accumulate(kernel, gk);
    if (bias.defined()) accumulate(bias, gb.reshaped(bias.shape()));
  });
}

Var weighted_sum(const Var& weights, const std::vector<Var>& xs) {
  if (xs.empty() || weights.value().size() != xs.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.value().size()) +
                         " weights for " + std::to_string(xs.size()) + " inputs");
  }
  Tensor out(xs.front().shape());
  for (std::size_t l = 0; l < xs.size(); ++l) {
    if (xs[l].shape() != out.shape()) throw DimensionError("weighted_sum: inputs differ in shape");
    const double w = weights.value()[l];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * xs[l].value()[i];
  }
  std::vector<Var> parents = xs;
  parents.push_back(weights);
  return make_result(std::move(out), parents, [weights, xs](Node& self) {
    Tensor gw(weights.shape());
    for (std::size_t l = 0; l < xs.size(); ++l) {
      double dot = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * xs[l].value()[i];
      gw[l] = dot;
      if (xs[l].requires_grad()) {
        Tensor g = self.grad;
        g *= weights.value()[l];
        accumulate(xs[l], g);
      }
    }
    accumulate(weights, gw);
  });
}

}  // namespace hfsda::ag
