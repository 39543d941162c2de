#include "morphkit/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "morphkit/errors.h"

namespace morphkit {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

// ---------------------------------------------------------------------------
// ParamSet / GradBuffer

size_t ParamSet::add(std::string name, Tensor value) {
  if (find(name) != params_.size()) {
    throw std::invalid_argument("ParamSet: duplicate parameter name " + name);
  }
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

size_t ParamSet::total_size() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

size_t ParamSet::find(const std::string& name) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return params_.size();
}

GradBuffer::GradBuffer(const ParamSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.emplace_back(p.value.size(), 0.0);
}

void GradBuffer::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
  populated_ = false;
}

void GradBuffer::add(const GradBuffer& other) {
  if (other.grads_.size() != grads_.size()) {
    throw std::invalid_argument("GradBuffer::add: mismatched buffers");
  }
  for (size_t s = 0; s < grads_.size(); ++s) {
    auto& dst = grads_[s];
    const auto& src = other.grads_[s];
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  populated_ = populated_ || other.populated_;
}

void GradBuffer::scale(double s) {
  for (auto& g : grads_) {
    for (double& x : g) x *= s;
  }
}

double GradBuffer::norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) {
    for (double x : g) sq += x * x;
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Tape

struct TapeAccess {
  static Tape::Node& node(Tape& t, uint32_t id) { return t.nodes_[id]; }
  static double* grad(Tape& t, uint32_t id) { return t.grad_of(id); }

  static Var make(Tape& t, Shape shape, std::vector<double> value, bool needs_grad,
                  const char* kind) {
    for (double v : value) {
      if (!std::isfinite(v)) {
        throw NumericalError(std::string("non-finite value produced by ") + kind);
      }
    }
    Tape::Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    t.nodes_.push_back(std::move(n));
    return Var(&t, static_cast<uint32_t>(t.nodes_.size() - 1));
  }

  static void on_backward(Var out, std::function<void()> fn) {
    out.tape()->nodes_[out.id()].back = std::move(fn);
  }
};

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::invalid_argument("operands recorded on different tapes");
  return t;
}

bool needs(Var a) { return TapeAccess::node(*a.tape(), a.id()).needs_grad; }

[[noreturn]] void shape_error(const char* kind, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(kind) + ": incompatible shapes " +
                              shape_string(a) + " and " + shape_string(b));
}

[[noreturn]] void shape_error(const char* kind, const Shape& a) {
  throw std::invalid_argument(std::string(kind) + ": unsupported shape " + shape_string(a));
}

}  // namespace

const Shape& Var::shape() const { return tape_->nodes_.at(id_).shape; }
size_t Var::size() const { return tape_->nodes_.at(id_).size(); }

std::span<const double> Var::value() const {
  const auto& n = tape_->nodes_.at(id_);
  return {n.val(), n.size()};
}

double Var::item() const {
  if (size() != 1) throw std::invalid_argument("Var::item on non-scalar " + shape_string(shape()));
  return value()[0];
}

Tensor Var::tensor() const {
  auto v = value();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

std::vector<double> Var::grad() const {
  const auto& n = tape_->nodes_.at(id_);
  if (n.ext_grad) return std::vector<double>(n.ext_grad, n.ext_grad + n.size());
  if (n.grad.empty()) return std::vector<double>(n.size(), 0.0);
  return n.grad;
}

double* Tape::grad_of(uint32_t id) {
  Node& n = nodes_[id];
  if (n.ext_grad) return n.ext_grad;
  if (n.grad.empty()) n.grad.assign(n.size(), 0.0);
  return n.grad.data();
}

bool Tape::has_grad(uint32_t id) const {
  return nodes_[id].ext_grad != nullptr || !nodes_[id].grad.empty();
}

Var Tape::constant(Tensor value) {
  auto shape = value.shape();
  return TapeAccess::make(*this, std::move(shape), std::move(value.storage()), false,
                          "constant");
}

Var Tape::variable(Tensor value) {
  auto shape = value.shape();
  return TapeAccess::make(*this, std::move(shape), std::move(value.storage()), true,
                          "variable");
}

Var Tape::param(const ParamSet& params, size_t slot) {
  const Parameter& p = params[slot];
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.shape = p.value.shape();
  n.ext_value = p.value.data().data();
  if (sink_) {
    if (sink_->size() != params.size() || (*sink_)[slot].size() != p.value.size()) {
      throw std::invalid_argument("Tape: gradient buffer does not mirror the parameters");
    }
    n.ext_grad = (*sink_)[slot].data();
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  const auto id = static_cast<uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss from another tape");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_string(loss.shape()));
  }
  grad_of(loss.id())[0] += 1.0;
  for (int64_t id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.back && has_grad(static_cast<uint32_t>(id))) n.back();
  }
  if (sink_) sink_->mark_populated();
}

// ---------------------------------------------------------------------------
// Ops

namespace ad {

using A = TapeAccess;

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2) shape_error("matmul", sa, sb);
  const size_t m = sa[0], k = sa[1];
  if (sb.size() == 1) {
    if (sb[0] != k) shape_error("matmul", sa, sb);
    std::vector<double> y(m);
    VecMap(y.data(), m).noalias() =
        ConstMatMap(a.value().data(), m, k) * ConstVecMap(b.value().data(), k);
    Var out = A::make(t, {m}, std::move(y), needs(a) || needs(b), "matmul");
    if (needs(a) || needs(b)) {
      A::on_backward(out, [&t, ai = a.id(), bi = b.id(), oi = out.id(), m, k] {
        ConstVecMap gy(A::grad(t, oi), m);
        const auto& na = A::node(t, ai);
        const auto& nb = A::node(t, bi);
        if (na.needs_grad) {
          MatMap(A::grad(t, ai), m, k).noalias() += gy * ConstVecMap(nb.val(), k).transpose();
        }
        if (nb.needs_grad) {
          VecMap(A::grad(t, bi), k).noalias() += ConstMatMap(na.val(), m, k).transpose() * gy;
        }
      });
    }
    return out;
  }
  if (sb.size() != 2 || sb[0] != k) shape_error("matmul", sa, sb);
  const size_t n = sb[1];
  std::vector<double> y(m * n);
  MatMap(y.data(), m, n).noalias() =
      ConstMatMap(a.value().data(), m, k) * ConstMatMap(b.value().data(), k, n);
  Var out = A::make(t, {m, n}, std::move(y), needs(a) || needs(b), "matmul");
  if (needs(a) || needs(b)) {
    A::on_backward(out, [&t, ai = a.id(), bi = b.id(), oi = out.id(), m, k, n] {
      ConstMatMap gy(A::grad(t, oi), m, n);
      const auto& na = A::node(t, ai);
      const auto& nb = A::node(t, bi);
      if (na.needs_grad) {
        MatMap(A::grad(t, ai), m, k).noalias() += gy * ConstMatMap(nb.val(), k, n).transpose();
      }
      if (nb.needs_grad) {
        MatMap(A::grad(t, bi), k, n).noalias() += ConstMatMap(na.val(), m, k).transpose() * gy;
      }
    });
  }
  return out;
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) shape_error("matmul_nt", sa, sb);
  const size_t m = sa[0], k = sa[1], n = sb[0];
  std::vector<double> y(m * n);
  MatMap(y.data(), m, n).noalias() =
      ConstMatMap(a.value().data(), m, k) * ConstMatMap(b.value().data(), n, k).transpose();
  Var out = A::make(t, {m, n}, std::move(y), needs(a) || needs(b), "matmul_nt");
  if (needs(a) || needs(b)) {
    A::on_backward(out, [&t, ai = a.id(), bi = b.id(), oi = out.id(), m, k, n] {
      ConstMatMap gy(A::grad(t, oi), m, n);
      const auto& na = A::node(t, ai);
      const auto& nb = A::node(t, bi);
      if (na.needs_grad) {
        MatMap(A::grad(t, ai), m, k).noalias() += gy * ConstMatMap(nb.val(), n, k);
      }
      if (nb.needs_grad) {
        MatMap(A::grad(t, bi), n, k).noalias() += gy.transpose() * ConstMatMap(na.val(), m, k);
      }
    });
  }
  return out;
}

namespace {

// Elementwise binary op on equal shapes; df returns (d/da, d/db) at index i.
template <typename F, typename DF>
Var binary(const char* kind, Var a, Var b, F f, DF df) {
  Tape& t = tape_of(a, b);
  if (a.shape() != b.shape()) shape_error(kind, a.shape(), b.shape());
  auto x = a.value();
  auto z = b.value();
  std::vector<double> y(x.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = f(x[i], z[i]);
  Var out = A::make(t, a.shape(), std::move(y), needs(a) || needs(b), kind);
  if (needs(a) || needs(b)) {
    A::on_backward(out, [&t, ai = a.id(), bi = b.id(), oi = out.id(), df] {
      const auto& na = A::node(t, ai);
      const auto& nb = A::node(t, bi);
      const double* gy = A::grad(t, oi);
      const double* x = na.val();
      const double* z = nb.val();
      const size_t n = na.size();
      double* ga = na.needs_grad ? A::grad(t, ai) : nullptr;
      double* gb = nb.needs_grad ? A::grad(t, bi) : nullptr;
      for (size_t i = 0; i < n; ++i) {
        const auto [da, db] = df(x[i], z[i]);
        if (ga) ga[i] += gy[i] * da;
        if (gb) gb[i] += gy[i] * db;
      }
    });
  }
  return out;
}

// Elementwise unary op; df(x, y) is dy/dx.
template <typename F, typename DF>
Var unary(const char* kind, Var a, F f, DF df) {
  Tape& t = tape_of(a);
  auto x = a.value();
  std::vector<double> y(x.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  Var out = A::make(t, a.shape(), std::move(y), needs(a), kind);
  if (needs(a)) {
    A::on_backward(out, [&t, ai = a.id(), oi = out.id(), df] {
      const auto& na = A::node(t, ai);
      const auto& no = A::node(t, oi);
      const double* gy = A::grad(t, oi);
      const double* x = na.val();
      const double* y = no.val();
      double* gx = A::grad(t, ai);
      for (size_t i = 0; i < na.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  return binary("add", a, b, [](double x, double z) { return x + z; },
                [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Var a, Var b) {
  return binary("sub", a, b, [](double x, double z) { return x - z; },
                [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Var a, Var b) {
  return binary("mul", a, b, [](double x, double z) { return x * z; },
                [](double x, double z) { return std::pair{z, x}; });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a,
               [](double x) {
                 if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(std::max(x, kLogFloor)); },
               [](double x, double) { return x > kLogFloor ? 1.0 / x : 0.0; });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape& t = tape_of(parts[0]);
  std::vector<double> y;
  std::vector<uint32_t> ids;
  bool any = false;
  for (const Var& p : parts) {
    tape_of(p, parts[0]);
    if (p.shape().size() != 1) shape_error("concat", p.shape());
    auto v = p.value();
    y.insert(y.end(), v.begin(), v.end());
    ids.push_back(p.id());
    any = any || needs(p);
  }
  const size_t n = y.size();
  Var out = A::make(t, {n}, std::move(y), any, "concat");
  if (any) {
    A::on_backward(out, [&t, ids, oi = out.id()] {
      const double* gy = A::grad(t, oi);
      size_t off = 0;
      for (uint32_t id : ids) {
        const auto& np = A::node(t, id);
        const size_t len = np.size();
        if (np.needs_grad) {
          double* gp = A::grad(t, id);
          for (size_t i = 0; i < len; ++i) gp[i] += gy[off + i];
        }
        off += len;
      }
    });
  }
  return out;
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var a, size_t offset, size_t length) {
  Tape& t = tape_of(a);
  if (a.shape().size() != 1 || offset + length > a.size()) {
    throw std::invalid_argument("slice: range [" + std::to_string(offset) + ", " +
                                std::to_string(offset + length) + ") outside shape " +
                                shape_string(a.shape()));
  }
  auto v = a.value();
  std::vector<double> y(v.begin() + offset, v.begin() + offset + length);
  Var out = A::make(t, {length}, std::move(y), needs(a), "slice");
  if (needs(a)) {
    A::on_backward(out, [&t, ai = a.id(), oi = out.id(), offset, length] {
      const double* gy = A::grad(t, oi);
      double* gx = A::grad(t, ai);
      for (size_t i = 0; i < length; ++i) gx[offset + i] += gy[i];
    });
  }
  return out;
}

std::vector<Var> split(Var a, std::span<const size_t> sizes) {
  size_t total = 0;
  for (size_t s : sizes) total += s;
  if (a.shape().size() != 1 || total != a.size()) {
    throw std::invalid_argument("split: sizes do not sum to " + shape_string(a.shape()));
  }
  std::vector<Var> out;
  size_t off = 0;
  for (size_t s : sizes) {
    out.push_back(slice(a, off, s));
    off += s;
  }
  return out;
}

Var softmax(Var a) {
  Tape& t = tape_of(a);
  if (a.shape().size() != 1 || a.size() == 0) shape_error("softmax", a.shape());
  auto x = a.value();
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> y(x.size());
  double z = 0.0;
  for (size_t i = 0; i < y.size(); ++i) z += (y[i] = std::exp(x[i] - mx));
  for (double& v : y) v /= z;
  Var out = A::make(t, a.shape(), std::move(y), needs(a), "softmax");
  if (needs(a)) {
    A::on_backward(out, [&t, ai = a.id(), oi = out.id()] {
      const auto& no = A::node(t, oi);
      const double* y = no.val();
      const double* gy = A::grad(t, oi);
      double* gx = A::grad(t, ai);
      double s = 0.0;
      for (size_t i = 0; i < no.size(); ++i) s += gy[i] * y[i];
      for (size_t i = 0; i < no.size(); ++i) gx[i] += y[i] * (gy[i] - s);
    });
  }
  return out;
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  if (a.shape().size() != 1 || a.size() == 0) shape_error("log_softmax", a.shape());
  auto x = a.value();
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  std::vector<double> y(x.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = x[i] - lse;
  Var out = A::make(t, a.shape(), std::move(y), needs(a), "log_softmax");
  if (needs(a)) {
    A::on_backward(out, [&t, ai = a.id(), oi = out.id()] {
      const auto& no = A::node(t, oi);
      const double* y = no.val();
      const double* gy = A::grad(t, oi);
      double* gx = A::grad(t, ai);
      double s = 0.0;
      for (size_t i = 0; i < no.size(); ++i) s += gy[i];
      for (size_t i = 0; i < no.size(); ++i) gx[i] += gy[i] - std::exp(y[i]) * s;
    });
  }
  return out;
}

Var gather(Var table, uint32_t id) {
  Tape& t = tape_of(table);
  const Shape& s = table.shape();
  if (s.size() != 2 || id >= s[0]) {
    throw std::invalid_argument("gather: row " + std::to_string(id) + " outside table " +
                                shape_string(s));
  }
  const size_t d = s[1];
  auto v = table.value();
  std::vector<double> y(v.begin() + id * d, v.begin() + (id + 1) * d);
  Var out = A::make(t, {d}, std::move(y), needs(table), "gather");
  if (needs(table)) {
    A::on_backward(out, [&t, ti = table.id(), oi = out.id(), id, d] {
      const double* gy = A::grad(t, oi);
      double* gt = A::grad(t, ti) + static_cast<size_t>(id) * d;
      for (size_t i = 0; i < d; ++i) gt[i] += gy[i];
    });
  }
  return out;
}

Var gather_rows(Var table, std::span<const uint32_t> ids) {
  Tape& t = tape_of(table);
  const Shape& s = table.shape();
  if (s.size() != 2 || ids.empty()) shape_error("gather_rows", s);
  const size_t d = s[1];
  auto v = table.value();
  std::vector<double> y;
  y.reserve(ids.size() * d);
  for (uint32_t id : ids) {
    if (id >= s[0]) {
      throw std::invalid_argument("gather_rows: row " + std::to_string(id) +
                                  " outside table " + shape_string(s));
    }
    y.insert(y.end(), v.begin() + id * d, v.begin() + (id + 1) * d);
  }
  std::vector<uint32_t> rows(ids.begin(), ids.end());
  Var out = A::make(t, {ids.size(), d}, std::move(y), needs(table), "gather_rows");
  if (needs(table)) {
    A::on_backward(out, [&t, ti = table.id(), oi = out.id(), rows, d] {
      const double* gy = A::grad(t, oi);
      double* gt = A::grad(t, ti);
      for (size_t r = 0; r < rows.size(); ++r) {
        double* dst = gt + static_cast<size_t>(rows[r]) * d;
        for (size_t i = 0; i < d; ++i) dst[i] += gy[r * d + i];
      }
    });
  }
  return out;
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack: no inputs");
  Tape& t = tape_of(rows[0]);
  const Shape first = rows[0].shape();
  if (first.size() != 1) shape_error("stack", first);
  const size_t d = first[0];
  std::vector<double> y;
  y.reserve(rows.size() * d);
  std::vector<uint32_t> ids;
  bool any = false;
  for (const Var& r : rows) {
    tape_of(r, rows[0]);
    if (r.shape() != first) shape_error("stack", first, r.shape());
    auto v = r.value();
    y.insert(y.end(), v.begin(), v.end());
    ids.push_back(r.id());
    any = any || needs(r);
  }
  Var out = A::make(t, {rows.size(), d}, std::move(y), any, "stack");
  if (any) {
    A::on_backward(out, [&t, ids, oi = out.id(), d] {
      const double* gy = A::grad(t, oi);
      for (size_t r = 0; r < ids.size(); ++r) {
        if (!A::node(t, ids[r]).needs_grad) continue;
        double* g = A::grad(t, ids[r]);
        for (size_t i = 0; i < d; ++i) g[i] += gy[r * d + i];
      }
    });
  }
  return out;
}

Var weighted_sum(Var weights, Var rows) {
  Tape& t = tape_of(weights, rows);
  const Shape& sw = weights.shape();
  const Shape& sr = rows.shape();
  if (sw.size() != 1 || sr.size() != 2 || sw[0] != sr[0]) {
    shape_error("weighted_sum", sw, sr);
  }
  const size_t n = sr[0], d = sr[1];
  std::vector<double> y(d);
  VecMap(y.data(), d).noalias() =
      ConstMatMap(rows.value().data(), n, d).transpose() * ConstVecMap(weights.value().data(), n);
  const bool any = needs(weights) || needs(rows);
  Var out = A::make(t, {d}, std::move(y), any, "weighted_sum");
  if (any) {
    A::on_backward(out, [&t, wi = weights.id(), ri = rows.id(), oi = out.id(), n, d] {
      ConstVecMap gy(A::grad(t, oi), d);
      const auto& nw = A::node(t, wi);
      const auto& nr = A::node(t, ri);
      if (nw.needs_grad) {
        VecMap(A::grad(t, wi), n).noalias() += ConstMatMap(nr.val(), n, d) * gy;
      }
      if (nr.needs_grad) {
        MatMap(A::grad(t, ri), n, d).noalias() += ConstVecMap(nw.val(), n) * gy.transpose();
      }
    });
  }
  return out;
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value()) s += v;
  Var out = A::make(t, {}, {s}, needs(a), "sum");
  if (needs(a)) {
    A::on_backward(out, [&t, ai = a.id(), oi = out.id()] {
      const double g = A::grad(t, oi)[0];
      double* gx = A::grad(t, ai);
      for (size_t i = 0; i < A::node(t, ai).size(); ++i) gx[i] += g;
    });
  }
  return out;
}

Var mean(Var a) {
  if (a.size() == 0) shape_error("mean", a.shape());
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.shape().size() != 1 || a.shape() != b.shape()) shape_error("dot", a.shape(), b.shape());
  auto x = a.value();
  auto z = b.value();
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * z[i];
  const bool any = needs(a) || needs(b);
  Var out = A::make(t, {}, {s}, any, "dot");
  if (any) {
    A::on_backward(out, [&t, ai = a.id(), bi = b.id(), oi = out.id()] {
      const double g = A::grad(t, oi)[0];
      const auto& na = A::node(t, ai);
      const auto& nb = A::node(t, bi);
      if (na.needs_grad) {
        double* ga = A::grad(t, ai);
        for (size_t i = 0; i < na.size(); ++i) ga[i] += g * nb.val()[i];
      }
      if (nb.needs_grad) {
        double* gb = A::grad(t, bi);
        for (size_t i = 0; i < nb.size(); ++i) gb[i] += g * na.val()[i];
      }
    });
  }
  return out;
}

Var pick(Var a, size_t i) {
  Tape& t = tape_of(a);
  if (i >= a.size()) {
    throw std::invalid_argument("pick: index " + std::to_string(i) + " outside shape " +
                                shape_string(a.shape()));
  }
  Var out = A::make(t, {}, {a.value()[i]}, needs(a), "pick");
  if (needs(a)) {
    A::on_backward(out, [&t, ai = a.id(), oi = out.id(), i] {
      A::grad(t, ai)[i] += A::grad(t, oi)[0];
    });
  }
  return out;
}

Var additive_scores(Var keys, Var query, Var v) {
  Tape& t = tape_of(keys, query);
  tape_of(keys, v);
  const Shape& sk = keys.shape();
  if (sk.size() != 2 || query.shape() != Shape{sk[1]} || v.shape() != Shape{sk[1]}) {
    shape_error("additive_scores", sk, query.shape());
  }
  const size_t n = sk[0], d = sk[1];
  auto K = keys.value();
  auto q = query.value();
  auto w = v.value();
  std::vector<double> act(n * d);
  std::vector<double> y(n, 0.0);
  for (size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (size_t i = 0; i < d; ++i) {
      const double h = std::tanh(K[r * d + i] + q[i]);
      act[r * d + i] = h;
      s += w[i] * h;
    }
    y[r] = s;
  }
  const bool any = needs(keys) || needs(query) || needs(v);
  Var out = A::make(t, {n}, std::move(y), any, "additive_scores");
  if (any) {
    A::on_backward(out, [&t, ki = keys.id(), qi = query.id(), vi = v.id(), oi = out.id(),
                         act = std::move(act), n, d] {
      const double* gy = A::grad(t, oi);
      const auto& nv = A::node(t, vi);
      const double* w = nv.val();
      double* gk = A::node(t, ki).needs_grad ? A::grad(t, ki) : nullptr;
      double* gq = A::node(t, qi).needs_grad ? A::grad(t, qi) : nullptr;
      double* gv = nv.needs_grad ? A::grad(t, vi) : nullptr;
      for (size_t r = 0; r < n; ++r) {
        for (size_t i = 0; i < d; ++i) {
          const double h = act[r * d + i];
          if (gv) gv[i] += gy[r] * h;
          const double g = gy[r] * w[i] * (1.0 - h * h);
          if (gk) gk[r * d + i] += g;
          if (gq) gq[i] += g;
        }
      }
    });
  }
  return out;
}

Var gru_blend(Var gate, Var prev, Var cand) {
  Tape& t = tape_of(gate, prev);
  tape_of(gate, cand);
  if (gate.shape() != prev.shape() || gate.shape() != cand.shape()) {
    shape_error("gru_blend", gate.shape(), prev.shape());
  }
  auto u = gate.value();
  auto p = prev.value();
  auto c = cand.value();
  std::vector<double> y(u.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = (1.0 - u[i]) * p[i] + u[i] * c[i];
  const bool any = needs(gate) || needs(prev) || needs(cand);
  Var out = A::make(t, gate.shape(), std::move(y), any, "gru_blend");
  if (any) {
    A::on_backward(out, [&t, ui = gate.id(), pi = prev.id(), ci = cand.id(), oi = out.id()] {
      const double* gy = A::grad(t, oi);
      const auto& nu = A::node(t, ui);
      const auto& np = A::node(t, pi);
      const auto& nc = A::node(t, ci);
      const double* u = nu.val();
      const double* p = np.val();
      const double* c = nc.val();
      double* gu = nu.needs_grad ? A::grad(t, ui) : nullptr;
      double* gp = np.needs_grad ? A::grad(t, pi) : nullptr;
      double* gc = nc.needs_grad ? A::grad(t, ci) : nullptr;
      for (size_t i = 0; i < nu.size(); ++i) {
        if (gu) gu[i] += gy[i] * (c[i] - p[i]);
        if (gp) gp[i] += gy[i] * (1.0 - u[i]);
        if (gc) gc[i] += gy[i] * u[i];
      }
    });
  }
  return out;
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be below 1");
  Tape& t = tape_of(a);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(a, t.constant(Tensor(a.shape(), std::move(mask))));
}

}  // namespace ad

}  // namespace morphkit
