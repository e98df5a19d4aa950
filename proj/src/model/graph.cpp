#include "mseva/model/graph.hpp"

#include <cmath>
#include <numbers>

#include "mseva/common/error.hpp"

namespace mseva::model {

Parameter& ParameterSet::add(const std::string& name, Mat init) {
  if (index_.contains(name)) throw Error(ErrorCode::InvalidConfig, "duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Mat::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  index_[name] = p.get();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::InvalidConfig, "no parameter " + name);
  return *it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::InvalidConfig, "no parameter " + name);
  return *it->second;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

Graph::Id Graph::push(Mat value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Mat& Graph::grad_of(Id id) {
  Node& n = node(id);
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Graph::Id Graph::constant(Mat value) { return push(std::move(value), false); }

Graph::Id Graph::param(Parameter& p) {
  const Id id = push(p.value, true);
  node(id).param = &p;
  return id;
}

namespace {
void check(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}
}  // namespace

Graph::Id Graph::matmul(Id a, Id b) {
  check(value(a).cols() == value(b).rows(), "matmul inner dimensions differ");
  const Id out = push(value(a) * value(b), needs(a) || needs(b));
  node(out).backward = [this, a, b, out] {
    const Mat& g = node(out).grad;
    if (needs(a)) grad_of(a).noalias() += g * value(b).transpose();
    if (needs(b)) grad_of(b).noalias() += value(a).transpose() * g;
  };
  return out;
}

Graph::Id Graph::add(Id a, Id b) {
  check(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shapes differ");
  const Id out = push(value(a) + value(b), needs(a) || needs(b));
  node(out).backward = [this, a, b, out] {
    const Mat& g = node(out).grad;
    if (needs(a)) grad_of(a) += g;
    if (needs(b)) grad_of(b) += g;
  };
  return out;
}

Graph::Id Graph::add_row(Id a, Id row) {
  check(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row shape");
  Mat v = value(a);
  v.rowwise() += value(row).row(0);
  const Id out = push(std::move(v), needs(a) || needs(row));
  node(out).backward = [this, a, row, out] {
    const Mat& g = node(out).grad;
    if (needs(a)) grad_of(a) += g;
    if (needs(row)) grad_of(row) += g.colwise().sum();
  };
  return out;
}

Graph::Id Graph::scale(Id a, double s) {
  const Id out = push(value(a) * s, needs(a));
  node(out).backward = [this, a, s, out] {
    if (needs(a)) grad_of(a) += node(out).grad * s;
  };
  return out;
}

namespace {
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

Graph::Id Graph::gelu(Id a) {
  const Mat& x = value(a);
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x(i);
    y(i) = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v)));
  }
  const Id out = push(std::move(y), needs(a));
  node(out).backward = [this, a, out] {
    if (!needs(a)) return;
    const Mat& x = value(a);
    const Mat& g = node(out).grad;
    Mat& ga = grad_of(a);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x(i);
      const double t = std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v));
      const double dt = (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
      ga(i) += g(i) * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  };
  return out;
}

Graph::Id Graph::softmax_rows(Id a) {
  const Mat& x = value(a);
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const Id out = push(std::move(y), needs(a));
  node(out).backward = [this, a, out] {
    if (!needs(a)) return;
    const Mat& y = value(out);
    const Mat& g = node(out).grad;
    const Eigen::VectorXd dots = (g.array() * y.array()).rowwise().sum();
    grad_of(a) += (y.array() * (g.colwise() - dots).array()).matrix();
  };
  return out;
}

Graph::Id Graph::layer_norm_rows(Id a, Id gain, Id bias, double eps) {
  const Mat& x = value(a);
  const auto cols = x.cols();
  check(value(gain).cols() == cols && value(bias).cols() == cols, "layer_norm parameter shape");
  auto xhat = std::make_shared<Mat>(x.rows(), cols);
  auto inv_std = std::make_shared<Eigen::VectorXd>(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (x.row(r).array() - mean) * (*inv_std)(r);
  }
  Mat y = xhat->array().rowwise() * value(gain).row(0).array();
  y.rowwise() += value(bias).row(0);
  const Id out = push(std::move(y), needs(a) || needs(gain) || needs(bias));
  node(out).backward = [this, a, gain, bias, out, xhat, inv_std] {
    const Mat& g = node(out).grad;
    if (needs(gain)) grad_of(gain) += (g.array() * xhat->array()).colwise().sum().matrix();
    if (needs(bias)) grad_of(bias) += g.colwise().sum();
    if (!needs(a)) return;
    const Mat dxhat = g.array().rowwise() * value(gain).row(0).array();
    const double n = static_cast<double>(dxhat.cols());
    Mat& ga = grad_of(a);
    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
      const double mean_d = dxhat.row(r).sum() / n;
      const double mean_dx = dxhat.row(r).dot(xhat->row(r)) / n;
      ga.row(r) += ((*inv_std)(r) * (dxhat.row(r).array() - mean_d - xhat->row(r).array() * mean_dx)).matrix();
    }
  };
  return out;
}

Graph::Id Graph::transpose(Id a) {
  const Id out = push(value(a).transpose(), needs(a));
  node(out).backward = [this, a, out] {
    if (needs(a)) grad_of(a) += node(out).grad.transpose();
  };
  return out;
}

Graph::Id Graph::slice_cols(Id a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && start + count <= value(a).cols(), "slice_cols out of range");
  const Id out = push(value(a).middleCols(start, count), needs(a));
  node(out).backward = [this, a, start, count, out] {
    if (needs(a)) grad_of(a).middleCols(start, count) += node(out).grad;
  };
  return out;
}

Graph::Id Graph::concat_cols(const std::vector<Id>& parts) {
  check(!parts.empty(), "concat_cols of nothing");
  const auto rows = value(parts.front()).rows();
  Eigen::Index cols = 0;
  bool any = false;
  for (Id p : parts) {
    check(value(p).rows() == rows, "concat_cols row mismatch");
    cols += value(p).cols();
    any = any || needs(p);
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (Id p : parts) {
    v.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  const Id out = push(std::move(v), any);
  node(out).backward = [this, parts, out] {
    Eigen::Index at = 0;
    for (Id p : parts) {
      const auto c = value(p).cols();
      if (needs(p)) grad_of(p) += node(out).grad.middleCols(at, c);
      at += c;
    }
  };
  return out;
}

Graph::Id Graph::concat_rows(const std::vector<Id>& parts) {
  check(!parts.empty(), "concat_rows of nothing");
  const auto cols = value(parts.front()).cols();
  Eigen::Index rows = 0;
  bool any = false;
  for (Id p : parts) {
    check(value(p).cols() == cols, "concat_rows column mismatch");
    rows += value(p).rows();
    any = any || needs(p);
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (Id p : parts) {
    v.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  const Id out = push(std::move(v), any);
  node(out).backward = [this, parts, out] {
    Eigen::Index at = 0;
    for (Id p : parts) {
      const auto r = value(p).rows();
      if (needs(p)) grad_of(p) += node(out).grad.middleRows(at, r);
      at += r;
    }
  };
  return out;
}

Graph::Id Graph::gather(Id a, std::shared_ptr<const std::vector<std::int64_t>> index, Eigen::Index rows,
                        Eigen::Index cols) {
  check(static_cast<Eigen::Index>(index->size()) == rows * cols, "gather index size");
  const Mat& x = value(a);
  const auto n = x.size();
  Mat v(rows, cols);
  for (Eigen::Index k = 0; k < rows * cols; ++k) {
    const auto src = (*index)[static_cast<std::size_t>(k)];
    check(src < n, "gather index out of range");
    v(k) = src < 0 ? 0.0 : x(src);
  }
  const Id out = push(std::move(v), needs(a));
  node(out).backward = [this, a, index, out] {
    if (!needs(a)) return;
    const Mat& g = node(out).grad;
    Mat& ga = grad_of(a);
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      const auto src = (*index)[static_cast<std::size_t>(k)];
      if (src >= 0) ga(src) += g(k);
    }
  };
  return out;
}

Graph::Id Graph::cross_entropy(Id logits, int label) {
  const Mat& z = value(logits);
  check(z.rows() == 1 && label >= 0 && label < z.cols(), "cross_entropy shape/label");
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  Mat loss(1, 1);
  loss(0, 0) = lse - z(0, label);
  const Id out = push(std::move(loss), needs(logits));
  node(out).backward = [this, logits, label, lse, out] {
    if (!needs(logits)) return;
    Mat p = (value(logits).array() - lse).exp().matrix();
    p(0, label) -= 1.0;
    grad_of(logits) += node(out).grad(0, 0) * p;
  };
  return out;
}

void Graph::backward(Id out) {
  check(value(out).size() == 1, "backward needs a scalar output");
  grad_of(out).setOnes();
  for (auto id = out; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

}  // namespace mseva::model
