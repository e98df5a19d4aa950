#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mseva::model {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;  // same shape as value; accumulated by Graph::backward
};

/// Named parameters in insertion order. Insertion order is the serialization
/// and optimizer order, so it must not depend on anything but the config.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Mat init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> index_;
};

/// Reverse-mode tape for one forward pass. Node ids index into the tape;
/// constants do not receive gradients.
class Graph {
 public:
  using Id = int;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Id constant(Mat value);
  Id param(Parameter& p);

  const Mat& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar(Id id) const { return value(id)(0, 0); }

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  /// a (n x m) + row (1 x m) broadcast over rows.
  Id add_row(Id a, Id row);
  Id scale(Id a, double s);
  Id gelu(Id a);
  /// Row-wise softmax.
  Id softmax_rows(Id a);
  /// Row-wise layer norm with learned gain/bias rows (1 x m).
  Id layer_norm_rows(Id a, Id gain, Id bias, double eps = 1e-5);
  Id transpose(Id a);
  Id slice_cols(Id a, Eigen::Index start, Eigen::Index count);
  Id concat_cols(const std::vector<Id>& parts);
  Id concat_rows(const std::vector<Id>& parts);
  /// out(r, c) = flat(a)[index[c * rows + r]] (column-major), or 0 when the
  /// index is negative. Used for im2col.
  Id gather(Id a, std::shared_ptr<const std::vector<std::int64_t>> index, Eigen::Index rows, Eigen::Index cols);
  /// -log softmax(logits)[label] for a 1 x K row.
  Id cross_entropy(Id logits, int label);

  /// Seeds d(out)/d(out) = 1 for a 1x1 node, runs the tape backwards and adds
  /// the result into each Parameter::grad.
  void backward(Id out);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void()> backward;
  };

  Id push(Mat value, bool requires_grad);
  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  bool needs(Id id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  Mat& grad_of(Id id);

  std::deque<Node> nodes_;
};

}  // namespace mseva::model
