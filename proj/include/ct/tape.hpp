#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

namespace ct {

using Mat = Eigen::MatrixXd;

// Recorded computation graph over matrix-valued nodes with reverse-mode
// accumulation. Nodes are referenced by index; leaves are inputs (parameters
// or constants). One tape instance is single-threaded; parallel training runs
// one tape per worker.
class Tape {
 public:
  int leaf(Mat value);

  int matmul(int a, int b);
  int add(int a, int b);                 // same shape
  int sub(int a, int b);                 // same shape
  int add_row_broadcast(int a, int row); // (r x c) + (1 x c)
  int relu(int a);
  int scale(int a, double s);
  int concat_cols(const std::vector<int>& parts);
  int gather_rows(int a, std::vector<int> idx);
  int scatter_sum_rows(int a, std::vector<int> idx, int out_rows);  // out[idx[i]] += a[i]
  int mul_elem(int a, int b);
  // mean over selected rows of the squared difference to a constant target
  int masked_mse(int a, const Mat& target, const std::vector<std::uint8_t>& row_mask);
  int sum(int a);

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  Mat& leaf_value(int id) { return nodes_[static_cast<std::size_t>(id)].value; }

  // Reverse pass from `root` (grad seeded with ones, or the supplied
  // matrix). Grads accumulate across multiple calls until reset.
  void backward(int root);
  void backward(int root, const Mat& seed);
  // Multi-output form: seed any number of nodes, then run one reverse pass.
  void inject_grad(int id, const Mat& seed);
  void backward_injected();

  void clear();         // drops all nodes
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, Node&)> pull;  // pushes node.grad into children
  };
  int push(Mat value, std::function<void(Tape&, Node&)> pull);
  void run_backward(int root);
  Mat& grad_ref(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  std::vector<Node> nodes_;
};

// Adam update rule over a flat parameter vector.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step(std::vector<double>& params, const std::vector<double>& grads);
  // Drops optimizer state for removed entries (used when pruning).
  void compact(const std::vector<std::uint8_t>& keep);
  void reset();

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace ct
