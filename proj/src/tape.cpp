#include "ct/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace ct {

int Tape::push(Mat value, std::function<void(Tape&, Node&)> pull) {
  Node n;
  n.grad = Mat::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

int Tape::matmul(int a, int b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.cols() != vb.rows()) throw std::invalid_argument("matmul shape mismatch");
  return push(va * vb, [a, b](Tape& t, Node& n) {
    t.grad_ref(a).noalias() += n.grad * t.value(b).transpose();
    t.grad_ref(b).noalias() += t.value(a).transpose() * n.grad;
  });
}

int Tape::add(int a, int b) {
  return push(value(a) + value(b), [a, b](Tape& t, Node& n) {
    t.grad_ref(a) += n.grad;
    t.grad_ref(b) += n.grad;
  });
}

int Tape::sub(int a, int b) {
  return push(value(a) - value(b), [a, b](Tape& t, Node& n) {
    t.grad_ref(a) += n.grad;
    t.grad_ref(b) -= n.grad;
  });
}

int Tape::add_row_broadcast(int a, int row) {
  const Mat& va = value(a);
  const Mat& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != va.cols()) throw std::invalid_argument("broadcast shape mismatch");
  Mat out = va;
  out.rowwise() += vr.row(0);
  return push(std::move(out), [a, row](Tape& t, Node& n) {
    t.grad_ref(a) += n.grad;
    t.grad_ref(row).row(0) += n.grad.colwise().sum();
  });
}

int Tape::relu(int a) {
  Mat out = value(a).cwiseMax(0.0);
  return push(std::move(out), [a](Tape& t, Node& n) {
    const Mat& va = t.value(a);
    t.grad_ref(a).array() += n.grad.array() * (va.array() > 0.0).cast<double>();
  });
}

int Tape::scale(int a, double s) {
  return push(value(a) * s, [a, s](Tape& t, Node& n) { t.grad_ref(a) += s * n.grad; });
}

int Tape::concat_cols(const std::vector<int>& parts) {
  Eigen::Index rows = value(parts[0]).rows(), cols = 0;
  for (int p : parts) {
    if (value(p).rows() != rows) throw std::invalid_argument("concat_cols row mismatch");
    cols += value(p).cols();
  }
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (int p : parts) {
    out.middleCols(off, value(p).cols()) = value(p);
    off += value(p).cols();
  }
  return push(std::move(out), [parts](Tape& t, Node& n) {
    Eigen::Index off2 = 0;
    for (int p : parts) {
      Eigen::Index c = t.value(p).cols();
      t.grad_ref(p) += n.grad.middleCols(off2, c);
      off2 += c;
    }
  });
}

int Tape::gather_rows(int a, std::vector<int> idx) {
  const Mat& va = value(a);
  Mat out(static_cast<Eigen::Index>(idx.size()), va.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = va.row(idx[i]);
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, Node& n) {
    Mat& g = t.grad_ref(a);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

int Tape::scatter_sum_rows(int a, std::vector<int> idx, int out_rows) {
  const Mat& va = value(a);
  if (static_cast<Eigen::Index>(idx.size()) != va.rows())
    throw std::invalid_argument("scatter_sum_rows index count mismatch");
  Mat out = Mat::Zero(out_rows, va.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) += va.row(static_cast<Eigen::Index>(i));
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, Node& n) {
    Mat& g = t.grad_ref(a);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(static_cast<Eigen::Index>(i)) += n.grad.row(idx[i]);
  });
}

int Tape::mul_elem(int a, int b) {
  return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, Node& n) {
    t.grad_ref(a).array() += n.grad.array() * t.value(b).array();
    t.grad_ref(b).array() += n.grad.array() * t.value(a).array();
  });
}

int Tape::masked_mse(int a, const Mat& target, const std::vector<std::uint8_t>& row_mask) {
  const Mat& va = value(a);
  if (va.rows() != target.rows() || va.cols() != target.cols())
    throw std::invalid_argument("masked_mse shape mismatch");
  if (row_mask.size() != static_cast<std::size_t>(va.rows()))
    throw std::invalid_argument("masked_mse mask size mismatch");
  double count = 0;
  double acc = 0;
  for (Eigen::Index r = 0; r < va.rows(); ++r) {
    if (!row_mask[static_cast<std::size_t>(r)]) continue;
    acc += (va.row(r) - target.row(r)).squaredNorm();
    count += static_cast<double>(va.cols());
  }
  if (count == 0) throw std::invalid_argument("masked_mse: empty mask");
  Mat out(1, 1);
  out(0, 0) = acc / count;
  return push(std::move(out), [a, target, row_mask, count](Tape& t, Node& n) {
    double w = 2.0 * n.grad(0, 0) / count;
    Mat& g = t.grad_ref(a);
    const Mat& va2 = t.value(a);
    for (Eigen::Index r = 0; r < va2.rows(); ++r)
      if (row_mask[static_cast<std::size_t>(r)]) g.row(r) += w * (va2.row(r) - target.row(r));
  });
}

int Tape::sum(int a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), [a](Tape& t, Node& n) { t.grad_ref(a).array() += n.grad(0, 0); });
}

void Tape::run_backward(int root) {
  // nodes are already in topological order of construction
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.pull && n.grad.cwiseAbs().sum() != 0.0) n.pull(*this, n);
  }
}

void Tape::backward(int root) {
  Node& n = nodes_[static_cast<std::size_t>(root)];
  n.grad.array() += 1.0;
  run_backward(root);
}

void Tape::backward(int root, const Mat& seed) {
  inject_grad(root, seed);
  run_backward(root);
}

void Tape::inject_grad(int id, const Mat& seed) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (seed.rows() != n.value.rows() || seed.cols() != n.value.cols())
    throw std::invalid_argument("backward seed shape mismatch");
  n.grad += seed;
}

void Tape::backward_injected() {
  if (!nodes_.empty()) run_backward(static_cast<int>(nodes_.size()) - 1);
}

void Tape::clear() { nodes_.clear(); }

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam size mismatch");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1 - beta2_) * grads[i] * grads[i];
    params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

void Adam::compact(const std::vector<std::uint8_t>& keep) {
  if (m_.empty()) return;
  if (keep.size() != m_.size()) throw std::invalid_argument("adam compact size mismatch");
  std::size_t w = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    m_[w] = m_[i];
    v_[w] = v_[i];
    ++w;
  }
  m_.resize(w);
  v_.resize(w);
}

void Adam::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

}  // namespace ct
