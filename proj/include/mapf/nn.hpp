#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mapf::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
};

// Named parameter tensors in registration order. Param addresses are stable
// for the lifetime of the set, so layers keep raw pointers into it.
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;

  Param* add(const std::string& name, int rows, int cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Param& at(const std::string& name);

  std::vector<Param*>& params() { return order_; }
  const std::vector<Param*>& params() const { return order_; }
  size_t total_size() const;

  void zero_grad();
  double grad_norm() const;
  void scale_grad(double s);
  bool all_finite() const;

  // Copies values (not grads) from another set with identical names/shapes.
  void copy_values_from(const ParamSet& other);

 private:
  std::vector<std::unique_ptr<Param>> storage_;
  std::vector<Param*> order_;
  std::map<std::string, Param*> by_name_;
};

// y = x W^T + b, rows are samples. W is (out x in), b is (1 x out).
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in, int out, bool bias = true);

  Mat forward(const Mat& x) const;
  // Accumulates parameter gradients and returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy) const;

  void init(std::mt19937_64& rng, double gain = 1.0);
  int in() const { return in_; }
  int out() const { return out_; }
  Param* weight() const { return w_; }
  Param* bias() const { return b_; }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

// Gated recurrent cell (reset/update/candidate layout as in common GRU
// implementations): h' = (1 - z) * n + z * h.
class GruCell {
 public:
  struct Cache {
    Mat x, h, r, z, n, hn;  // hn = h W_hn^T + b_hn (pre reset gate)
    Mat out;
  };

  GruCell() = default;
  GruCell(ParamSet& ps, const std::string& name, int in, int hidden);

  Mat forward(const Mat& x, const Mat& h, Cache* cache) const;
  // Returns {dL/dx, dL/dh}.
  std::pair<Mat, Mat> backward(const Cache& cache, const Mat& dout) const;

  void init(std::mt19937_64& rng);
  int hidden() const { return hidden_; }

 private:
  Param* wi_ = nullptr;  // (3H x in): r, z, n blocks
  Param* wh_ = nullptr;  // (3H x H)
  Param* bi_ = nullptr;
  Param* bh_ = nullptr;
  int in_ = 0;
  int hidden_ = 0;
};

class LayerNorm {
 public:
  struct Cache {
    Mat xhat;
    Vec inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParamSet& ps, const std::string& name, int dim, double eps = 1e-5);

  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dy) const;
  void init();

 private:
  Param* gain_ = nullptr;
  Param* shift_ = nullptr;
  int dim_ = 0;
  double eps_ = 1e-5;
};

// Elementwise helpers used across modules.
Mat tanh_forward(const Mat& x);
// dy * (1 - y^2) given y = tanh(x).
Mat tanh_backward(const Mat& y, const Mat& dy);
Mat sigmoid(const Mat& x);
double sigmoid(double x);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamSet& ps, AdamConfig cfg);
  void step();
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

 private:
  ParamSet* ps_;
  AdamConfig cfg_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long t_ = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Versioned container: magic, version, config hash, config text, then per
// parameter name/shape and a row-major little-endian float32 payload.
void save_checkpoint(const ParamSet& ps, const std::string& config_text,
                     const std::string& path);
// Throws CheckpointError when the magic/version is wrong, the stored config
// hash differs from `expected_config_text`'s, or a parameter is missing or
// mis-shaped.
void load_checkpoint(ParamSet& ps, const std::string& expected_config_text,
                     const std::string& path);
// Reads only the embedded config text.
std::string read_checkpoint_config(const std::string& path);

std::uint64_t config_hash(const std::string& config_text);

}  // namespace mapf::nn
