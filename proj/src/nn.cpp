#include "mapf/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mapf/common.hpp"

namespace mapf::nn {

Param* ParamSet::add(const std::string& name, int rows, int cols) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  Param* raw = p.get();
  storage_.push_back(std::move(p));
  order_.push_back(raw);
  by_name_[name] = raw;
  return raw;
}

Param* ParamSet::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Param* ParamSet::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

Param& ParamSet::at(const std::string& name) {
  Param* p = find(name);
  if (!p) throw std::out_of_range("no parameter named " + name);
  return *p;
}

size_t ParamSet::total_size() const {
  size_t n = 0;
  for (const Param* p : order_) n += static_cast<size_t>(p->value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (Param* p : order_) p->grad.setZero();
}

double ParamSet::grad_norm() const {
  double s = 0.0;
  for (const Param* p : order_) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

void ParamSet::scale_grad(double s) {
  for (Param* p : order_) p->grad *= s;
}

bool ParamSet::all_finite() const {
  for (const Param* p : order_) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  for (Param* p : order_) {
    const Param* q = other.find(p->name);
    if (!q || q->value.rows() != p->value.rows() || q->value.cols() != p->value.cols()) {
      throw std::invalid_argument("parameter sets differ at " + p->name);
    }
    p->value = q->value;
  }
}

Linear::Linear(ParamSet& ps, const std::string& name, int in, int out, bool bias)
    : in_(in), out_(out) {
  w_ = ps.add(name + ".weight", out, in);
  if (bias) b_ = ps.add(name + ".bias", 1, out);
}

Mat Linear::forward(const Mat& x) const {
  if (x.cols() != in_) {
    throw ShapeError(w_->name + ": expected " + std::to_string(in_) + " input columns, got " +
                     std::to_string(x.cols()));
  }
  Mat y = x * w_->value.transpose();
  if (b_) y.rowwise() += b_->value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) const {
  w_->grad.noalias() += dy.transpose() * x;
  if (b_) b_->grad.row(0) += dy.colwise().sum();
  return dy * w_->value;
}

void Linear::init(std::mt19937_64& rng, double gain) {
  std::normal_distribution<double> nd(0.0, gain / std::sqrt(static_cast<double>(in_)));
  for (Eigen::Index i = 0; i < w_->value.size(); ++i) w_->value.data()[i] = nd(rng);
  if (b_) b_->value.setZero();
}

GruCell::GruCell(ParamSet& ps, const std::string& name, int in, int hidden)
    : in_(in), hidden_(hidden) {
  wi_ = ps.add(name + ".w_input", 3 * hidden, in);
  wh_ = ps.add(name + ".w_hidden", 3 * hidden, hidden);
  bi_ = ps.add(name + ".b_input", 1, 3 * hidden);
  bh_ = ps.add(name + ".b_hidden", 1, 3 * hidden);
}

Mat GruCell::forward(const Mat& x, const Mat& h, Cache* cache) const {
  if (x.cols() != in_ || h.cols() != hidden_ || x.rows() != h.rows()) {
    throw ShapeError(wi_->name + ": input/hidden shape mismatch");
  }
  const int H = hidden_;
  Mat gi = x * wi_->value.transpose();
  gi.rowwise() += bi_->value.row(0);
  Mat gh = h * wh_->value.transpose();
  gh.rowwise() += bh_->value.row(0);
  Mat r = sigmoid(gi.leftCols(H) + gh.leftCols(H));
  Mat z = sigmoid(gi.middleCols(H, H) + gh.middleCols(H, H));
  Mat hn = gh.rightCols(H);
  Mat n = (gi.rightCols(H).array() + r.array() * hn.array()).tanh().matrix();
  Mat out = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
  if (cache) {
    cache->x = x;
    cache->h = h;
    cache->r = r;
    cache->z = z;
    cache->n = n;
    cache->hn = hn;
    cache->out = out;
  }
  return out;
}

std::pair<Mat, Mat> GruCell::backward(const Cache& c, const Mat& dout) const {
  const int H = hidden_;
  const auto R = c.x.rows();
  Mat dn = (dout.array() * (1.0 - c.z.array())).matrix();
  Mat dz = (dout.array() * (c.h.array() - c.n.array())).matrix();
  Mat dh = (dout.array() * c.z.array()).matrix();
  Mat dn_pre = (dn.array() * (1.0 - c.n.array().square())).matrix();
  Mat dr = (dn_pre.array() * c.hn.array()).matrix();
  Mat dhn = (dn_pre.array() * c.r.array()).matrix();
  Mat dr_pre = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();
  Mat dz_pre = (dz.array() * c.z.array() * (1.0 - c.z.array())).matrix();

  Mat dgi(R, 3 * H);
  dgi << dr_pre, dz_pre, dn_pre;
  Mat dgh(R, 3 * H);
  dgh << dr_pre, dz_pre, dhn;

  wi_->grad.noalias() += dgi.transpose() * c.x;
  bi_->grad.row(0) += dgi.colwise().sum();
  wh_->grad.noalias() += dgh.transpose() * c.h;
  bh_->grad.row(0) += dgh.colwise().sum();
  Mat dx = dgi * wi_->value;
  dh.noalias() += dgh * wh_->value;
  return {dx, dh};
}

void GruCell::init(std::mt19937_64& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden_));
  std::uniform_real_distribution<double> u(-k, k);
  for (Param* p : {wi_, wh_}) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = u(rng);
  }
  bi_->value.setZero();
  bh_->value.setZero();
}

LayerNorm::LayerNorm(ParamSet& ps, const std::string& name, int dim, double eps)
    : dim_(dim), eps_(eps) {
  gain_ = ps.add(name + ".gain", 1, dim);
  shift_ = ps.add(name + ".shift", 1, dim);
}

void LayerNorm::init() {
  gain_->value.setOnes();
  shift_->value.setZero();
}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  if (x.cols() != dim_) throw ShapeError(gain_->name + ": width mismatch");
  Vec mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  Vec var = centered.array().square().rowwise().mean();
  Vec inv = (var.array() + eps_).rsqrt();
  Mat xhat = centered.array().colwise() * inv.array();
  Mat y = xhat.array().rowwise() * gain_->value.row(0).array();
  y.rowwise() += shift_->value.row(0);
  if (cache) {
    cache->xhat = xhat;
    cache->inv_std = inv;
  }
  return y;
}

Mat LayerNorm::backward(const Cache& c, const Mat& dy) const {
  gain_->grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  shift_->grad.row(0) += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * gain_->value.row(0).array();
  const double D = static_cast<double>(dim_);
  Vec sum_d = dxhat.rowwise().sum();
  Vec sum_dx = (dxhat.array() * c.xhat.array()).rowwise().sum();
  Mat dx = (D * dxhat.array() - c.xhat.array().colwise() * sum_dx.array()).colwise() -
           sum_d.array();
  dx = dx.array().colwise() * (c.inv_std.array() / D);
  return dx;
}

Mat tanh_forward(const Mat& x) { return x.array().tanh().matrix(); }

Mat tanh_backward(const Mat& y, const Mat& dy) {
  return (dy.array() * (1.0 - y.array().square())).matrix();
}

Mat sigmoid(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Adam::Adam(ParamSet& ps, AdamConfig cfg) : ps_(&ps), cfg_(cfg) {
  for (Param* p : ps.params()) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& params = ps_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p->grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -=
        cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

namespace {

constexpr char kMagic[8] = {'M', 'A', 'P', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t lo = get_u32(in);
  std::uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

std::string get_string(std::istream& in) {
  std::uint32_t len = get_u32(in);
  if (len > (1u << 24)) throw CheckpointError("implausible string length in checkpoint");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw CheckpointError("truncated checkpoint");
  return s;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Header {
  std::uint64_t hash = 0;
  std::string config;
};

Header read_header(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Header h;
  h.hash = get_u64(in);
  h.config = get_string(in);
  return h;
}

}  // namespace

std::uint64_t config_hash(const std::string& config_text) {
  Fnv1a h;
  h.add(config_text);
  return h.digest();
}

void save_checkpoint(const ParamSet& ps, const std::string& config_text,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u64(out, config_hash(config_text));
  put_string(out, config_text);
  put_u32(out, static_cast<std::uint32_t>(ps.params().size()));
  for (const Param* p : ps.params()) {
    put_string(out, p->name);
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        float f = static_cast<float>(p->value(r, c));
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
      }
    }
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

std::string read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  return read_header(in).config;
}

void load_checkpoint(ParamSet& ps, const std::string& expected_config_text,
                     const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  Header h = read_header(in);
  if (h.hash != config_hash(expected_config_text) || h.hash != config_hash(h.config)) {
    throw CheckpointError("checkpoint config hash mismatch: " + path +
                          " was written for a different model configuration");
  }
  std::uint32_t count = get_u32(in);
  std::map<std::string, Mat> loaded;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = get_string(in);
    std::uint32_t rows = get_u32(in);
    std::uint32_t cols = get_u32(in);
    Mat m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        std::uint32_t bits = get_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        m(r, c) = f;
      }
    }
    loaded.emplace(std::move(name), std::move(m));
  }
  for (Param* p : ps.params()) {
    auto it = loaded.find(p->name);
    if (it == loaded.end()) throw CheckpointError("checkpoint lacks parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw CheckpointError("shape mismatch for parameter " + p->name);
    }
    p->value = it->second;
  }
}

}  // namespace mapf::nn
