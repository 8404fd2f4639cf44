#include "ntmm/model.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "ntmm/serialize.hpp"

namespace ntmm {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4B43544Eu;  // "NTCK"
constexpr std::uint32_t kCheckpointVersion = 1;

Tensor gaussian_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.gaussian(0.0, stddev);
  return t;
}

Tensor unit_rows(int rows, int cols, Rng& rng) {
  Tensor t({rows, cols});
  for (int i = 0; i < rows; ++i) {
    double norm = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double x = rng.gaussian();
      t.at(i, j) = x;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (int j = 0; j < cols; ++j) t.at(i, j) /= norm;
  }
  return t;
}

}  // namespace

void ModelDims::validate() const {
  if (d_v < 1 || d_a < 1 || d < 1 || enc_hidden < 1 || clf_hidden < 1)
    throw std::invalid_argument("model dims: all layer sizes must be positive");
  if (K < 2) throw std::invalid_argument("model dims: K must be >= 2");
  if (ae_hidden > ae_input)
    throw std::invalid_argument("model dims: autoencoder hidden size must not exceed its input width");
  if (ae_hidden < 1) throw std::invalid_argument("model dims: autoencoder hidden size must be positive");
}

ModelState ModelState::init(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  ModelState m;
  m.dims_ = dims;
  Rng rng(seed);
  auto he = [&](int fan_in, std::vector<int> shape) {
    return gaussian_tensor(std::move(shape), std::sqrt(2.0 / fan_in), rng);
  };
  // ReLU-layer biases start slightly positive so no unit is born dead;
  // a fully dead hidden row would zero a feature or reconstruction row,
  // which downstream cosine similarities reject.
  m.params_["enc_v.W1"] = he(dims.d_v, {dims.d_v, dims.enc_hidden});
  m.params_["enc_v.b1"] = Tensor::full({dims.enc_hidden}, 0.01);
  m.params_["enc_v.W2"] = he(dims.enc_hidden, {dims.enc_hidden, dims.d});
  m.params_["enc_v.b2"] = Tensor::full({dims.d}, 0.01);
  m.params_["enc_a.W1"] = he(dims.d_a, {dims.d_a, dims.enc_hidden});
  m.params_["enc_a.b1"] = Tensor::full({dims.enc_hidden}, 0.01);
  m.params_["enc_a.W2"] = he(dims.enc_hidden, {dims.enc_hidden, dims.d});
  m.params_["enc_a.b2"] = Tensor::full({dims.d}, 0.01);
  m.params_["clf.W1"] = he(2 * dims.d, {2 * dims.d, dims.clf_hidden});
  m.params_["clf.b1"] = Tensor::full({dims.clf_hidden}, 0.01);
  m.params_["clf.W2"] = he(dims.clf_hidden, {dims.clf_hidden, dims.K});
  m.params_["clf.b2"] = Tensor({dims.K});
  m.params_[kProtoInstance] = unit_rows(dims.K, dims.d, rng);
  m.params_[kProtoCategory] = unit_rows(dims.K, dims.d, rng);
  m.params_["ae.W"] = he(dims.ae_input, {dims.ae_input, dims.ae_hidden});
  m.params_["ae.b_enc"] = Tensor::full({dims.ae_hidden}, 0.01);
  // Nonzero decoder bias keeps reconstruction rows off exact zero even if a
  // whole hidden row dies.
  m.params_["ae.b_dec"] = Tensor::full({dims.ae_input}, 0.01);
  return m;
}

Tape::NodeId ModelState::encode(Tape& tape, ParamBinding& bind, Modality m, Tape::NodeId x) const {
  const char* prefix = (m == Modality::kVisual) ? "enc_v" : "enc_a";
  const int want = (m == Modality::kVisual) ? dims_.d_v : dims_.d_a;
  const Tensor& in = tape.value(x);
  if (in.rank() != 2 || in.cols() != want) {
    throw std::invalid_argument(std::string("encode: ") + prefix + " expects [B," + std::to_string(want) +
                                "], got " + in.shape_str());
  }
  auto p = [&](const char* suffix) { return bind(std::string(prefix) + "." + suffix); };
  Tape::NodeId h = tape.relu(tape.add_rowvec(tape.matmul(x, p("W1")), p("b1")));
  return tape.add_rowvec(tape.matmul(h, p("W2")), p("b2"));
}

Tape::NodeId ModelState::classify(Tape& tape, ParamBinding& bind, Tape::NodeId z_v, Tape::NodeId z_a) const {
  const Tensor& zv = tape.value(z_v);
  const Tensor& za = tape.value(z_a);
  if (zv.rank() != 2 || za.rank() != 2 || zv.cols() != dims_.d || za.cols() != dims_.d || zv.rows() != za.rows()) {
    throw std::invalid_argument("classify: expected matching [B," + std::to_string(dims_.d) + "] features, got " +
                                zv.shape_str() + " and " + za.shape_str());
  }
  Tape::NodeId fused = tape.concat_cols(z_v, z_a);
  Tape::NodeId h = tape.relu(tape.add_rowvec(tape.matmul(fused, bind("clf.W1")), bind("clf.b1")));
  return tape.add_rowvec(tape.matmul(h, bind("clf.W2")), bind("clf.b2"));
}

std::pair<Tape::NodeId, Tape::NodeId> ModelState::autoencode(Tape& tape, ParamBinding& bind, Tape::NodeId P) const {
  const Tensor& in = tape.value(P);
  if (in.rank() != 2 || in.cols() != dims_.ae_input) {
    throw std::invalid_argument("autoencode: expected [*," + std::to_string(dims_.ae_input) + "] input, got " +
                                in.shape_str());
  }
  Tape::NodeId W = bind("ae.W");
  Tape::NodeId hidden = tape.relu(tape.add_rowvec(tape.matmul(P, W), bind("ae.b_enc")));
  Tape::NodeId recon = tape.add_rowvec(tape.matmul_nt(hidden, W), bind("ae.b_dec"));
  return {hidden, recon};
}

Tensor ModelState::encode(Modality m, const Tensor& x) const {
  Tape tape;
  ParamBinding bind(tape, params_);
  return tape.value(encode(tape, bind, m, tape.constant(x)));
}

Tensor ModelState::classify(const Tensor& z_v, const Tensor& z_a) const {
  Tape tape;
  ParamBinding bind(tape, params_);
  return tape.value(classify(tape, bind, tape.constant(z_v), tape.constant(z_a)));
}

int normalize_prototype_bank(Tensor& bank, Rng& rng) {
  int reinitialized = 0;
  const int rows = bank.rows(), cols = bank.cols();
  for (int i = 0; i < rows; ++i) {
    double norm = 0.0;
    for (int j = 0; j < cols; ++j) norm += bank.at(i, j) * bank.at(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      ++reinitialized;
      double fresh = 0.0;
      for (int j = 0; j < cols; ++j) {
        bank.at(i, j) = rng.gaussian();
        fresh += bank.at(i, j) * bank.at(i, j);
      }
      norm = std::sqrt(fresh);
    }
    for (int j = 0; j < cols; ++j) bank.at(i, j) /= norm;
  }
  return reinitialized;
}

int ModelState::normalize_prototypes(Rng& rng) {
  int n = normalize_prototype_bank(params_[kProtoInstance], rng);
  n += normalize_prototype_bank(params_[kProtoCategory], rng);
  if (n > 0) std::cerr << "warning: re-initialized " << n << " zero prototype(s)\n";
  return n;
}

void ModelState::save(const std::filesystem::path& path) const {
  BinWriter w;
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(dims_.d_v));
  w.u32(static_cast<std::uint32_t>(dims_.d_a));
  w.u32(static_cast<std::uint32_t>(dims_.d));
  w.u32(static_cast<std::uint32_t>(dims_.enc_hidden));
  w.u32(static_cast<std::uint32_t>(dims_.clf_hidden));
  w.u32(static_cast<std::uint32_t>(dims_.K));
  w.u32(static_cast<std::uint32_t>(dims_.ae_input));
  w.u32(static_cast<std::uint32_t>(dims_.ae_hidden));
  w.u64(params_.size());
  for (const auto& [name, t] : params_) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f64_vec(t.vec());
  }
  w.write_file(path, kCheckpointMagic);
}

ModelState ModelState::load(const std::filesystem::path& path) {
  BinReader r(path, kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version) + " in '" +
                             path.string() + "'");
  }
  ModelState m;
  m.dims_.d_v = static_cast<int>(r.u32());
  m.dims_.d_a = static_cast<int>(r.u32());
  m.dims_.d = static_cast<int>(r.u32());
  m.dims_.enc_hidden = static_cast<int>(r.u32());
  m.dims_.clf_hidden = static_cast<int>(r.u32());
  m.dims_.K = static_cast<int>(r.u32());
  m.dims_.ae_input = static_cast<int>(r.u32());
  m.dims_.ae_hidden = static_cast<int>(r.u32());
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const int rank = static_cast<int>(r.u32());
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
    m.params_[name] = Tensor(shape, r.f64_vec());
  }
  return m;
}

}  // namespace ntmm
