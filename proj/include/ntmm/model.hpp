#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "ntmm/params.hpp"
#include "ntmm/rng.hpp"
#include "ntmm/tape.hpp"
#include "ntmm/tensor.hpp"

namespace ntmm {

enum class Modality { kVisual, kAudio };

struct ModelDims {
  int d_v = 48;       // visual input dim
  int d_a = 32;       // audio input dim
  int d = 32;         // common space dim
  int enc_hidden = 64;
  int clf_hidden = 64;
  int K = 10;
  int ae_input = 64;  // category representation length = configured batch size
  int ae_hidden = 32; // must stay below ae_input

  void validate() const;
};

/// All trainable state: two-layer perceptron encoders into the common space,
/// the two-FC fusion classifier (ReLU after the first layer only), the
/// instance and category prototype banks, and the tied-weight autoencoder
/// over category representations.
class ModelState {
 public:
  static ModelState init(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // --- tape builders (differentiable) ------------------------------------
  /// x: [B, d_m] -> [B, d]. Features are not normalized here; similarity
  /// functions normalize where the math requires it.
  Tape::NodeId encode(Tape& tape, ParamBinding& bind, Modality m, Tape::NodeId x) const;

  /// z_v, z_a: [B, d] each -> logits [B, K] over concat(z_v, z_a).
  Tape::NodeId classify(Tape& tape, ParamBinding& bind, Tape::NodeId z_v, Tape::NodeId z_a) const;

  /// P: [K, ae_input] -> (hidden U [K, ae_hidden], reconstruction [K, ae_input]).
  /// Decoder weight is the transpose of the encoder weight; gradients from
  /// both uses accumulate into the single shared matrix.
  std::pair<Tape::NodeId, Tape::NodeId> autoencode(Tape& tape, ParamBinding& bind, Tape::NodeId P) const;

  // --- value-level conveniences (run a throwaway tape) --------------------
  Tensor encode(Modality m, const Tensor& x) const;
  Tensor classify(const Tensor& z_v, const Tensor& z_a) const;

  /// Rescales every prototype in both banks to unit L2 norm in place.
  /// Zero prototypes are re-initialized from `rng` (counted in the return
  /// value and reported on stderr).
  int normalize_prototypes(Rng& rng);

  /// Checksummed binary checkpoint; bit-exact round trip.
  void save(const std::filesystem::path& path) const;
  static ModelState load(const std::filesystem::path& path);

  static constexpr const char* kProtoInstance = "proto.C";
  static constexpr const char* kProtoCategory = "proto.Cprime";

 private:
  ModelDims dims_;
  ParamStore params_;
};

/// Unit-norm rows for a prototype bank; exposed for direct spec-level use.
int normalize_prototype_bank(Tensor& bank, Rng& rng);

}  // namespace ntmm
