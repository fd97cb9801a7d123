#pragma once

#include <array>
#include <string>
#include <vector>

#include "sddkit/nn.hpp"

namespace sddkit {

struct ModelConfig {
  int num_classes = 4;
  int width_mult = 1;
  nn::NormMode norm_mode = nn::NormMode::batch_renorm;

  bool operator==(const ModelConfig&) const = default;
};

// conv -> norm -> leaky; the building block everywhere except the final
// head convolutions.
template <typename T>
struct ConvBlockT {
  nn::Conv2dT<T> conv;
  nn::NormT<T> norm;
  nn::LeakyReluT<T> act;

  void build(const std::string& name, int in, int out, int k, int stride,
             nn::NormMode mode);
  TensorT<T> forward(const TensorT<T>& x, nn::Phase phase);
  TensorT<T> backward(const TensorT<T>& dy);
  void params(std::vector<nn::ParamT<T>*>& out);
};

// x + conv3x3(conv1x1(x)); the 1x1 halves the channels, the 3x3 restores them.
template <typename T>
struct ResidualUnitT {
  ConvBlockT<T> reduce, expand;

  void build(const std::string& name, int channels, nn::NormMode mode);
  TensorT<T> forward(const TensorT<T>& x, nn::Phase phase);
  TensorT<T> backward(const TensorT<T>& dy);
  void params(std::vector<nn::ParamT<T>*>& out);
};

// Small residual backbone (five stride-2 downsamples, six residual units over
// the last four stages) with a top-down neck and three prediction heads.
// forward() returns raw grids [N, H_l, W_l, 3*(5+C)] for strides {8, 16, 32}
// at levels {0, 1, 2}.
template <typename T>
struct DetectorModelT {
  ModelConfig cfg;
  std::array<int, 6> channels{};  // stem, d1..d5 output widths

  ConvBlockT<T> stem, down1, down2, down3, down4, down5;
  ResidualUnitT<T> res2, res3a, res3b, res4a, res4b, res5;
  ConvBlockT<T> n5, head5, t5, n4, head4, t4, n3, head3;
  nn::Conv2dT<T> out5, out4, out3;
  nn::Upsample2xT<T> up5, up4;
  nn::ConcatT<T> cat4, cat3;

  int out_channels() const { return 3 * (5 + cfg.num_classes); }

  std::array<TensorT<T>, 3> forward(const TensorT<T>& images, nn::Phase phase);
  // dgrids ordered like forward's output; accumulates parameter grads.
  TensorT<T> backward(const std::array<TensorT<T>, 3>& dgrids);

  std::vector<nn::ParamT<T>*> params();
  // params plus norm moving statistics, in checkpoint order
  std::vector<std::pair<std::string, TensorT<T>*>> named_tensors();
  void set_update_stats(bool update);
  size_t param_count();
};

using DetectorModel = DetectorModelT<float>;

template <typename T>
DetectorModelT<T> build_toy_detector(const ModelConfig& cfg);

template <typename T>
void xavier_init(DetectorModelT<T>& model, uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoint file: "SDDKIT1\n" header, u64-le manifest length, manifest JSON
// ({"tensors": {name: {shape, dtype, offset}}, "meta": {...}}), then a
// little-endian float32 payload blob.

inline constexpr char kCheckpointHeader[8] = {'S', 'D', 'D', 'K', 'I', 'T', '1', '\n'};

// extra_meta must be a JSON object; a "model" entry is added from cfg.
void save_checkpoint(const std::string& path, DetectorModel& model,
                     const std::string& extra_meta_json = "{}", int epoch = 0);

struct LoadedCheckpoint {
  DetectorModel model;
  std::string meta_json;  // full meta object, including "model" and "epoch"
  int epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copy tensors from a checkpoint into an existing model. When backbone_only,
// restores names under "backbone." and leaves the rest untouched. Missing
// names or shape mismatches raise an error naming the tensor.
void restore_from_checkpoint(DetectorModel& model, const std::string& path,
                             bool backbone_only);

}  // namespace sddkit
