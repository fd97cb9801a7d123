#include "sddkit/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sddkit/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

using json = nlohmann::json;

namespace sddkit {

template <typename T>
void ConvBlockT<T>::build(const std::string& name, int in, int out, int k, int stride,
                          nn::NormMode mode) {
  conv.build(name + ".conv", in, out, k, stride, /*bias=*/false);
  norm.build(name + ".norm", out, mode);
}

template <typename T>
TensorT<T> ConvBlockT<T>::forward(const TensorT<T>& x, nn::Phase phase) {
  return act.forward(norm.forward(conv.forward(x), phase));
}

template <typename T>
TensorT<T> ConvBlockT<T>::backward(const TensorT<T>& dy) {
  return conv.backward(norm.backward(act.backward(dy)));
}

template <typename T>
void ConvBlockT<T>::params(std::vector<nn::ParamT<T>*>& out) {
  conv.params(out);
  norm.params(out);
}

template <typename T>
void ResidualUnitT<T>::build(const std::string& name, int channels, nn::NormMode mode) {
  require(channels % 2 == 0, "residual unit: channels must be even, got ", channels);
  reduce.build(name + ".reduce", channels, channels / 2, 1, 1, mode);
  expand.build(name + ".expand", channels / 2, channels, 3, 1, mode);
}

template <typename T>
TensorT<T> ResidualUnitT<T>::forward(const TensorT<T>& x, nn::Phase phase) {
  TensorT<T> y = expand.forward(reduce.forward(x, phase), phase);
  require(y.same_shape(x), "residual unit: block output ", shape_str(y),
          " does not match input ", shape_str(x));
  for (size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  return y;
}

template <typename T>
TensorT<T> ResidualUnitT<T>::backward(const TensorT<T>& dy) {
  TensorT<T> dx = reduce.backward(expand.backward(dy));
  for (size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  return dx;
}

template <typename T>
void ResidualUnitT<T>::params(std::vector<nn::ParamT<T>*>& out) {
  reduce.params(out);
  expand.params(out);
}

template <typename T>
DetectorModelT<T> build_toy_detector(const ModelConfig& cfg) {
  require(cfg.width_mult >= 1, "model: width multiplier must be >= 1, got ",
          cfg.width_mult);
  require(cfg.num_classes >= 1, "model: need at least one category");
  DetectorModelT<T> m;
  m.cfg = cfg;
  const int w = cfg.width_mult;
  m.channels = {8 * w, 16 * w, 24 * w, 32 * w, 48 * w, 64 * w};
  const auto& c = m.channels;
  const nn::NormMode nm = cfg.norm_mode;

  m.stem.build("backbone.stem", 3, c[0], 3, 1, nm);
  m.down1.build("backbone.down1", c[0], c[1], 3, 2, nm);
  m.down2.build("backbone.down2", c[1], c[2], 3, 2, nm);
  m.res2.build("backbone.res2", c[2], nm);
  m.down3.build("backbone.down3", c[2], c[3], 3, 2, nm);
  m.res3a.build("backbone.res3a", c[3], nm);
  m.res3b.build("backbone.res3b", c[3], nm);
  m.down4.build("backbone.down4", c[3], c[4], 3, 2, nm);
  m.res4a.build("backbone.res4a", c[4], nm);
  m.res4b.build("backbone.res4b", c[4], nm);
  m.down5.build("backbone.down5", c[4], c[5], 3, 2, nm);
  m.res5.build("backbone.res5", c[5], nm);

  const int oc = m.out_channels();
  m.n5.build("neck.n5", c[5], c[5] / 2, 1, 1, nm);
  m.head5.build("neck.head5", c[5] / 2, c[5], 3, 1, nm);
  m.out5.build("head.out5", c[5], oc, 1, 1, /*bias=*/true);
  m.t5.build("neck.t5", c[5] / 2, c[4] / 2, 1, 1, nm);
  m.n4.build("neck.n4", c[4] + c[4] / 2, c[4] / 2, 1, 1, nm);
  m.head4.build("neck.head4", c[4] / 2, c[4], 3, 1, nm);
  m.out4.build("head.out4", c[4], oc, 1, 1, /*bias=*/true);
  m.t4.build("neck.t4", c[4] / 2, c[3] / 2, 1, 1, nm);
  m.n3.build("neck.n3", c[3] + c[3] / 2, c[3] / 2, 1, 1, nm);
  m.head3.build("neck.head3", c[3] / 2, c[3], 3, 1, nm);
  m.out3.build("head.out3", c[3], oc, 1, 1, /*bias=*/true);
  return m;
}

template <typename T>
std::array<TensorT<T>, 3> DetectorModelT<T>::forward(const TensorT<T>& images,
                                                     nn::Phase phase) {
  require(images.rank() == 4 && images.dim(3) == 3, "model: expected [N,H,W,3] input, got ",
          shape_str(images));

  TensorT<T> x = stem.forward(images, phase);
  x = down1.forward(x, phase);
  x = res2.forward(down2.forward(x, phase), phase);
  TensorT<T> p3 = res3b.forward(res3a.forward(down3.forward(x, phase), phase), phase);
  TensorT<T> p4 = res4b.forward(res4a.forward(down4.forward(p3, phase), phase), phase);
  TensorT<T> p5 = res5.forward(down5.forward(p4, phase), phase);

  TensorT<T> n5o = n5.forward(p5, phase);
  TensorT<T> g5 = out5.forward(head5.forward(n5o, phase));

  TensorT<T> m4 = cat4.forward(p4, up5.forward(t5.forward(n5o, phase)));
  TensorT<T> n4o = n4.forward(m4, phase);
  TensorT<T> g4 = out4.forward(head4.forward(n4o, phase));

  TensorT<T> m3 = cat3.forward(p3, up4.forward(t4.forward(n4o, phase)));
  TensorT<T> n3o = n3.forward(m3, phase);
  TensorT<T> g3 = out3.forward(head3.forward(n3o, phase));

  nn::check_finite(g3, "head forward (stride 8)");
  nn::check_finite(g4, "head forward (stride 16)");
  nn::check_finite(g5, "head forward (stride 32)");
  return {std::move(g3), std::move(g4), std::move(g5)};
}

template <typename T>
TensorT<T> DetectorModelT<T>::backward(const std::array<TensorT<T>, 3>& dgrids) {
  // level 0 (stride 8) head
  TensorT<T> dn3o = n3.backward(head3.backward(out3.backward(dgrids[0])));
  auto [dp3_lat, du4] = cat3.backward(dn3o);
  TensorT<T> dn4o_lat = t4.backward(up4.backward(du4));

  // level 1 head + lateral
  TensorT<T> dn4o = head4.backward(out4.backward(dgrids[1]));
  for (size_t i = 0; i < dn4o.size(); ++i) dn4o[i] += dn4o_lat[i];
  dn4o = n4.backward(dn4o);
  auto [dp4_lat, du5] = cat4.backward(dn4o);
  TensorT<T> dn5o_lat = t5.backward(up5.backward(du5));

  // level 2 head + lateral
  TensorT<T> dn5o = head5.backward(out5.backward(dgrids[2]));
  for (size_t i = 0; i < dn5o.size(); ++i) dn5o[i] += dn5o_lat[i];
  TensorT<T> dp5 = n5.backward(dn5o);

  // backbone
  TensorT<T> dp4 = down5.backward(res5.backward(dp5));
  for (size_t i = 0; i < dp4.size(); ++i) dp4[i] += dp4_lat[i];
  TensorT<T> dp3 = down4.backward(res4a.backward(res4b.backward(dp4)));
  for (size_t i = 0; i < dp3.size(); ++i) dp3[i] += dp3_lat[i];
  TensorT<T> dx = down3.backward(res3a.backward(res3b.backward(dp3)));
  dx = down2.backward(res2.backward(dx));
  dx = down1.backward(dx);
  return stem.backward(dx);
}

template <typename T>
std::vector<nn::ParamT<T>*> DetectorModelT<T>::params() {
  std::vector<nn::ParamT<T>*> out;
  stem.params(out);
  down1.params(out);
  down2.params(out);
  res2.params(out);
  down3.params(out);
  res3a.params(out);
  res3b.params(out);
  down4.params(out);
  res4a.params(out);
  res4b.params(out);
  down5.params(out);
  res5.params(out);
  n5.params(out);
  head5.params(out);
  out5.params(out);
  t5.params(out);
  n4.params(out);
  head4.params(out);
  out4.params(out);
  t4.params(out);
  n3.params(out);
  head3.params(out);
  out3.params(out);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, TensorT<T>*>> DetectorModelT<T>::named_tensors() {
  std::vector<std::pair<std::string, TensorT<T>*>> out;
  for (nn::ParamT<T>* p : params()) out.emplace_back(p->name, &p->value);
  for (nn::NormT<T>* n :
       {&stem.norm, &down1.norm, &down2.norm, &res2.reduce.norm, &res2.expand.norm,
        &down3.norm, &res3a.reduce.norm, &res3a.expand.norm, &res3b.reduce.norm,
        &res3b.expand.norm, &down4.norm, &res4a.reduce.norm, &res4a.expand.norm,
        &res4b.reduce.norm, &res4b.expand.norm, &down5.norm, &res5.reduce.norm,
        &res5.expand.norm, &n5.norm, &head5.norm, &t5.norm, &n4.norm, &head4.norm,
        &t4.norm, &n3.norm, &head3.norm}) {
    out.emplace_back(n->gamma.name.substr(0, n->gamma.name.size() - 6) + ".moving_mean",
                     &n->moving_mean);
    out.emplace_back(n->gamma.name.substr(0, n->gamma.name.size() - 6) + ".moving_var",
                     &n->moving_var);
  }
  return out;
}

template <typename T>
void DetectorModelT<T>::set_update_stats(bool update) {
  for (nn::NormT<T>* n :
       {&stem.norm, &down1.norm, &down2.norm, &res2.reduce.norm, &res2.expand.norm,
        &down3.norm, &res3a.reduce.norm, &res3a.expand.norm, &res3b.reduce.norm,
        &res3b.expand.norm, &down4.norm, &res4a.reduce.norm, &res4a.expand.norm,
        &res4b.reduce.norm, &res4b.expand.norm, &down5.norm, &res5.reduce.norm,
        &res5.expand.norm, &n5.norm, &head5.norm, &t5.norm, &n4.norm, &head4.norm,
        &t4.norm, &n3.norm, &head3.norm})
    n->update_stats = update;
}

template <typename T>
size_t DetectorModelT<T>::param_count() {
  size_t n = 0;
  for (nn::ParamT<T>* p : params()) n += p->value.size();
  return n;
}

template <typename T>
void xavier_init(DetectorModelT<T>& model, uint64_t seed) {
  Rng rng(seed);
  for (nn::ParamT<T>* p : model.params())
    if (p->value.rank() == 4) nn::xavier_fill(p->value, rng);
}

template struct ConvBlockT<float>;
template struct ConvBlockT<double>;
template struct ResidualUnitT<float>;
template struct ResidualUnitT<double>;
template struct DetectorModelT<float>;
template struct DetectorModelT<double>;
template DetectorModelT<float> build_toy_detector<float>(const ModelConfig&);
template DetectorModelT<double> build_toy_detector<double>(const ModelConfig&);
template void xavier_init<float>(DetectorModelT<float>&, uint64_t);
template void xavier_init<double>(DetectorModelT<double>&, uint64_t);

// ---------------------------------------------------------------------------
// checkpoints

namespace {

json model_to_json(const ModelConfig& cfg) {
  return {{"num_classes", cfg.num_classes},
          {"width_mult", cfg.width_mult},
          {"norm", cfg.norm_mode == nn::NormMode::batch_renorm ? "br" : "bn"}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig cfg;
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.width_mult = j.at("width_mult").get<int>();
  cfg.norm_mode = j.at("norm").get<std::string>() == "br" ? nn::NormMode::batch_renorm
                                                          : nn::NormMode::batch_norm;
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, DetectorModel& model,
                     const std::string& extra_meta_json, int epoch) {
  json meta = json::parse(extra_meta_json);
  require(meta.is_object(), "checkpoint: meta must be a JSON object");
  meta["model"] = model_to_json(model.cfg);
  meta["epoch"] = epoch;

  auto tensors = model.named_tensors();
  json manifest_tensors = json::object();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    manifest_tensors[name] = {
        {"shape", t->shape}, {"dtype", "f32"}, {"offset", offset}};
    offset += t->size() * sizeof(float);
  }
  json manifest = {{"tensors", manifest_tensors}, {"meta", meta}};
  const std::string mstr = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "checkpoint: cannot open ", path, " for writing");
  out.write(kCheckpointHeader, sizeof(kCheckpointHeader));
  const uint64_t mlen = mstr.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  require(out.good(), "checkpoint: write failure on ", path);
}

namespace {

struct RawCheckpoint {
  json manifest;
  std::vector<char> payload;
};

RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "checkpoint: cannot open ", path);
  char header[8];
  in.read(header, sizeof(header));
  require(in.good() && std::memcmp(header, kCheckpointHeader, sizeof(header)) == 0,
          "checkpoint: bad header in ", path);
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  require(in.good(), "checkpoint: truncated manifest length in ", path);
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(mlen));
  require(in.good(), "checkpoint: truncated manifest in ", path);

  RawCheckpoint raw;
  try {
    raw.manifest = json::parse(mstr);
  } catch (const json::exception& e) {
    fail("checkpoint: bad manifest in ", path, ": ", e.what());
  }
  raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

void fill_tensor(Tensor& dst, const std::string& name, const json& entry,
                 const std::vector<char>& payload, const std::string& path) {
  const auto shape = entry.at("shape").get<std::vector<int>>();
  require(shape == dst.shape, "checkpoint: shape mismatch for tensor \"", name,
          "\" in ", path);
  require(entry.at("dtype").get<std::string>() == "f32",
          "checkpoint: unsupported dtype for \"", name, "\"");
  const uint64_t offset = entry.at("offset").get<uint64_t>();
  const size_t bytes = dst.size() * sizeof(float);
  require(offset + bytes <= payload.size(), "checkpoint: payload truncated at \"", name,
          "\"");
  std::memcpy(dst.data(), payload.data() + offset, bytes);
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::string& path) {
  RawCheckpoint raw = read_raw(path);
  const json& meta = raw.manifest.at("meta");
  LoadedCheckpoint ck;
  ck.model = build_toy_detector<float>(model_from_json(meta.at("model")));
  ck.meta_json = meta.dump();
  ck.epoch = meta.value("epoch", 0);

  const json& tensors = raw.manifest.at("tensors");
  for (auto& [name, t] : ck.model.named_tensors()) {
    require(tensors.contains(name), "checkpoint: missing tensor \"", name, "\" in ", path);
    fill_tensor(*t, name, tensors.at(name), raw.payload, path);
  }
  return ck;
}

void restore_from_checkpoint(DetectorModel& model, const std::string& path,
                             bool backbone_only) {
  RawCheckpoint raw = read_raw(path);
  const json& tensors = raw.manifest.at("tensors");
  for (auto& [name, t] : model.named_tensors()) {
    if (backbone_only && name.rfind("backbone.", 0) != 0) continue;
    require(tensors.contains(name), "checkpoint: missing tensor \"", name, "\" in ", path);
    fill_tensor(*t, name, tensors.at(name), raw.payload, path);
  }
}

}  // namespace sddkit
