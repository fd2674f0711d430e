#pragma once

// Proposal network: multi-scale convolutional backbone -> decoder (f_dec) ->
// head detection map (h_det) -> head feature (f_head) re-injected by
// concatenation (f_prop) -> N proposals of head/gaze/connection heatmaps,
// plus N out-of-frame logits predicted from f_dec. Every hidden convolution
// is followed by group normalization and SiLU.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazehta/core.hpp"
#include "gazehta/data.hpp"
#include "gazehta/nn.hpp"
#include "gazehta/rng.hpp"

namespace gazehta {

struct ModelConfig {
  int input_size = 256;
  int num_proposals = 20;
  MapSize heatmap_size{64, 64};
  int decoded_channels = 32;
  std::string backbone_spec = "compact";
  int stem_channels = 16;
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  int proposal_hidden = 16;  // width of each group's hidden 3x3 conv
  int oof_channels = 8;
  int oof_grid = 8;  // spatial grid fed to the out-of-frame FC layer
  bool reinject_head_feature = true;
  bool coord_channels = true;  // append normalized x/y planes to the input
  int norm_groups = 8;          // group-norm groups per hidden layer (gcd with width)

  /// Named presets. "compact" is the desk-scale default; "wide" keeps the
  /// 192-channel decoded feature; "tiny" is small enough for exhaustive
  /// finite-difference checks.
  static ModelConfig preset(const std::string& name) {
    ModelConfig c;
    c.backbone_spec = name;
    if (name == "compact") return c;
    if (name == "wide") {
      c.decoded_channels = 192;
      c.stem_channels = 32;
      c.stage_channels = {32, 64, 128, 256};
      c.proposal_hidden = 32;
      return c;
    }
    if (name == "tiny") {
      c.input_size = 32;
      c.heatmap_size = {16, 16};
      c.num_proposals = 2;
      c.decoded_channels = 4;
      c.stem_channels = 4;
      c.stage_channels = {4, 4, 4, 8};
      c.proposal_hidden = 3;
      c.oof_channels = 2;
      c.oof_grid = 4;
      c.norm_groups = 2;
      return c;
    }
    throw InvalidArgument("unknown backbone preset '" + name + "' (expected compact, wide or tiny)");
  }

  int stem_stride() const { return input_size / (2 * heatmap_size.width); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& c) {
  if (c.num_proposals < 1) throw InvalidArgument("num_proposals must be >= 1");
  if (c.decoded_channels < 1) throw InvalidArgument("decoded_channels must be >= 1");
  const int m = c.heatmap_size.width;
  if (c.heatmap_size.height != m) throw InvalidArgument("heatmaps must be square (m == n)");
  if (m < 8 || m % 8 != 0) throw InvalidArgument("heatmap size must be a positive multiple of 8");
  if (c.input_size % (2 * m) != 0 || c.stem_stride() < 1)
    throw InvalidArgument("input_size must be a multiple of 2*m");
  if ((m / 2) % c.oof_grid != 0) throw InvalidArgument("oof_grid must divide m/2");
  if (c.norm_groups < 1) throw InvalidArgument("norm_groups must be >= 1");
  if (c.stem_channels < 1 || c.proposal_hidden < 1 || c.oof_channels < 1)
    throw InvalidArgument("channel counts must be >= 1");
  for (int ch : c.stage_channels)
    if (ch < 1) throw InvalidArgument("stage channels must be >= 1");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_size", c.input_size},
          {"num_proposals", c.num_proposals},
          {"heatmap_width", c.heatmap_size.width},
          {"heatmap_height", c.heatmap_size.height},
          {"decoded_channels", c.decoded_channels},
          {"backbone_spec", c.backbone_spec},
          {"stem_channels", c.stem_channels},
          {"stage_channels", c.stage_channels},
          {"proposal_hidden", c.proposal_hidden},
          {"oof_channels", c.oof_channels},
          {"oof_grid", c.oof_grid},
          {"reinject_head_feature", c.reinject_head_feature},
          {"coord_channels", c.coord_channels},
          {"norm_groups", c.norm_groups}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_size = j.at("input_size");
  c.num_proposals = j.at("num_proposals");
  c.heatmap_size = {j.at("heatmap_width"), j.at("heatmap_height")};
  c.decoded_channels = j.at("decoded_channels");
  c.backbone_spec = j.at("backbone_spec");
  c.stem_channels = j.at("stem_channels");
  c.stage_channels = j.at("stage_channels").get<std::array<int, 4>>();
  c.proposal_hidden = j.at("proposal_hidden");
  c.oof_channels = j.at("oof_channels");
  c.oof_grid = j.at("oof_grid");
  c.reinject_head_feature = j.at("reinject_head_feature");
  c.coord_channels = j.at("coord_channels");
  c.norm_groups = j.at("norm_groups");
  return c;
}

/// The model's N predicted instances.
struct ProposalSet {
  std::vector<Heatmap> head_maps;
  std::vector<Heatmap> gaze_maps;
  std::vector<Heatmap> connection_maps;
  std::vector<double> oof_logits;

  int size() const { return static_cast<int>(head_maps.size()); }
  double oof_prob(int k) const { return sigmoid(oof_logits[k]); }
};

/// Gradients of the loss with respect to the network's exposed outputs.
struct OutputGrads {
  std::vector<Heatmap> head_maps;
  std::vector<Heatmap> gaze_maps;
  std::vector<Heatmap> connection_maps;
  Heatmap detection_map;
  std::vector<double> oof_logits;
};

template <class T>
class Network {
 public:
  /// Intermediate activations of one forward pass, kept for backward.
  /// Separate instances make concurrent inference safe.
  /// conv -> group norm -> SiLU: z is the conv output, n the normalized
  /// pre-activation, y the block output.
  struct BlockAct {
    nn::Tensor<T> z, n, y;
    nn::NormStats<T> stats;
  };

  struct Activations {
    nn::Tensor<T> input;
    BlockAct stem;
    std::array<BlockAct, 4> stage_a, stage_b;
    std::array<nn::Tensor<T>, 3> up;  // upsampled decoder inputs
    std::array<BlockAct, 3> dec;
    nn::Tensor<T> det_logit, h_det, f_head, f_prop;
    std::array<BlockAct, 3> prop_hidden;
    std::array<nn::Tensor<T>, 3> prop_out;  // H, G, C groups (post sigmoid)
    BlockAct oof_feat;
    nn::Tensor<T> oof_pooled;
    std::vector<T> oof_logits;
    nn::Scratch<T> scratch;

    const nn::Tensor<T>& f_dec() const { return dec[2].y; }
  };

  explicit Network(ModelConfig config) : config_(std::move(config)) {
    validate(config_);
    build();
  }

  const ModelConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  /// Deterministic fan-in-scaled initialization from `seed`.
  void init_parameters(std::uint64_t seed) {
    Rng rng(stream_seed(seed, 0x1417));
    std::vector<bool> linear(params_.infos.size(), false);
    linear[fc_weight_] = true;
    nn::init_params(params_, rng, linear);
  }

  void forward(const Image& image, Activations& a) const {
    const int S = config_.input_size;
    if (image.width != S || image.height != S)
      throw InvalidArgument("image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                            ", model expects " + std::to_string(S) + "x" + std::to_string(S));
    const int extra = config_.coord_channels ? 2 : 0;
    a.input.resize(3 + extra, S, S);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) a.input.v[i] = static_cast<T>(image.pixels[i]);
    if (extra) {
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          a.input.channel(3)[y * S + x] = static_cast<T>((x + 0.5) / S * 2.0 - 1.0);
          a.input.channel(4)[y * S + x] = static_cast<T>((y + 0.5) / S * 2.0 - 1.0);
        }
    }
    auto& sc = a.scratch;
    block_forward(a.input, stem_, stem_norm_, a.stem, sc);
    const nn::Tensor<T>* x = &a.stem.y;
    for (int s = 0; s < 4; ++s) {
      block_forward(*x, stage_a_[s], stage_a_norm_[s], a.stage_a[s], sc);
      block_forward(a.stage_a[s].y, stage_b_[s], stage_b_norm_[s], a.stage_b[s], sc);
      x = &a.stage_b[s].y;
    }
    // Decoder: dec[i] = act(norm(conv3x3(upsample(prev)) + conv1x1(skip))).
    nn::Tensor<T> lateral;
    for (int d = 0; d < 3; ++d) {
      const nn::Tensor<T>& prev = d == 0 ? a.stage_b[3].y : a.dec[d - 1].y;
      nn::upsample2x(prev, a.up[d]);
      nn::conv_forward(a.up[d], up_conv_[d], params_, a.dec[d].z, sc);
      nn::conv_forward(a.stage_b[2 - d].y, lateral_[d], params_, lateral, sc);
      for (std::size_t i = 0; i < lateral.v.size(); ++i) a.dec[d].z.v[i] += lateral.v[i];
      norm_act(dec_norm_[d], a.dec[d]);
    }
    const nn::Tensor<T>& f_dec = a.dec[2].y;
    nn::conv_forward(f_dec, det_, params_, a.det_logit, sc);
    a.h_det = a.det_logit;
    for (T& v : a.h_det.v) v = nn::sigmoid_t(v);
    if (config_.reinject_head_feature) {
      nn::conv_forward(a.h_det, head_feat_, params_, a.f_head, sc);
    } else {
      a.f_head.resize(1, f_dec.h, f_dec.w);
    }
    a.f_prop.resize(f_dec.c + 1, f_dec.h, f_dec.w);
    std::copy(f_dec.v.begin(), f_dec.v.end(), a.f_prop.v.begin());
    std::copy(a.f_head.v.begin(), a.f_head.v.end(), a.f_prop.v.begin() + f_dec.v.size());
    for (int g = 0; g < 3; ++g) {
      block_forward(a.f_prop, prop_hidden_[g], prop_norm_[g], a.prop_hidden[g], sc);
      nn::conv_forward(a.prop_hidden[g].y, prop_out_[g], params_, a.prop_out[g], sc);
      for (T& v : a.prop_out[g].v) v = nn::sigmoid_t(v);
    }
    block_forward(f_dec, oof_conv_, oof_norm_, a.oof_feat, sc);
    nn::avgpool(a.oof_feat.y, oof_pool_, a.oof_pooled);
    const int N = config_.num_proposals;
    const Eigen::Index F = static_cast<Eigen::Index>(a.oof_pooled.size());
    Eigen::Map<const nn::MatR<T>> W(params_.data(fc_weight_), N, F);
    Eigen::Map<const nn::VecX<T>> b(params_.data(fc_bias_), N);
    Eigen::Map<const nn::VecX<T>> in(a.oof_pooled.v.data(), F);
    a.oof_logits.resize(N);
    Eigen::Map<nn::VecX<T>> out(a.oof_logits.data(), N);
    out.noalias() = W * in + b;
  }

  /// Backpropagates output gradients; accumulates into `grads`, which must
  /// have params().count() entries.
  void backward(Activations& a, const OutputGrads& og, nn::Buffer<T>& grads) const {
    const int N = config_.num_proposals;
    auto& sc = a.scratch;
    const nn::Tensor<T>& f_dec = a.dec[2].y;
    nn::Tensor<T> d_fdec(f_dec.c, f_dec.h, f_dec.w);

    // Proposal groups.
    nn::Tensor<T> d_fprop(a.f_prop.c, a.f_prop.h, a.f_prop.w);
    const std::array<const std::vector<Heatmap>*, 3> group_grads{&og.head_maps, &og.gaze_maps,
                                                                  &og.connection_maps};
    for (int g = 0; g < 3; ++g) {
      const nn::Tensor<T>& y = a.prop_out[g];
      nn::Tensor<T> dz(y.c, y.h, y.w);
      for (int k = 0; k < N; ++k) {
        const auto& gm = (*group_grads[g])[k].values();
        const T* yk = y.channel(k);
        T* dk = dz.channel(k);
        for (std::size_t p = 0; p < y.plane(); ++p) dk[p] = static_cast<T>(gm[p]) * yk[p] * (T(1) - yk[p]);
      }
      const nn::Tensor<T>& hidden = a.prop_hidden[g].y;
      nn::Tensor<T> dh(hidden.c, hidden.h, hidden.w);
      nn::conv_backward(hidden, dz, prop_out_[g], params_, grads, &dh, sc);
      block_backward(a.f_prop, prop_hidden_[g], prop_norm_[g], a.prop_hidden[g], dh, grads, &d_fprop, sc);
    }
    std::copy(d_fprop.v.begin(), d_fprop.v.begin() + d_fdec.v.size(), d_fdec.v.begin());

    // Head detection map: direct loss gradient plus the re-injection path.
    nn::Tensor<T> d_hdet(1, f_dec.h, f_dec.w);
    for (std::size_t p = 0; p < d_hdet.v.size(); ++p) d_hdet.v[p] = static_cast<T>(og.detection_map.values()[p]);
    if (config_.reinject_head_feature) {
      nn::Tensor<T> d_fhead(1, f_dec.h, f_dec.w);
      std::copy(d_fprop.v.begin() + d_fdec.v.size(), d_fprop.v.end(), d_fhead.v.begin());
      nn::conv_backward(a.h_det, d_fhead, head_feat_, params_, grads, &d_hdet, sc);
    }
    for (std::size_t p = 0; p < d_hdet.v.size(); ++p) d_hdet.v[p] *= a.h_det.v[p] * (T(1) - a.h_det.v[p]);
    nn::conv_backward(f_dec, d_hdet, det_, params_, grads, &d_fdec, sc);

    // Out-of-frame branch.
    {
      const Eigen::Index F = static_cast<Eigen::Index>(a.oof_pooled.size());
      std::vector<T> dl(N);
      for (int k = 0; k < N; ++k) dl[k] = static_cast<T>(og.oof_logits[k]);
      Eigen::Map<const nn::VecX<T>> dlv(dl.data(), N);
      Eigen::Map<const nn::VecX<T>> in(a.oof_pooled.v.data(), F);
      Eigen::Map<const nn::MatR<T>> W(params_.data(fc_weight_), N, F);
      Eigen::Map<nn::MatR<T>> dW(grads.data() + params_.infos[fc_weight_].offset, N, F);
      Eigen::Map<nn::VecX<T>> db(grads.data() + params_.infos[fc_bias_].offset, N);
      dW.noalias() += dlv * in.transpose();
      db += dlv;
      nn::Tensor<T> dpool(a.oof_pooled.c, a.oof_pooled.h, a.oof_pooled.w);
      Eigen::Map<nn::VecX<T>> dp(dpool.v.data(), F);
      dp.noalias() = W.transpose() * dlv;
      const nn::Tensor<T>& feat = a.oof_feat.y;
      nn::Tensor<T> dfeat(feat.c, feat.h, feat.w);
      nn::avgpool_backward(dpool, oof_pool_, dfeat);
      block_backward(f_dec, oof_conv_, oof_norm_, a.oof_feat, dfeat, grads, &d_fdec, sc);
    }

    // Decoder, deepest block last.
    std::array<nn::Tensor<T>, 4> d_stage;
    for (int s = 0; s < 4; ++s) d_stage[s].resize(a.stage_b[s].y.c, a.stage_b[s].y.h, a.stage_b[s].y.w);
    nn::Tensor<T> d_cur = std::move(d_fdec);
    nn::Tensor<T> d_z;
    for (int d = 2; d >= 0; --d) {
      norm_act_backward(dec_norm_[d], a.dec[d], d_cur, grads, d_z);
      nn::conv_backward(a.stage_b[2 - d].y, d_z, lateral_[d], params_, grads, &d_stage[2 - d], sc);
      nn::Tensor<T> d_up(a.up[d].c, a.up[d].h, a.up[d].w);
      nn::conv_backward(a.up[d], d_z, up_conv_[d], params_, grads, &d_up, sc);
      nn::Tensor<T> d_prev;
      nn::upsample2x_backward(d_up, d_prev);
      if (d == 0) {
        for (std::size_t i = 0; i < d_prev.v.size(); ++i) d_stage[3].v[i] += d_prev.v[i];
      } else {
        d_cur = std::move(d_prev);
      }
    }

    // Backbone.
    for (int s = 3; s >= 0; --s) {
      const nn::Tensor<T>& a_out = a.stage_a[s].y;
      nn::Tensor<T> d_a(a_out.c, a_out.h, a_out.w);
      block_backward(a_out, stage_b_[s], stage_b_norm_[s], a.stage_b[s], d_stage[s], grads, &d_a, sc);
      if (s > 0) {
        block_backward(a.stage_b[s - 1].y, stage_a_[s], stage_a_norm_[s], a.stage_a[s], d_a, grads, &d_stage[s - 1],
                       sc);
      } else {
        nn::Tensor<T> d_stem(a.stem.y.c, a.stem.y.h, a.stem.y.w);
        block_backward(a.stem.y, stage_a_[0], stage_a_norm_[0], a.stage_a[0], d_a, grads, &d_stem, sc);
        block_backward(a.input, stem_, stem_norm_, a.stem, d_stem, grads, static_cast<nn::Tensor<T>*>(nullptr), sc);
      }
    }
  }

  /// Copies the exposed outputs into double-precision heatmaps.
  ProposalSet proposals(const Activations& a) const {
    ProposalSet ps;
    const MapSize ms = config_.heatmap_size;
    std::array<std::vector<Heatmap>*, 3> dst{&ps.head_maps, &ps.gaze_maps, &ps.connection_maps};
    for (int g = 0; g < 3; ++g)
      for (int k = 0; k < config_.num_proposals; ++k) {
        Heatmap h(ms);
        const T* src = a.prop_out[g].channel(k);
        for (std::size_t p = 0; p < h.pixel_count(); ++p) h.values()[p] = static_cast<double>(src[p]);
        dst[g]->push_back(std::move(h));
      }
    for (T v : a.oof_logits) ps.oof_logits.push_back(static_cast<double>(v));
    return ps;
  }

  Heatmap detection_map(const Activations& a) const {
    Heatmap h(config_.heatmap_size);
    for (std::size_t p = 0; p < h.pixel_count(); ++p) h.values()[p] = static_cast<double>(a.h_det.v[p]);
    return h;
  }

  /// Parameter groups keyed by layer name (weight and bias of one layer).
  std::vector<std::string> layer_names() const {
    std::vector<std::string> names;
    for (const auto& info : params_.infos) {
      const std::string layer = info.name.substr(0, info.name.rfind('.'));
      if (names.empty() || names.back() != layer) names.push_back(layer);
    }
    return names;
  }

 private:
  void build() {
    const ModelConfig& c = config_;
    const int in_ch = 3 + (c.coord_channels ? 2 : 0);
    const int G = c.norm_groups;
    stem_ = nn::make_conv(params_, "backbone.stem", in_ch, c.stem_channels, 3, c.stem_stride());
    stem_norm_ = nn::make_norm(params_, "backbone.stem.norm", c.stem_channels, G);
    int prev = c.stem_channels;
    for (int s = 0; s < 4; ++s) {
      const std::string base = "backbone.stage" + std::to_string(s + 1);
      const int w = c.stage_channels[s];
      stage_a_[s] = nn::make_conv(params_, base + ".down", prev, w, 3, 2);
      stage_a_norm_[s] = nn::make_norm(params_, base + ".down.norm", w, G);
      stage_b_[s] = nn::make_conv(params_, base + ".conv", w, w, 3, 1);
      stage_b_norm_[s] = nn::make_norm(params_, base + ".conv.norm", w, G);
      prev = w;
    }
    const std::array<int, 3> widths{c.stage_channels[2], c.stage_channels[1], c.decoded_channels};
    for (int d = 0; d < 3; ++d) {
      const std::string base = "decoder.block" + std::to_string(d + 1);
      up_conv_[d] = nn::make_conv(params_, base + ".up", prev, widths[d], 3, 1);
      lateral_[d] = nn::make_conv(params_, base + ".lateral", c.stage_channels[2 - d], widths[d], 1, 1);
      dec_norm_[d] = nn::make_norm(params_, base + ".norm", widths[d], G);
      prev = widths[d];
    }
    det_ = nn::make_conv(params_, "head_detection.conv", c.decoded_channels, 1, 3, 1);
    head_feat_ = nn::make_conv(params_, "head_feature.conv", 1, 1, 3, 1);
    const std::array<const char*, 3> groups{"head", "gaze", "connection"};
    for (int g = 0; g < 3; ++g) {
      const std::string base = std::string("proposal.") + groups[g];
      prop_hidden_[g] = nn::make_conv(params_, base + ".hidden", c.decoded_channels + 1, c.proposal_hidden, 3, 1);
      prop_norm_[g] = nn::make_norm(params_, base + ".hidden.norm", c.proposal_hidden, G);
      prop_out_[g] = nn::make_conv(params_, base + ".out", c.proposal_hidden, c.num_proposals, 3, 1);
    }
    oof_conv_ = nn::make_conv(params_, "out_of_frame.conv", c.decoded_channels, c.oof_channels, 3, 2);
    oof_norm_ = nn::make_norm(params_, "out_of_frame.conv.norm", c.oof_channels, G);
    oof_pool_ = (c.heatmap_size.width / 2) / c.oof_grid;
    const int features = c.oof_channels * c.oof_grid * c.oof_grid;
    fc_weight_ = params_.add("out_of_frame.fc.weight", {c.num_proposals, features}, features,
                             nn::ParamInit::fan_in_normal);
    fc_bias_ = params_.add("out_of_frame.fc.bias", {c.num_proposals}, features, nn::ParamInit::zeros);
  }

  void norm_act(const nn::NormLayer& N, BlockAct& b) const {
    nn::group_norm_forward(b.z, N, params_, b.n, b.stats);
    nn::silu(b.n, b.y);
  }

  void block_forward(const nn::Tensor<T>& in, const nn::ConvLayer& L, const nn::NormLayer& N, BlockAct& b,
                     nn::Scratch<T>& sc) const {
    nn::conv_forward(in, L, params_, b.z, sc);
    norm_act(N, b);
  }

  /// dy (consumed) -> gradient with respect to the conv output, in dz.
  void norm_act_backward(const nn::NormLayer& N, const BlockAct& b, nn::Tensor<T>& dy, nn::Buffer<T>& grads,
                         nn::Tensor<T>& dz) const {
    nn::silu_backward(b.n, dy);
    nn::group_norm_backward(b.z, dy, N, params_, b.stats, grads, dz);
  }

  void block_backward(const nn::Tensor<T>& in, const nn::ConvLayer& L, const nn::NormLayer& N, const BlockAct& b,
                      nn::Tensor<T>& dy, nn::Buffer<T>& grads, nn::Tensor<T>* din, nn::Scratch<T>& sc) const {
    nn::Tensor<T> dz;
    norm_act_backward(N, b, dy, grads, dz);
    nn::conv_backward(in, dz, L, params_, grads, din, sc);
  }

  ModelConfig config_;
  nn::ParamSet<T> params_;
  nn::ConvLayer stem_;
  std::array<nn::ConvLayer, 4> stage_a_, stage_b_;
  std::array<nn::ConvLayer, 3> up_conv_, lateral_;
  nn::ConvLayer det_, head_feat_;
  std::array<nn::ConvLayer, 3> prop_hidden_, prop_out_;
  nn::ConvLayer oof_conv_;
  nn::NormLayer stem_norm_, oof_norm_;
  std::array<nn::NormLayer, 4> stage_a_norm_, stage_b_norm_;
  std::array<nn::NormLayer, 3> dec_norm_, prop_norm_;
  int oof_pool_ = 1;
  int fc_weight_ = -1;
  int fc_bias_ = -1;
};

}  // namespace gazehta
