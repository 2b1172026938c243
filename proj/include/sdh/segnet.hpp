#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "sdh/dataio.hpp"
#include "sdh/nnutil.hpp"
#include "sdh/tensor/optim.hpp"

namespace sdh::segnet {

using dataio::Volume;
using nn::ParamSet;
using tensor::Tensor;

struct SegConfig {
  std::array<int, 4> encoder_channels = {32, 64, 128, 256};
  int bottleneck = 512;
  int convs_per_block = 3;
  double dropout_p = 0.10;
  double leaky_slope = 0.01;
  int attention_reduction = 8;

  // transformer branch
  bool use_transformer = true;
  int patch = 4;
  int window = 8;
  int embed_dim = 32;
  int stages = 3;        // dims embed_dim * 2^s per stage
  int head_divisor = 32; // heads = max(1, dim / head_divisor)
  int mlp_ratio = 4;

  double lambda_dice = 0.6;
  std::array<double, 3> deep_supervision_weights = {0.25, 0.25, 0.5};

  int in_channels = 3;
  int64_t in_hw = 256;
  // the three channel windows applied to the masked HU slice
  std::array<std::array<double, 2>, 3> channel_windows = {{{0.0, 130.0},
                                                           {0.0, 80.0},
                                                           {0.0, 200.0}}};
  uint64_t seed = 0;

  void validate() const;
};

// channel + spatial recalibration from pooled descriptors
template <typename T>
struct AttentionGate {
  nn::LinearLayer<T> fc1, fc2;   // shared MLP over pooled channel vectors
  nn::Conv2dLayer<T> spatial;    // 7x7 conv over [mean_c, max_c]
  AttentionGate() = default;
  AttentionGate(ParamSet<T>& ps, const std::string& name, int64_t channels,
                int reduction);
  Tensor<T> forward(const Tensor<T>& x) const;
};

template <typename T>
struct ResBlock {
  std::vector<nn::Conv2dLayer<T>> convs;
  std::vector<nn::BatchNormLayer<T>> bns;
  nn::Conv2dLayer<T> proj;  // 1x1 shortcut, present only on channel change
  bool has_proj = false;
  double dropout_p = 0.0;
  double slope = 0.01;
  ResBlock() = default;
  ResBlock(ParamSet<T>& ps, const std::string& name, int64_t cin, int64_t cout,
           int n_convs, double dropout, double slope);
  Tensor<T> forward(const Tensor<T>& x, bool train, nn::DropoutStream& drop);
};

template <typename T>
struct SwinBlock {
  nn::LayerNormLayer<T> ln1, ln2;
  tensor::WindowMsaParams<T> msa;
  nn::LinearLayer<T> mlp1, mlp2;
  int64_t window = 8, heads = 1, shift = 0;
  SwinBlock() = default;
  SwinBlock(ParamSet<T>& ps, const std::string& name, int64_t dim, int64_t window,
            int64_t heads, int64_t shift, int mlp_ratio);
  Tensor<T> forward(const Tensor<T>& x);  // (B, H, W, C) tokens
};

// logits for the three output maps, all at full resolution
template <typename T>
struct SegLogits {
  Tensor<T> inter_a;  // fused at in_hw/4
  Tensor<T> inter_b;  // fused at in_hw/2
  Tensor<T> final;
};

template <typename T>
struct SegModel {
  SegConfig cfg;
  std::unique_ptr<ParamSet<T>> ps;

  ResBlock<T> enc[4];
  ResBlock<T> bottleneck;
  nn::Conv2dLayer<T> up_conv[4];
  nn::BatchNormLayer<T> up_bn[4];
  AttentionGate<T> gate[4];
  ResBlock<T> dec[4];
  nn::Conv2dLayer<T> head_final, head_a, head_b;

  nn::LinearLayer<T> embed;
  std::vector<SwinBlock<T>> blocks;        // 2 per stage
  std::vector<nn::LinearLayer<T>> merges;  // stages-1
  std::vector<nn::LinearLayer<T>> expands; // stages-1
  std::vector<nn::LinearLayer<T>> fuse_reduce;  // after expand+concat
  nn::LinearLayer<T> tok_head_fine, tok_head_mid;

  nn::Conv2dLayer<T> fuse_a, fuse_b, fuse_final;

  // (N, 3, H, W) -> three logit maps at (N, 1, H, W)
  SegLogits<T> forward(const Tensor<T>& x, bool train, nn::DropoutStream& drop);
};

template <typename T>
SegModel<T> build_segmenter(const SegConfig& cfg);

// probability-map composite loss (Dice + BCE per map, weighted sum)
template <typename T>
Tensor<T> composite_loss(const std::array<Tensor<T>, 3>& prob_maps,
                         const Tensor<T>& target, double lambda,
                         const std::array<double, 3>& weights);

// logits-based equivalent used by the trainer
template <typename T>
Tensor<T> composite_loss_logits(const SegLogits<T>& logits, const Tensor<T>& target,
                                double lambda, const std::array<double, 3>& weights);

// ---------------------------------------------------------------------------
// training data

struct SliceSample {
  std::string study_id;
  std::vector<float> hu;       // masked HU pixels, in_hw * in_hw
  std::vector<uint8_t> mask;   // binary, same size
};

// same random flip/rotation applied to image and mask
void augment(std::vector<float>& slice, std::vector<uint8_t>& mask, int64_t hw,
             uint64_t seed);

// three windowed channels from one masked-HU slice
std::vector<float> make_channels(const std::vector<float>& hu, const SegConfig& cfg);

struct SegTrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.0;
  int batch_size = 16;
  int max_epochs = 100;
  int patience = 10;
  int augment_copies = 2;  // per training slice
  uint64_t seed = 0;
};

struct SegTrainState {
  int epochs_run = 0;
  double best_val_dice = 0.0;
  int best_epoch = -1;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val_dice;         // over lesion-bearing slices
  std::vector<double> epoch_val_dice_all;     // over every validation slice
};

using MetricHook = std::function<void(int, const std::string&, double)>;

template <typename T>
SegTrainState train_segmenter(SegModel<T>& model,
                              const std::vector<SliceSample>& train_slices,
                              const std::vector<SliceSample>& val_slices,
                              const SegTrainConfig& tc, const MetricHook& hook = {});

// eval-mode per-slice probability maps for a masked-HU study volume
template <typename T>
std::vector<std::vector<float>> predict_maps(SegModel<T>& model, const Volume& hu,
                                             int batch_size = 5);

template <typename T>
void save_segmenter(const SegModel<T>& model, const std::string& path,
                    const std::string& model_id);
template <typename T>
SegModel<T> load_segmenter(const std::string& path, std::string* model_id = nullptr);

}  // namespace sdh::segnet
