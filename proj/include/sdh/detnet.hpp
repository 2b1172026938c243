#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdh/dataio.hpp"
#include "sdh/nnutil.hpp"
#include "sdh/tensor/optim.hpp"

namespace sdh::detnet {

using dataio::CohortManifest;
using dataio::Split;
using dataio::Volume;
using nn::ParamSet;
using tensor::Tensor;

struct DetectorConfig {
  int in_channels = 1;
  std::array<int, 5> block_channels = {16, 32, 64, 128, 128};
  std::array<double, 5> dropout_rates = {0.10, 0.10, 0.15, 0.20, 0.25};
  std::array<std::array<int, 3>, 5> pool_plan = {{{1, 2, 2},
                                                  {1, 2, 2},
                                                  {2, 2, 2},
                                                  {2, 2, 2},
                                                  {2, 2, 2}}};
  std::array<int, 2> fc_hidden = {512, 64};
  std::array<int64_t, 3> input_dims = {15, 256, 256};
  uint64_t seed = 0;

  void validate() const;
};

// Five 3D conv blocks with skip fusion: block-1 output joins block-3 input and
// block-2 output joins block-4 input, trilinearly resized to the target dims.
template <typename T>
struct DetectorModel {
  DetectorConfig cfg;
  std::unique_ptr<ParamSet<T>> ps;

  nn::Conv3dLayer<T> conv[5];
  nn::BatchNormLayer<T> bn[5];
  nn::LinearLayer<T> fc1, fc2, fc3;

  // (N, 1, D, H, W) -> (N, 1) logits
  Tensor<T> forward(const Tensor<T>& x, bool train, nn::DropoutStream& drop);
  int64_t flatten_dim() const;
};

template <typename T>
DetectorModel<T> build_detector(const DetectorConfig& cfg);

// closed-form parameter count implied by the config
int64_t detector_parameter_count(const DetectorConfig& cfg);

// eval-mode probabilities for a batch tensor (N,1,D,H,W)
template <typename T>
std::vector<double> predict_proba(DetectorModel<T>& model, const Tensor<T>& batch);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double lr = 5e-5;
  double weight_decay = 0.0;
  double pos_weight = 0.0;  // <= 0: use n_neg/n_pos from the training split
  uint64_t seed = 0;
};

struct TrainState {
  int epochs_run = 0;
  double best_val_auc = 0.0;
  int best_epoch = -1;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val_auc;
};

// per-epoch metric callback: (epoch, name, value)
using MetricHook = std::function<void(int, const std::string&, double)>;

template <typename T>
TrainState train_detector(DetectorModel<T>& model, const CohortManifest& manifest,
                          const TrainConfig& tc, const MetricHook& hook = {});

// stacks 15 per-slice probability maps into a detector-ready volume
Volume build_segcnn_input(const std::vector<std::vector<float>>& maps,
                          int64_t hw = 256);

// checkpoint I/O (config embedded as metadata)
template <typename T>
void save_detector(const DetectorModel<T>& model, const std::string& path,
                   const std::string& model_id);
template <typename T>
DetectorModel<T> load_detector(const std::string& path, std::string* model_id = nullptr);

// manifest-driven prediction: returns per-study probabilities in record order
template <typename T>
std::vector<double> predict_manifest(DetectorModel<T>& model,
                                     const CohortManifest& manifest,
                                     int batch_size = 8);

}  // namespace sdh::detnet
