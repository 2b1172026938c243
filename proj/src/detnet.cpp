#include "sdh/detnet.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sdh/evalens.hpp"
#include "sdh/tensor/checkpoint.hpp"

namespace sdh::detnet {

using nlohmann::json;
using namespace sdh::tensor;

void DetectorConfig::validate() const {
  if (in_channels < 1) throw std::runtime_error("detector: in_channels must be >= 1");
  for (int c : block_channels)
    if (c < 1) throw std::runtime_error("detector: block channels must be >= 1");
  for (double r : dropout_rates)
    if (r < 0.0 || r >= 1.0)
      throw std::runtime_error("detector: dropout rates must lie in [0,1)");
  for (const auto& p : pool_plan)
    for (int w : p)
      if (w < 1) throw std::runtime_error("detector: pool windows must be >= 1");
  if (fc_hidden[0] < 1 || fc_hidden[1] < 1)
    throw std::runtime_error("detector: fc dims must be >= 1");
}

namespace {

// spatial dims after the five pooling stages (floor semantics)
std::array<int64_t, 3> dims_after_pools(const DetectorConfig& cfg) {
  std::array<int64_t, 3> d = cfg.input_dims;
  for (const auto& p : cfg.pool_plan) {
    d[0] /= p[0];
    d[1] /= p[1];
    d[2] /= p[2];
    if (d[0] < 1 || d[1] < 1 || d[2] < 1)
      throw std::runtime_error("detector: input too small for the pool plan");
  }
  return d;
}

int block_in_channels(const DetectorConfig& cfg, int i) {
  if (i == 0) return cfg.in_channels;
  if (i == 2) return cfg.block_channels[1] + cfg.block_channels[0];  // skip from 1
  if (i == 3) return cfg.block_channels[2] + cfg.block_channels[1];  // skip from 2
  return cfg.block_channels[i - 1];
}

}  // namespace

template <typename T>
int64_t DetectorModel<T>::flatten_dim() const {
  auto d = dims_after_pools(cfg);
  return cfg.block_channels[4] * d[0] * d[1] * d[2];
}

int64_t detector_parameter_count(const DetectorConfig& cfg) {
  int64_t total = 0;
  for (int i = 0; i < 5; ++i) {
    int64_t cin = block_in_channels(cfg, i);
    int64_t cout = cfg.block_channels[i];
    total += cout * cin * 27 + cout;  // conv w + b
    total += 2 * cout;                // bn gamma + beta
  }
  auto d = dims_after_pools(cfg);
  int64_t flat = cfg.block_channels[4] * d[0] * d[1] * d[2];
  total += static_cast<int64_t>(cfg.fc_hidden[0]) * flat + cfg.fc_hidden[0];
  total += static_cast<int64_t>(cfg.fc_hidden[1]) * cfg.fc_hidden[0] + cfg.fc_hidden[1];
  total += cfg.fc_hidden[1] + 1;
  return total;
}

template <typename T>
DetectorModel<T> build_detector(const DetectorConfig& cfg) {
  cfg.validate();
  dims_after_pools(cfg);  // rejects impossible pool plans up front

  DetectorModel<T> m;
  m.cfg = cfg;
  m.ps = std::make_unique<ParamSet<T>>(hash_mix(cfg.seed, 0x0de7ec70e));
  for (int i = 0; i < 5; ++i) {
    std::string name = "block" + std::to_string(i + 1);
    m.conv[i] = nn::Conv3dLayer<T>(*m.ps, name + ".conv",
                                   block_in_channels(cfg, i),
                                   cfg.block_channels[i]);
    m.bn[i] = nn::BatchNormLayer<T>(*m.ps, name + ".bn", cfg.block_channels[i]);
  }
  m.fc1 = nn::LinearLayer<T>(*m.ps, "fc1", m.flatten_dim(), cfg.fc_hidden[0]);
  m.fc2 = nn::LinearLayer<T>(*m.ps, "fc2", cfg.fc_hidden[0], cfg.fc_hidden[1]);
  m.fc3 = nn::LinearLayer<T>(*m.ps, "fc3", cfg.fc_hidden[1], 1);
  return m;
}

template <typename T>
Tensor<T> DetectorModel<T>::forward(const Tensor<T>& x, bool train,
                                    nn::DropoutStream& drop) {
  if (x.rank() != 5 || x.dim(1) != cfg.in_channels ||
      x.dim(2) != cfg.input_dims[0] || x.dim(3) != cfg.input_dims[1] ||
      x.dim(4) != cfg.input_dims[2])
    throw std::runtime_error("detector: input shape mismatch");

  auto block = [&](const Tensor<T>& in, int i) {
    Tensor<T> y = conv[i].forward(in);
    y = bn[i].forward(y, train);
    y = relu(y);
    y = maxpool3d(y, cfg.pool_plan[static_cast<size_t>(i)]);
    return dropout(y, cfg.dropout_rates[static_cast<size_t>(i)], train, drop.next());
  };

  Tensor<T> b1 = block(x, 0);
  Tensor<T> b2 = block(b1, 1);
  Tensor<T> skip1 = interpolate3d(b1, b2.dim(2), b2.dim(3), b2.dim(4));
  Tensor<T> b3 = block(concat<T>({b2, skip1}, 1), 2);
  Tensor<T> skip2 = interpolate3d(b2, b3.dim(2), b3.dim(3), b3.dim(4));
  Tensor<T> b4 = block(concat<T>({b3, skip2}, 1), 3);
  Tensor<T> b5 = block(b4, 4);

  Tensor<T> flat = reshape(b5, {b5.dim(0), flatten_dim()});
  Tensor<T> h1 = relu(fc1.forward(flat));
  Tensor<T> h2 = relu(fc2.forward(h1));
  return fc3.forward(h2);
}

template <typename T>
std::vector<double> predict_proba(DetectorModel<T>& model, const Tensor<T>& batch) {
  nn::DropoutStream drop;  // unused in eval mode
  Tensor<T> logits = model.forward(batch, /*train=*/false, drop);
  std::vector<double> out(static_cast<size_t>(logits.numel()));
  for (int64_t i = 0; i < logits.numel(); ++i)
    out[static_cast<size_t>(i)] =
        1.0 / (1.0 + std::exp(-static_cast<double>(logits.data()[i])));
  return out;
}

namespace {

template <typename T>
Tensor<T> load_batch(const CohortManifest& manifest, const std::vector<size_t>& rows,
                     const std::array<int64_t, 3>& dims) {
  const int64_t n = static_cast<int64_t>(rows.size());
  const int64_t vol = dims[0] * dims[1] * dims[2];
  Tensor<T> x = Tensor<T>::zeros({n, 1, dims[0], dims[1], dims[2]});
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    const auto& rec = manifest.records[rows[static_cast<size_t>(i)]];
    Volume v = dataio::read_volume(rec.volume_path);
    if (v.header.dtype != dataio::Dtype::f32 || v.voxel_count() != vol)
      throw std::runtime_error("detector: bad volume " + rec.volume_path);
    T* dst = x.data().data() + i * vol;
    for (int64_t j = 0; j < vol; ++j)
      dst[j] = static_cast<T>(v.f32[static_cast<size_t>(j)]);
  }
  return x;
}

std::vector<size_t> split_rows(const CohortManifest& m, Split s) {
  std::vector<size_t> out;
  for (size_t i = 0; i < m.records.size(); ++i)
    if (m.records[i].split == s) out.push_back(i);
  return out;
}

}  // namespace

template <typename T>
TrainState train_detector(DetectorModel<T>& model, const CohortManifest& manifest,
                          const TrainConfig& tc, const MetricHook& hook) {
  std::vector<size_t> train_rows = split_rows(manifest, Split::train);
  std::vector<size_t> val_rows = split_rows(manifest, Split::val);
  if (train_rows.empty()) throw std::runtime_error("train_detector: empty train split");
  if (val_rows.empty()) throw std::runtime_error("train_detector: empty val split");

  int64_t n_pos = 0, n_neg = 0;
  for (size_t r : train_rows)
    (manifest.records[r].label ? n_pos : n_neg)++;
  bool val_pos = false, val_neg = false;
  for (size_t r : val_rows)
    (manifest.records[r].label ? val_pos : val_neg) = true;
  if (!val_pos || !val_neg)
    throw std::runtime_error(
        "train_detector: validation split has a single class; AUC undefined");
  if (n_pos == 0 || n_neg == 0)
    throw std::runtime_error("train_detector: training split has a single class");

  const double pos_weight =
      tc.pos_weight > 0.0 ? tc.pos_weight
                          : static_cast<double>(n_neg) / static_cast<double>(n_pos);

  AdamW<T> opt;
  opt.lr = static_cast<T>(tc.lr);
  opt.weight_decay = static_cast<T>(tc.weight_decay);

  TrainState state;
  std::vector<std::vector<T>> best_snapshot;
  uint64_t step = 0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng order_rng(hash_mix(tc.seed, 0xe90c + static_cast<uint64_t>(epoch)));
    std::vector<size_t> order = train_rows;
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(tc.batch_size)) {
      std::vector<size_t> rows(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(
                              std::min(order.size(),
                                       start + static_cast<size_t>(tc.batch_size))));
      Tensor<T> x = load_batch<T>(manifest, rows, model.cfg.input_dims);
      std::vector<T> yv(rows.size());
      for (size_t i = 0; i < rows.size(); ++i)
        yv[i] = static_cast<T>(manifest.records[rows[i]].label);
      Tensor<T> y =
          Tensor<T>::from({static_cast<int64_t>(rows.size()), 1}, std::move(yv));

      nn::DropoutStream drop{hash_mix(tc.seed, 0xd809 + step), 0};
      Tape<T> tape;
      Tensor<T> logits = model.forward(x, /*train=*/true, drop);
      Tensor<T> loss = bce_with_logits(logits, y, static_cast<T>(pos_weight));
      tape.backward(loss);
      opt.step(std::span<Parameter<T>>(model.ps->params().data(),
                                       model.ps->params().size()));
      model.ps->zero_grad();
      loss_sum += static_cast<double>(loss.item());
      ++batches;
      ++step;
    }
    double mean_loss = loss_sum / static_cast<double>(std::max<int64_t>(1, batches));
    state.epoch_loss.push_back(mean_loss);

    // validation AUC in eval mode
    std::vector<double> val_scores;
    std::vector<int> val_labels;
    for (size_t start = 0; start < val_rows.size();
         start += static_cast<size_t>(tc.batch_size)) {
      std::vector<size_t> rows(
          val_rows.begin() + static_cast<std::ptrdiff_t>(start),
          val_rows.begin() + static_cast<std::ptrdiff_t>(
                                 std::min(val_rows.size(),
                                          start + static_cast<size_t>(tc.batch_size))));
      Tensor<T> x = load_batch<T>(manifest, rows, model.cfg.input_dims);
      auto probs = predict_proba(model, x);
      for (size_t i = 0; i < rows.size(); ++i) {
        val_scores.push_back(probs[i]);
        val_labels.push_back(manifest.records[rows[i]].label);
      }
    }
    double val_auc = evalens::auc(val_scores, val_labels);
    state.epoch_val_auc.push_back(val_auc);
    state.epochs_run = epoch + 1;
    if (hook) {
      hook(epoch, "train_loss", mean_loss);
      hook(epoch, "val_auc", val_auc);
    }
    if (val_auc > state.best_val_auc || state.best_epoch < 0) {
      state.best_val_auc = val_auc;
      state.best_epoch = epoch;
      best_snapshot = model.ps->snapshot();
    }
  }
  if (!best_snapshot.empty()) model.ps->restore(best_snapshot);
  return state;
}

Volume build_segcnn_input(const std::vector<std::vector<float>>& maps, int64_t hw) {
  if (maps.size() != 15)
    throw std::runtime_error("build_segcnn_input: expected 15 slice maps, got " +
                             std::to_string(maps.size()));
  Volume out = Volume::make_f32(15, hw, hw);
  const size_t plane = static_cast<size_t>(hw * hw);
  for (size_t s = 0; s < maps.size(); ++s) {
    if (maps[s].size() != plane)
      throw std::runtime_error("build_segcnn_input: slice map size mismatch");
    std::memcpy(out.f32.data() + s * plane, maps[s].data(), plane * sizeof(float));
  }
  return out;
}

namespace {

json config_to_json(const DetectorConfig& c) {
  return json{{"in_channels", c.in_channels},
              {"block_channels", c.block_channels},
              {"dropout_rates", c.dropout_rates},
              {"pool_plan", c.pool_plan},
              {"fc_hidden", c.fc_hidden},
              {"input_dims", c.input_dims},
              {"seed", c.seed}};
}

DetectorConfig config_from_json(const json& j) {
  DetectorConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.block_channels = j.at("block_channels").get<std::array<int, 5>>();
  c.dropout_rates = j.at("dropout_rates").get<std::array<double, 5>>();
  c.pool_plan = j.at("pool_plan").get<std::array<std::array<int, 3>, 5>>();
  c.fc_hidden = j.at("fc_hidden").get<std::array<int, 2>>();
  c.input_dims = j.at("input_dims").get<std::array<int64_t, 3>>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

template <typename T>
void save_detector(const DetectorModel<T>& model, const std::string& path,
                   const std::string& model_id) {
  Checkpoint<T> ckpt;
  ckpt.metadata["kind"] = "detector";
  ckpt.metadata["model_id"] = model_id;
  ckpt.metadata["config"] = config_to_json(model.cfg).dump();
  model.ps->fill_checkpoint(ckpt);
  save_checkpoint(ckpt, path);
}

template <typename T>
DetectorModel<T> load_detector(const std::string& path, std::string* model_id) {
  Checkpoint<T> ckpt = load_checkpoint<T>(path);
  if (ckpt.metadata.at("kind") != "detector")
    throw std::runtime_error("not a detector checkpoint: " + path);
  DetectorConfig cfg = config_from_json(json::parse(ckpt.metadata.at("config")));
  DetectorModel<T> model = build_detector<T>(cfg);
  model.ps->load_from_checkpoint(ckpt);
  if (model_id) *model_id = ckpt.metadata.at("model_id");
  return model;
}

template <typename T>
std::vector<double> predict_manifest(DetectorModel<T>& model,
                                     const CohortManifest& manifest,
                                     int batch_size) {
  std::vector<double> out;
  std::vector<size_t> rows(manifest.records.size());
  std::iota(rows.begin(), rows.end(), 0);
  for (size_t start = 0; start < rows.size();
       start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> chunk(
        rows.begin() + static_cast<std::ptrdiff_t>(start),
        rows.begin() + static_cast<std::ptrdiff_t>(
                           std::min(rows.size(),
                                    start + static_cast<size_t>(batch_size))));
    Tensor<T> x = load_batch<T>(manifest, chunk, model.cfg.input_dims);
    auto probs = predict_proba(model, x);
    out.insert(out.end(), probs.begin(), probs.end());
  }
  return out;
}

#define SDH_DETNET_INST(T)                                                        \
  template struct DetectorModel<T>;                                               \
  template DetectorModel<T> build_detector<T>(const DetectorConfig&);             \
  template std::vector<double> predict_proba<T>(DetectorModel<T>&,                \
                                                const Tensor<T>&);                \
  template TrainState train_detector<T>(DetectorModel<T>&, const CohortManifest&, \
                                        const TrainConfig&, const MetricHook&);   \
  template void save_detector<T>(const DetectorModel<T>&, const std::string&,     \
                                 const std::string&);                             \
  template DetectorModel<T> load_detector<T>(const std::string&, std::string*);   \
  template std::vector<double> predict_manifest<T>(DetectorModel<T>&,             \
                                                   const CohortManifest&, int);

SDH_DETNET_INST(float)
SDH_DETNET_INST(double)

}  // namespace sdh::detnet
