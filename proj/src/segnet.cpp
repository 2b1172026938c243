#include "sdh/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sdh/evalens.hpp"
#include "sdh/tensor/checkpoint.hpp"

namespace sdh::segnet {

using nlohmann::json;
using namespace sdh::tensor;

void SegConfig::validate() const {
  for (int i = 1; i < 4; ++i)
    if (encoder_channels[i] <= encoder_channels[i - 1])
      throw std::runtime_error("segnet: encoder channels must strictly increase");
  if (bottleneck <= encoder_channels[3])
    throw std::runtime_error("segnet: bottleneck must exceed the last encoder width");
  if (convs_per_block < 1) throw std::runtime_error("segnet: convs_per_block >= 1");
  if (lambda_dice < 0.0 || lambda_dice > 1.0)
    throw std::runtime_error("segnet: lambda must lie in [0,1]");
  double wsum = deep_supervision_weights[0] + deep_supervision_weights[1] +
                deep_supervision_weights[2];
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::runtime_error("segnet: deep supervision weights must sum to 1");
  if (in_hw % 16 != 0)
    throw std::runtime_error("segnet: input side must be divisible by 16");
  if (use_transformer) {
    if (in_hw % patch != 0)
      throw std::runtime_error("segnet: input side not divisible by patch");
    if (stages < 1 || stages > 3)
      throw std::runtime_error("segnet: stages must lie in [1,3]");
    int64_t grid = in_hw / patch;
    for (int s = 0; s < stages; ++s) {
      if (grid % window != 0 || grid < window)
        throw std::runtime_error("segnet: stage grid not divisible by window");
      int64_t dim = static_cast<int64_t>(embed_dim) << s;
      int64_t heads = std::max<int64_t>(1, dim / head_divisor);
      if (dim % heads != 0)
        throw std::runtime_error("segnet: stage dim not divisible by heads");
      grid /= 2;
    }
  }
}

// ---- submodules -------------------------------------------------------------

template <typename T>
AttentionGate<T>::AttentionGate(ParamSet<T>& ps, const std::string& name,
                                int64_t channels, int reduction) {
  int64_t hidden = std::max<int64_t>(1, channels / reduction);
  fc1 = nn::LinearLayer<T>(ps, name + ".fc1", channels, hidden);
  fc2 = nn::LinearLayer<T>(ps, name + ".fc2", hidden, channels);
  spatial = nn::Conv2dLayer<T>(ps, name + ".spatial", 2, 1, 7, 3);
}

template <typename T>
Tensor<T> AttentionGate<T>::forward(const Tensor<T>& x) const {
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  // channel recalibration from global average and max descriptors
  Tensor<T> avg = reshape(reduce_mean(x, {2, 3}), {N, C});
  Tensor<T> mx = reshape(reduce_max(x, {2, 3}), {N, C});
  Tensor<T> scores = add(fc2.forward(relu(fc1.forward(avg))),
                         fc2.forward(relu(fc1.forward(mx))));
  Tensor<T> gate_c = expand(reshape(sigmoid(scores), {N, C, 1, 1}), x.shape());
  Tensor<T> xg = mul(x, gate_c);
  // spatial recalibration from channel mean/max maps
  Tensor<T> mean_c = reduce_mean(xg, {1});
  Tensor<T> max_c = reduce_max(xg, {1});
  Tensor<T> sp = sigmoid(spatial.forward(concat<T>({mean_c, max_c}, 1)));
  return mul(xg, expand(sp, {N, C, H, W}));
}

template <typename T>
ResBlock<T>::ResBlock(ParamSet<T>& ps, const std::string& name, int64_t cin,
                      int64_t cout, int n_convs, double dropout, double slope_)
    : dropout_p(dropout), slope(slope_) {
  for (int i = 0; i < n_convs; ++i) {
    int64_t in = i == 0 ? cin : cout;
    convs.emplace_back(ps, name + ".conv" + std::to_string(i), in, cout);
    bns.emplace_back(ps, name + ".bn" + std::to_string(i), cout);
  }
  has_proj = cin != cout;
  if (has_proj) proj = nn::Conv2dLayer<T>(ps, name + ".proj", cin, cout, 1, 0);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, bool train,
                               nn::DropoutStream& drop) {
  Tensor<T> h = x;
  for (size_t i = 0; i < convs.size(); ++i) {
    h = bns[i].forward(convs[i].forward(h), train);
    if (i + 1 < convs.size()) h = leaky_relu(h, static_cast<T>(slope));
  }
  Tensor<T> skip = has_proj ? proj.forward(x) : x;
  h = leaky_relu(add(h, skip), static_cast<T>(slope));
  return dropout(h, dropout_p, train, drop.next());
}

template <typename T>
SwinBlock<T>::SwinBlock(ParamSet<T>& ps, const std::string& name, int64_t dim,
                        int64_t window_, int64_t heads_, int64_t shift_,
                        int mlp_ratio)
    : window(window_), heads(heads_), shift(shift_) {
  ln1 = nn::LayerNormLayer<T>(ps, name + ".ln1", dim);
  msa.w_qkv = ps.param(name + ".qkv.w", {3 * dim, dim}, dim, 1.0);
  msa.b_qkv = ps.param(name + ".qkv.b", {3 * dim}, 0);
  msa.w_proj = ps.param(name + ".proj.w", {dim, dim}, dim, 1.0);
  msa.b_proj = ps.param(name + ".proj.b", {dim}, 0);
  ln2 = nn::LayerNormLayer<T>(ps, name + ".ln2", dim);
  mlp1 = nn::LinearLayer<T>(ps, name + ".mlp1", dim, mlp_ratio * dim, 1.0);
  mlp2 = nn::LinearLayer<T>(ps, name + ".mlp2", mlp_ratio * dim, dim, 1.0);
}

template <typename T>
Tensor<T> SwinBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = window_msa(ln1.forward(x), msa, window, heads, shift);
  Tensor<T> y = add(x, h);
  Tensor<T> h2 = mlp2.forward(gelu(mlp1.forward(ln2.forward(y))));
  return add(y, h2);
}

// ---- model ------------------------------------------------------------------

template <typename T>
SegModel<T> build_segmenter(const SegConfig& cfg) {
  cfg.validate();
  SegModel<T> m;
  m.cfg = cfg;
  m.ps = std::make_unique<ParamSet<T>>(hash_mix(cfg.seed, 0x5e97e7));
  ParamSet<T>& ps = *m.ps;
  const auto& ec = cfg.encoder_channels;

  int64_t in = cfg.in_channels;
  for (int i = 0; i < 4; ++i) {
    m.enc[i] = ResBlock<T>(ps, "enc" + std::to_string(i), in, ec[i],
                           cfg.convs_per_block, cfg.dropout_p, cfg.leaky_slope);
    in = ec[i];
  }
  m.bottleneck = ResBlock<T>(ps, "bottleneck", ec[3], cfg.bottleneck,
                             cfg.convs_per_block, cfg.dropout_p, cfg.leaky_slope);

  // decoder: deepest to finest, target widths ec[3], ec[2], ec[1], ec[0]
  int64_t cur = cfg.bottleneck;
  for (int i = 0; i < 4; ++i) {
    int64_t out = ec[3 - i];
    m.up_conv[i] = nn::Conv2dLayer<T>(ps, "up" + std::to_string(i) + ".conv", cur, out);
    m.up_bn[i] = nn::BatchNormLayer<T>(ps, "up" + std::to_string(i) + ".bn", out);
    m.gate[i] = AttentionGate<T>(ps, "gate" + std::to_string(i), out,
                                 cfg.attention_reduction);
    m.dec[i] = ResBlock<T>(ps, "dec" + std::to_string(i), 2 * out, out,
                           cfg.convs_per_block, cfg.dropout_p, cfg.leaky_slope);
    cur = out;
  }
  m.head_final = nn::Conv2dLayer<T>(ps, "head_final", ec[0], 1, 1, 0);
  m.head_a = nn::Conv2dLayer<T>(ps, "head_a", ec[2], 1, 1, 0);
  m.head_b = nn::Conv2dLayer<T>(ps, "head_b", ec[1], 1, 1, 0);

  if (cfg.use_transformer) {
    const int64_t d0 = cfg.embed_dim;
    m.embed = nn::LinearLayer<T>(ps, "tok.embed",
                                 static_cast<int64_t>(cfg.patch) * cfg.patch *
                                     cfg.in_channels,
                                 d0, 1.0);
    for (int s = 0; s < cfg.stages; ++s) {
      int64_t dim = d0 << s;
      int64_t heads = std::max<int64_t>(1, dim / cfg.head_divisor);
      m.blocks.emplace_back(ps, "tok.stage" + std::to_string(s) + ".b0", dim,
                            cfg.window, heads, 0, cfg.mlp_ratio);
      m.blocks.emplace_back(ps, "tok.stage" + std::to_string(s) + ".b1", dim,
                            cfg.window, heads, cfg.window / 2, cfg.mlp_ratio);
      if (s + 1 < cfg.stages)
        m.merges.emplace_back(ps, "tok.merge" + std::to_string(s), 4 * dim,
                              2 * dim, 1.0);
    }
    for (int s = cfg.stages - 1; s >= 1; --s) {
      int64_t dim = d0 << s;
      m.expands.emplace_back(ps, "tok.expand" + std::to_string(s), dim, 2 * dim,
                             1.0);
      m.fuse_reduce.emplace_back(ps, "tok.reduce" + std::to_string(s), dim, dim / 2,
                                 1.0);
    }
    m.tok_head_fine = nn::LinearLayer<T>(ps, "tok.head_fine", d0, 1, 1.0);
    int64_t mid_dim = cfg.stages >= 2 ? d0 * 2 : d0;
    m.tok_head_mid = nn::LinearLayer<T>(ps, "tok.head_mid", mid_dim, 1, 1.0);
  }

  int fuse_in = cfg.use_transformer ? 2 : 1;
  m.fuse_a = nn::Conv2dLayer<T>(ps, "fuse_a", fuse_in, 1, 1, 0);
  m.fuse_b = nn::Conv2dLayer<T>(ps, "fuse_b", fuse_in, 1, 1, 0);
  m.fuse_final = nn::Conv2dLayer<T>(ps, "fuse_final", 3, 1, 1, 0);
  return m;
}

namespace {

// swin linear layers keep (B, H, W, C) channel-last layout; image maps are
// (N, C, H, W); this flips between them
template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& t) {
  return transpose(t, {0, 3, 1, 2});
}

}  // namespace

template <typename T>
SegLogits<T> SegModel<T>::forward(const Tensor<T>& x, bool train,
                                  nn::DropoutStream& drop) {
  const SegConfig& c = cfg;
  if (x.rank() != 4 || x.dim(1) != c.in_channels || x.dim(2) != c.in_hw ||
      x.dim(3) != c.in_hw)
    throw std::runtime_error("segnet: input shape mismatch");
  const int64_t H = c.in_hw;

  // convolutional encoder
  Tensor<T> e0 = enc[0].forward(x, train, drop);
  Tensor<T> e1 = enc[1].forward(maxpool2d(e0, 2, 2), train, drop);
  Tensor<T> e2 = enc[2].forward(maxpool2d(e1, 2, 2), train, drop);
  Tensor<T> e3 = enc[3].forward(maxpool2d(e2, 2, 2), train, drop);
  Tensor<T> bott = bottleneck.forward(maxpool2d(e3, 2, 2), train, drop);

  // decoder with attention-gated skips
  std::array<Tensor<T>, 4> skips = {e3, e2, e1, e0};
  Tensor<T> d = bott;
  std::array<Tensor<T>, 4> dec_out;
  for (int i = 0; i < 4; ++i) {
    const Tensor<T>& skip = skips[static_cast<size_t>(i)];
    Tensor<T> up = interpolate2d(d, skip.dim(2), skip.dim(3));
    up = leaky_relu(up_bn[i].forward(up_conv[i].forward(up), train),
                    static_cast<T>(c.leaky_slope));
    Tensor<T> gated = gate[i].forward(skip);
    d = dec[i].forward(concat<T>({up, gated}, 1), train, drop);
    dec_out[static_cast<size_t>(i)] = d;
  }
  Tensor<T> conv_final = head_final.forward(dec_out[3]);  // (N,1,H,W)
  Tensor<T> inter_a = head_a.forward(dec_out[1]);         // (N,1,H/4,H/4)
  Tensor<T> inter_b = head_b.forward(dec_out[2]);         // (N,1,H/2,H/2)

  Tensor<T> a_in = inter_a, b_in = inter_b;
  if (c.use_transformer) {
    Tensor<T> tokens = embed.forward(patch_partition(transpose(x, {0, 2, 3, 1}),
                                                     c.patch));
    std::vector<Tensor<T>> stage_out;
    for (int s = 0; s < c.stages; ++s) {
      tokens = blocks[static_cast<size_t>(2 * s)].forward(tokens);
      tokens = blocks[static_cast<size_t>(2 * s + 1)].forward(tokens);
      stage_out.push_back(tokens);
      if (s + 1 < c.stages)
        tokens = patch_merge(tokens, merges[static_cast<size_t>(s)].w,
                             merges[static_cast<size_t>(s)].b);
    }
    Tensor<T> cur = stage_out.back();
    Tensor<T> tok_mid = stage_out.back();
    size_t idx = 0;
    for (int s = c.stages - 1; s >= 1; --s, ++idx) {
      cur = patch_expand(cur, expands[idx].w, expands[idx].b);
      cur = fuse_reduce[idx].forward(
          concat<T>({cur, stage_out[static_cast<size_t>(s - 1)]}, 3));
      if (s - 1 == 1) tok_mid = cur;
    }
    Tensor<T> tmap_fine = tokens_to_map(tok_head_fine.forward(cur));
    Tensor<T> tmap_mid = tokens_to_map(tok_head_mid.forward(tok_mid));
    a_in = concat<T>({inter_a, interpolate2d(tmap_fine, H / 4, H / 4)}, 1);
    b_in = concat<T>({inter_b, interpolate2d(tmap_mid, H / 2, H / 2)}, 1);
  }
  Tensor<T> fused_a = fuse_a.forward(a_in);  // (N,1,H/4,H/4)
  Tensor<T> fused_b = fuse_b.forward(b_in);  // (N,1,H/2,H/2)

  Tensor<T> up_a = interpolate2d(fused_a, H, H);
  Tensor<T> up_b = interpolate2d(fused_b, H, H);
  Tensor<T> final_logit =
      fuse_final.forward(concat<T>({conv_final, up_a, up_b}, 1));

  SegLogits<T> out;
  out.inter_a = up_a;
  out.inter_b = up_b;
  out.final = final_logit;
  return out;
}

// ---- losses -------------------------------------------------------------

template <typename T>
Tensor<T> composite_loss(const std::array<Tensor<T>, 3>& prob_maps,
                         const Tensor<T>& target, double lambda,
                         const std::array<double, 3>& weights) {
  double wsum = weights[0] + weights[1] + weights[2];
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::runtime_error("composite_loss: weights must sum to 1");
  Tensor<T> total;
  for (int i = 0; i < 3; ++i) {
    Tensor<T> dice = dice_loss(prob_maps[static_cast<size_t>(i)], target, T(1e-6));
    Tensor<T> bce = bce_probs(prob_maps[static_cast<size_t>(i)], target);
    Tensor<T> term = add(mul_scalar(dice, static_cast<T>(lambda)),
                         mul_scalar(bce, static_cast<T>(1.0 - lambda)));
    term = mul_scalar(term, static_cast<T>(weights[static_cast<size_t>(i)]));
    total = i == 0 ? term : add(total, term);
  }
  return total;
}

template <typename T>
Tensor<T> composite_loss_logits(const SegLogits<T>& logits, const Tensor<T>& target,
                                double lambda, const std::array<double, 3>& weights) {
  double wsum = weights[0] + weights[1] + weights[2];
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::runtime_error("composite_loss: weights must sum to 1");
  std::array<Tensor<T>, 3> maps = {logits.inter_a, logits.inter_b, logits.final};
  Tensor<T> total;
  for (int i = 0; i < 3; ++i) {
    Tensor<T> dice = dice_loss(sigmoid(maps[static_cast<size_t>(i)]), target, T(1e-6));
    Tensor<T> bce = bce_with_logits(maps[static_cast<size_t>(i)], target, T(1));
    Tensor<T> term = add(mul_scalar(dice, static_cast<T>(lambda)),
                         mul_scalar(bce, static_cast<T>(1.0 - lambda)));
    term = mul_scalar(term, static_cast<T>(weights[static_cast<size_t>(i)]));
    total = i == 0 ? term : add(total, term);
  }
  return total;
}

// ---- data helpers ---------------------------------------------------------

namespace {

void rotate90(std::vector<float>& f, std::vector<uint8_t>& m, int64_t hw) {
  std::vector<float> tf(f.size());
  std::vector<uint8_t> tm(m.size());
  for (int64_t y = 0; y < hw; ++y)
    for (int64_t x = 0; x < hw; ++x) {
      // (y, x) -> (x, hw-1-y)
      tf[static_cast<size_t>(x * hw + (hw - 1 - y))] = f[static_cast<size_t>(y * hw + x)];
      tm[static_cast<size_t>(x * hw + (hw - 1 - y))] = m[static_cast<size_t>(y * hw + x)];
    }
  f = std::move(tf);
  m = std::move(tm);
}

void flip_h(std::vector<float>& f, std::vector<uint8_t>& m, int64_t hw) {
  for (int64_t y = 0; y < hw; ++y)
    for (int64_t x = 0; x < hw / 2; ++x) {
      std::swap(f[static_cast<size_t>(y * hw + x)],
                f[static_cast<size_t>(y * hw + (hw - 1 - x))]);
      std::swap(m[static_cast<size_t>(y * hw + x)],
                m[static_cast<size_t>(y * hw + (hw - 1 - x))]);
    }
}

void flip_v(std::vector<float>& f, std::vector<uint8_t>& m, int64_t hw) {
  for (int64_t y = 0; y < hw / 2; ++y)
    for (int64_t x = 0; x < hw; ++x) {
      std::swap(f[static_cast<size_t>(y * hw + x)],
                f[static_cast<size_t>((hw - 1 - y) * hw + x)]);
      std::swap(m[static_cast<size_t>(y * hw + x)],
                m[static_cast<size_t>((hw - 1 - y) * hw + x)]);
    }
}

}  // namespace

void augment(std::vector<float>& slice, std::vector<uint8_t>& mask, int64_t hw,
             uint64_t seed) {
  if (slice.size() != static_cast<size_t>(hw * hw) || slice.size() != mask.size())
    throw std::runtime_error("augment: slice/mask size mismatch");
  Rng rng(seed);
  int quarter_turns = static_cast<int>(rng.uniform_int(4));
  bool fh = rng.bernoulli(0.5);
  bool fv = rng.bernoulli(0.5);
  for (int k = 0; k < quarter_turns; ++k) rotate90(slice, mask, hw);
  if (fh) flip_h(slice, mask, hw);
  if (fv) flip_v(slice, mask, hw);
}

std::vector<float> make_channels(const std::vector<float>& hu, const SegConfig& cfg) {
  std::vector<float> out(hu.size() * 3);
  for (int ch = 0; ch < 3; ++ch) {
    const double lo = cfg.channel_windows[static_cast<size_t>(ch)][0];
    const double hi = cfg.channel_windows[static_cast<size_t>(ch)][1];
    const float flo = static_cast<float>(lo);
    const float inv = static_cast<float>(1.0 / (hi - lo));
    float* dst = out.data() + static_cast<size_t>(ch) * hu.size();
    for (size_t i = 0; i < hu.size(); ++i) {
      float v = (hu[i] - flo) * inv;
      dst[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    }
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> slices_to_batch(const std::vector<const SliceSample*>& samples,
                          const SegConfig& cfg) {
  const int64_t n = static_cast<int64_t>(samples.size());
  const int64_t hw = cfg.in_hw;
  const int64_t plane = hw * hw;
  Tensor<T> x = Tensor<T>::zeros({n, 3, hw, hw});
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    auto channels = make_channels(samples[static_cast<size_t>(i)]->hu, cfg);
    T* dst = x.data().data() + i * 3 * plane;
    for (int64_t j = 0; j < 3 * plane; ++j)
      dst[j] = static_cast<T>(channels[static_cast<size_t>(j)]);
  }
  return x;
}

template <typename T>
Tensor<T> masks_to_batch(const std::vector<const SliceSample*>& samples, int64_t hw) {
  const int64_t n = static_cast<int64_t>(samples.size());
  const int64_t plane = hw * hw;
  Tensor<T> g = Tensor<T>::zeros({n, 1, hw, hw});
  for (int64_t i = 0; i < n; ++i) {
    T* dst = g.data().data() + i * plane;
    const auto& m = samples[static_cast<size_t>(i)]->mask;
    for (int64_t j = 0; j < plane; ++j) dst[j] = static_cast<T>(m[static_cast<size_t>(j)]);
  }
  return g;
}

}  // namespace

template <typename T>
SegTrainState train_segmenter(SegModel<T>& model,
                              const std::vector<SliceSample>& train_slices,
                              const std::vector<SliceSample>& val_slices,
                              const SegTrainConfig& tc, const MetricHook& hook) {
  if (train_slices.empty())
    throw std::runtime_error("train_segmenter: empty annotation set");
  if (val_slices.empty())
    throw std::runtime_error("train_segmenter: empty validation set");
  const int64_t hw = model.cfg.in_hw;

  // materialize the augmented pool once: originals plus augment_copies
  // randomly transformed copies of each slice
  std::vector<SliceSample> pool = train_slices;
  for (int copy = 0; copy < tc.augment_copies; ++copy)
    for (size_t i = 0; i < train_slices.size(); ++i) {
      SliceSample s = train_slices[i];
      augment(s.hu, s.mask, hw,
              hash_mix(tc.seed, 0xa06 + copy * 1000003 + i * 7919));
      pool.push_back(std::move(s));
    }

  AdamW<T> opt;
  opt.lr = static_cast<T>(tc.lr);
  opt.weight_decay = static_cast<T>(tc.weight_decay);

  SegTrainState state;
  std::vector<std::vector<T>> best_snapshot;
  uint64_t step = 0;

  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    Rng order_rng(hash_mix(tc.seed, 0x5e9e + static_cast<uint64_t>(epoch)));
    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(tc.batch_size)) {
      std::vector<const SliceSample*> chunk;
      for (size_t i = start;
           i < std::min(order.size(), start + static_cast<size_t>(tc.batch_size)); ++i)
        chunk.push_back(&pool[order[i]]);
      Tensor<T> x = slices_to_batch<T>(chunk, model.cfg);
      Tensor<T> g = masks_to_batch<T>(chunk, hw);

      nn::DropoutStream drop{hash_mix(tc.seed, 0xd05 + step), 0};
      Tape<T> tape;
      SegLogits<T> logits = model.forward(x, /*train=*/true, drop);
      Tensor<T> loss = composite_loss_logits(logits, g, model.cfg.lambda_dice,
                                             model.cfg.deep_supervision_weights);
      tape.backward(loss);
      opt.step(std::span<Parameter<T>>(model.ps->params().data(),
                                       model.ps->params().size()));
      model.ps->zero_grad();
      loss_sum += static_cast<double>(loss.item());
      ++batches;
      ++step;
    }
    state.epoch_loss.push_back(loss_sum / static_cast<double>(std::max<int64_t>(1, batches)));

    // validation Dice at threshold 0.5
    double dice_lesion_sum = 0.0, dice_all_sum = 0.0;
    int64_t lesion_count = 0;
    for (size_t start = 0; start < val_slices.size();
         start += static_cast<size_t>(tc.batch_size)) {
      std::vector<const SliceSample*> chunk;
      for (size_t i = start;
           i < std::min(val_slices.size(), start + static_cast<size_t>(tc.batch_size));
           ++i)
        chunk.push_back(&val_slices[i]);
      Tensor<T> x = slices_to_batch<T>(chunk, model.cfg);
      nn::DropoutStream drop;
      SegLogits<T> out = model.forward(x, /*train=*/false, drop);
      const int64_t plane = hw * hw;
      for (size_t i = 0; i < chunk.size(); ++i) {
        std::vector<uint8_t> pred(static_cast<size_t>(plane));
        const T* z = out.final.data().data() + static_cast<int64_t>(i) * plane;
        for (int64_t j = 0; j < plane; ++j)
          pred[static_cast<size_t>(j)] = z[j] >= T(0) ? 1 : 0;  // sigmoid(z) >= 0.5
        double dice = evalens::dice_score(pred, chunk[i]->mask);
        dice_all_sum += dice;
        bool has_lesion = false;
        for (uint8_t v : chunk[i]->mask)
          if (v) {
            has_lesion = true;
            break;
          }
        if (has_lesion) {
          dice_lesion_sum += dice;
          ++lesion_count;
        }
      }
    }
    double val_dice = lesion_count > 0
                          ? dice_lesion_sum / static_cast<double>(lesion_count)
                          : dice_all_sum / static_cast<double>(val_slices.size());
    double val_dice_all = dice_all_sum / static_cast<double>(val_slices.size());
    state.epoch_val_dice.push_back(val_dice);
    state.epoch_val_dice_all.push_back(val_dice_all);
    state.epochs_run = epoch + 1;
    if (hook) {
      hook(epoch, "train_loss", state.epoch_loss.back());
      hook(epoch, "val_dice", val_dice);
      hook(epoch, "val_dice_all", val_dice_all);
    }

    if (val_dice > state.best_val_dice || state.best_epoch < 0) {
      state.best_val_dice = val_dice;
      state.best_epoch = epoch;
      best_snapshot = model.ps->snapshot();
    } else if (epoch - state.best_epoch >= tc.patience) {
      break;  // early stop on stalled validation Dice
    }
  }
  if (!best_snapshot.empty()) model.ps->restore(best_snapshot);
  return state;
}

template <typename T>
std::vector<std::vector<float>> predict_maps(SegModel<T>& model, const Volume& hu,
                                             int batch_size) {
  if (hu.header.dtype != dataio::Dtype::f32)
    throw std::runtime_error("predict_maps: expected a float HU volume");
  if (hu.depth() != 15)
    throw std::runtime_error("predict_maps: expected a 15-slice study, got " +
                             std::to_string(hu.depth()));
  const int64_t hw = model.cfg.in_hw;
  if (hu.height() != hw || hu.width() != hw)
    throw std::runtime_error("predict_maps: slice size mismatch");
  const int64_t plane = hw * hw;

  std::vector<std::vector<float>> maps;
  for (int64_t start = 0; start < hu.depth(); start += batch_size) {
    int64_t count = std::min<int64_t>(batch_size, hu.depth() - start);
    std::vector<SliceSample> tmp(static_cast<size_t>(count));
    std::vector<const SliceSample*> chunk;
    for (int64_t i = 0; i < count; ++i) {
      tmp[static_cast<size_t>(i)].hu.assign(
          hu.f32.begin() + (start + i) * plane,
          hu.f32.begin() + (start + i + 1) * plane);
      tmp[static_cast<size_t>(i)].mask.assign(static_cast<size_t>(plane), 0);
      chunk.push_back(&tmp[static_cast<size_t>(i)]);
    }
    Tensor<T> x = slices_to_batch<T>(chunk, model.cfg);
    nn::DropoutStream drop;
    SegLogits<T> out = model.forward(x, /*train=*/false, drop);
    for (int64_t i = 0; i < count; ++i) {
      std::vector<float> map(static_cast<size_t>(plane));
      const T* z = out.final.data().data() + i * plane;
      for (int64_t j = 0; j < plane; ++j)
        map[static_cast<size_t>(j)] =
            static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(z[j]))));
      maps.push_back(std::move(map));
    }
  }
  return maps;
}

// ---- checkpoints ------------------------------------------------------------

namespace {

json seg_config_to_json(const SegConfig& c) {
  return json{{"encoder_channels", c.encoder_channels},
              {"bottleneck", c.bottleneck},
              {"convs_per_block", c.convs_per_block},
              {"dropout_p", c.dropout_p},
              {"leaky_slope", c.leaky_slope},
              {"attention_reduction", c.attention_reduction},
              {"use_transformer", c.use_transformer},
              {"patch", c.patch},
              {"window", c.window},
              {"embed_dim", c.embed_dim},
              {"stages", c.stages},
              {"head_divisor", c.head_divisor},
              {"mlp_ratio", c.mlp_ratio},
              {"lambda_dice", c.lambda_dice},
              {"deep_supervision_weights", c.deep_supervision_weights},
              {"in_channels", c.in_channels},
              {"in_hw", c.in_hw},
              {"channel_windows", c.channel_windows},
              {"seed", c.seed}};
}

SegConfig seg_config_from_json(const json& j) {
  SegConfig c;
  c.encoder_channels = j.at("encoder_channels").get<std::array<int, 4>>();
  c.bottleneck = j.at("bottleneck").get<int>();
  c.convs_per_block = j.at("convs_per_block").get<int>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.attention_reduction = j.at("attention_reduction").get<int>();
  c.use_transformer = j.at("use_transformer").get<bool>();
  c.patch = j.at("patch").get<int>();
  c.window = j.at("window").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.stages = j.at("stages").get<int>();
  c.head_divisor = j.at("head_divisor").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  c.lambda_dice = j.at("lambda_dice").get<double>();
  c.deep_supervision_weights =
      j.at("deep_supervision_weights").get<std::array<double, 3>>();
  c.in_channels = j.at("in_channels").get<int>();
  c.in_hw = j.at("in_hw").get<int64_t>();
  c.channel_windows =
      j.at("channel_windows").get<std::array<std::array<double, 2>, 3>>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

template <typename T>
void save_segmenter(const SegModel<T>& model, const std::string& path,
                    const std::string& model_id) {
  Checkpoint<T> ckpt;
  ckpt.metadata["kind"] = "segmenter";
  ckpt.metadata["model_id"] = model_id;
  ckpt.metadata["config"] = seg_config_to_json(model.cfg).dump();
  model.ps->fill_checkpoint(ckpt);
  save_checkpoint(ckpt, path);
}

template <typename T>
SegModel<T> load_segmenter(const std::string& path, std::string* model_id) {
  Checkpoint<T> ckpt = load_checkpoint<T>(path);
  if (ckpt.metadata.at("kind") != "segmenter")
    throw std::runtime_error("not a segmenter checkpoint: " + path);
  SegConfig cfg = seg_config_from_json(json::parse(ckpt.metadata.at("config")));
  SegModel<T> model = build_segmenter<T>(cfg);
  model.ps->load_from_checkpoint(ckpt);
  if (model_id) *model_id = ckpt.metadata.at("model_id");
  return model;
}

#define SDH_SEGNET_INST(T)                                                       \
  template struct AttentionGate<T>;                                             \
  template struct ResBlock<T>;                                                  \
  template struct SwinBlock<T>;                                                 \
  template struct SegModel<T>;                                                  \
  template SegModel<T> build_segmenter<T>(const SegConfig&);                    \
  template Tensor<T> composite_loss<T>(const std::array<Tensor<T>, 3>&,         \
                                       const Tensor<T>&, double,                \
                                       const std::array<double, 3>&);           \
  template Tensor<T> composite_loss_logits<T>(const SegLogits<T>&,              \
                                              const Tensor<T>&, double,         \
                                              const std::array<double, 3>&);    \
  template SegTrainState train_segmenter<T>(                                    \
      SegModel<T>&, const std::vector<SliceSample>&,                            \
      const std::vector<SliceSample>&, const SegTrainConfig&, const MetricHook&); \
  template std::vector<std::vector<float>> predict_maps<T>(SegModel<T>&,        \
                                                           const Volume&, int); \
  template void save_segmenter<T>(const SegModel<T>&, const std::string&,       \
                                  const std::string&);                          \
  template SegModel<T> load_segmenter<T>(const std::string&, std::string*);

SDH_SEGNET_INST(float)
SDH_SEGNET_INST(double)

}  // namespace sdh::segnet
