#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaide/encoding.hpp"
#include "gaide/graph.hpp"
#include "gaide/kinematics.hpp"
#include "gaide/nn.hpp"
#include "gaide/tensor.hpp"

namespace gaide {

// Which encoder layers apply the structure-graph mask.
enum class MaskSchedule : std::uint32_t {
  kInterleaved = 0,  // masked on even layers, layer 0 masked
  kNoneMask = 1,     // vanilla transformer (GAIDE-V)
  kAllMask = 2,      // mask at every encoder layer (GAIDE-H)
};

inline bool layer_is_masked(MaskSchedule schedule, std::size_t layer) {
  switch (schedule) {
    case MaskSchedule::kInterleaved: return layer % 2 == 0;
    case MaskSchedule::kNoneMask: return false;
    case MaskSchedule::kAllMask: return true;
  }
  return false;
}

inline const char* mask_schedule_name(MaskSchedule s) {
  switch (s) {
    case MaskSchedule::kInterleaved: return "interleaved";
    case MaskSchedule::kNoneMask: return "none";
    case MaskSchedule::kAllMask: return "all";
  }
  return "?";
}

struct GaideHyper {
  std::size_t dof = 2;
  std::size_t h = 64;
  std::size_t heads = 4;
  std::size_t enc_layers = 4;
  std::size_t dec_layers = 2;
  double dropout_p = 0.1;
  MaskSchedule schedule = MaskSchedule::kInterleaved;
  std::size_t k_r = 16;       // robot centroids
  std::size_t k_w = 16;       // workspace centroids
  std::size_t n_r = 256;      // robot cloud points
  std::size_t n_w = 512;      // workspace cloud points
  double sa_radius_robot = 0.4;
  double sa_radius_scene = 0.6;
  std::size_t sa_max_group = 32;

  void validate() const {
    if (h % heads != 0)
      throw std::invalid_argument("hyper: width " + std::to_string(h) +
                                  " not divisible by " + std::to_string(heads) + " heads");
    if (h % 2 != 0) throw std::invalid_argument("hyper: width must be even");
    if (enc_layers < 1 || dec_layers < 1)
      throw std::invalid_argument("hyper: need at least one encoder and decoder layer");
    if (k_r > n_r || k_w > n_w)
      throw std::invalid_argument("hyper: centroid count exceeds cloud size");
  }
};

// Dropout / stochasticity context threaded through a forward pass.
struct ForwardCtx {
  DropoutMode mode = DropoutMode::kEval;
  double p = 0.0;
  Rng* rng = nullptr;

  Tensor drop(const Tensor& x) const {
    if (mode == DropoutMode::kEval || p == 0.0) return x;
    if (!rng) throw std::runtime_error("forward: stochastic mode without an rng");
    return dropout(x, p, mode, *rng);
  }
};

struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, o_proj;
  std::size_t heads = 1;

  MultiHeadAttention() = default;

  MultiHeadAttention(std::size_t h, std::size_t heads_, Rng& rng)
      : q_proj(h, h, rng), k_proj(h, h, rng), v_proj(h, h, rng), o_proj(h, h, rng),
        heads(heads_) {}

  // Scaled dot-product attention, per head, with an optional additive bias of
  // 0 / -inf entries. When attn_out is given, the per-head softmax weights
  // are appended to it.
  Tensor forward(const Tensor& x_q, const Tensor& x_kv, const Tensor* bias,
                 std::vector<Tensor>* attn_out = nullptr) const {
    const std::size_t h = q_proj.w.dim(0);
    if (x_q.dim(1) != h || x_kv.dim(1) != h)
      throw std::invalid_argument("attention: token width mismatch, " +
                                  shape_str(x_q.shape()) + " / " + shape_str(x_kv.shape()) +
                                  " vs width " + std::to_string(h));
    if (bias && (bias->dim(0) != x_q.dim(0) || bias->dim(1) != x_kv.dim(0)))
      throw std::invalid_argument("attention: bias " + shape_str(bias->shape()) +
                                  " does not match " + std::to_string(x_q.dim(0)) + "x" +
                                  std::to_string(x_kv.dim(0)) + " scores");
    const std::size_t dk = h / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dk));
    Tensor q = q_proj.forward(x_q);
    Tensor k = k_proj.forward(x_kv);
    Tensor v = v_proj.forward(x_kv);
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t head = 0; head < heads; ++head) {
      Tensor qh = slice_cols(q, head * dk, (head + 1) * dk);
      Tensor kh = slice_cols(k, head * dk, (head + 1) * dk);
      Tensor vh = slice_cols(v, head * dk, (head + 1) * dk);
      Tensor scores = scale(matmul(qh, transpose(kh)), scale_factor);
      if (bias) scores = add(scores, *bias);
      Tensor weights = softmax_lastdim(scores);
      if (attn_out) attn_out->push_back(weights);
      head_outputs.push_back(matmul(weights, vh));
    }
    return o_proj.forward(concat_cols(head_outputs));
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    q_proj.collect(prefix + ".q", out);
    k_proj.collect(prefix + ".k", out);
    v_proj.collect(prefix + ".v", out);
    o_proj.collect(prefix + ".o", out);
  }
};

// Pre-norm encoder layer: attention and feed-forward sublayers, each with a
// residual connection; dropout after each sublayer.
struct EncoderLayer {
  MultiHeadAttention attn;
  LayerNormParams ln1, ln2;
  Linear ff1, ff2;

  EncoderLayer() = default;

  EncoderLayer(std::size_t h, std::size_t heads, Rng& rng)
      : attn(h, heads, rng), ln1(h), ln2(h), ff1(h, 4 * h, rng), ff2(4 * h, h, rng) {}

  Tensor forward(const Tensor& x, const Tensor* bias, const ForwardCtx& ctx) const {
    Tensor normed = ln1.forward(x);
    Tensor attended = attn.forward(normed, normed, bias);
    Tensor mid = add(x, ctx.drop(attended));
    Tensor ff = ff2.forward(silu(ff1.forward(ln2.forward(mid))));
    return add(mid, ctx.drop(ff));
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    attn.collect(prefix + ".attn", out);
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
  }
};

// Pre-norm decoder layer; cross-attention to the encoder memory is never
// masked.
struct DecoderLayer {
  MultiHeadAttention self_attn, cross_attn;
  LayerNormParams ln1, ln2, ln3;
  Linear ff1, ff2;

  DecoderLayer() = default;

  DecoderLayer(std::size_t h, std::size_t heads, Rng& rng)
      : self_attn(h, heads, rng), cross_attn(h, heads, rng), ln1(h), ln2(h), ln3(h),
        ff1(h, 4 * h, rng), ff2(4 * h, h, rng) {}

  Tensor forward(const Tensor& x, const Tensor& memory, const ForwardCtx& ctx) const {
    Tensor normed = ln1.forward(x);
    Tensor self_out = self_attn.forward(normed, normed, nullptr);
    Tensor a = add(x, ctx.drop(self_out));
    Tensor cross_out = cross_attn.forward(ln2.forward(a), memory, nullptr);
    Tensor b = add(a, ctx.drop(cross_out));
    Tensor ff = ff2.forward(silu(ff1.forward(ln3.forward(b))));
    return add(b, ctx.drop(ff));
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    self_attn.collect(prefix + ".self", out);
    cross_attn.collect(prefix + ".cross", out);
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ln3.collect(prefix + ".ln3", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
  }
};

struct SamplerInput {
  Config q_t;
  Config q_goal;
  const PointCloud* robot_cloud = nullptr;
  const PointCloud* scene_cloud = nullptr;
};

struct GaideModel {
  GaideHyper hyper;
  ConfigEmbedder config_embedder;
  SetAbstractionLayer robot_sa;
  SetAbstractionLayer scene_sa;
  std::vector<EncoderLayer> encoder_layers;
  std::vector<DecoderLayer> decoder_layers;
  LayerNormParams enc_final_ln, dec_final_ln;
  Tensor start_token;  // learnable [1 x H]
  Linear output_head;  // H -> dof
  std::uint64_t train_steps = 0;

  static GaideModel init(const GaideHyper& hyper, Rng& rng) {
    hyper.validate();
    GaideModel m;
    m.hyper = hyper;
    m.config_embedder = ConfigEmbedder(hyper.dof, hyper.h, rng);
    m.robot_sa =
        SetAbstractionLayer(hyper.k_r, hyper.sa_radius_robot, hyper.sa_max_group, hyper.h, rng);
    m.scene_sa =
        SetAbstractionLayer(hyper.k_w, hyper.sa_radius_scene, hyper.sa_max_group, hyper.h, rng);
    for (std::size_t i = 0; i < hyper.enc_layers; ++i)
      m.encoder_layers.emplace_back(hyper.h, hyper.heads, rng);
    for (std::size_t i = 0; i < hyper.dec_layers; ++i)
      m.decoder_layers.emplace_back(hyper.h, hyper.heads, rng);
    m.enc_final_ln = LayerNormParams(hyper.h);
    m.dec_final_ln = LayerNormParams(hyper.h);
    m.start_token = Tensor::uniform({1, hyper.h}, rng, -0.1, 0.1).set_requires_grad(true);
    m.output_head = Linear(hyper.h, hyper.dof, rng);
    return m;
  }

  NamedParams named_parameters() const {
    NamedParams out;
    config_embedder.collect("config_embedder", out);
    robot_sa.collect("robot_sa", out);
    scene_sa.collect("scene_sa", out);
    for (std::size_t i = 0; i < encoder_layers.size(); ++i)
      encoder_layers[i].collect("enc" + std::to_string(i), out);
    for (std::size_t i = 0; i < decoder_layers.size(); ++i)
      decoder_layers[i].collect("dec" + std::to_string(i), out);
    enc_final_ln.collect("enc_final_ln", out);
    dec_final_ln.collect("dec_final_ln", out);
    out.emplace_back("start_token", start_token);
    output_head.collect("output_head", out);
    return out;
  }

  // Encoder over the [z_robot; z_w] token sequence, robot tokens first, with
  // sinusoidal positions and the mask schedule. layer_trace, when given,
  // receives the output of every layer.
  Tensor encode(const Tensor& z_robot, const Tensor& z_w, const StructureGraph& graph,
                const ForwardCtx& ctx, std::vector<Tensor>* layer_trace = nullptr) const {
    if (z_robot.dim(1) != hyper.h || z_w.dim(1) != hyper.h)
      throw std::invalid_argument("encode: token width mismatch " + shape_str(z_robot.shape()) +
                                  " / " + shape_str(z_w.shape()));
    if (graph.n_robot != z_robot.dim(0) || graph.n_work != z_w.dim(0))
      throw std::invalid_argument(
          "encode: graph is " + std::to_string(graph.n_robot) + "+" +
          std::to_string(graph.n_work) + " nodes for " + std::to_string(z_robot.dim(0)) + "+" +
          std::to_string(z_w.dim(0)) + " tokens");
    const AttentionBias bias = adjacency_to_bias(graph);
    Tensor x = concat_rows({z_robot, z_w});
    x = add(x, sinusoidal_pe(x.dim(0), hyper.h));
    for (std::size_t i = 0; i < encoder_layers.size(); ++i) {
      const bool masked = layer_is_masked(hyper.schedule, i);
      x = encoder_layers[i].forward(x, masked ? &bias.matrix : nullptr, ctx);
      if (layer_trace) layer_trace->push_back(x);
    }
    return enc_final_ln.forward(x);
  }

  // Single learnable-token decoder conditioned on the encoder output;
  // produces the delta joint angle.
  Tensor decode(const Tensor& memory, const ForwardCtx& ctx) const {
    if (memory.dim(1) != hyper.h)
      throw std::invalid_argument("decode: memory width " + shape_str(memory.shape()) +
                                  " does not match " + std::to_string(hyper.h));
    Tensor x = start_token;
    for (const auto& layer : decoder_layers) x = layer.forward(x, memory, ctx);
    return output_head.forward(dec_final_ln.forward(x));  // [1 x dof]
  }

  // Full differentiable pipeline given precomputed set-abstraction geometry.
  Tensor forward_delta(const Config& q_t, const Config& q_goal,
                       const SetAbstractionLayer::Prepared& robot_prep,
                       const SetAbstractionLayer::Prepared& scene_prep,
                       const ForwardCtx& ctx) const {
    Tensor z_t = config_embedder.forward(q_t);
    Tensor z_goal = config_embedder.forward(q_goal);
    Tensor z_r = robot_sa.forward(robot_prep);
    Tensor z_w = scene_sa.forward(scene_prep);
    Tensor z_robot = fuse_robot_tokens(z_r, z_t, z_goal);
    const StructureGraph graph = build_structure_graph(robot_prep.centroid_link_tags,
                                                       scene_prep.group_coords.size());
    Tensor memory = encode(z_robot, z_w, graph, ctx);
    return decode(memory, ctx);
  }

  // End-to-end sampling entry point used by planners.
  std::vector<double> sample_delta(const SamplerInput& input, bool stochastic, Rng& rng) const {
    if (!input.robot_cloud || !input.scene_cloud || input.robot_cloud->size() == 0 ||
        input.scene_cloud->size() == 0)
      throw std::invalid_argument("sample_delta: both point clouds must be nonempty");
    if (input.q_t.size() != hyper.dof || input.q_goal.size() != hyper.dof)
      throw std::invalid_argument("sample_delta: configs have " +
                                  std::to_string(input.q_t.size()) + " joints, model expects " +
                                  std::to_string(hyper.dof));
    const auto robot_prep = robot_sa.prepare(*input.robot_cloud);
    const auto scene_prep = scene_sa.prepare(*input.scene_cloud);
    ForwardCtx ctx;
    ctx.mode = stochastic ? DropoutMode::kStochasticInfer : DropoutMode::kEval;
    ctx.p = stochastic ? hyper.dropout_p : 0.0;
    ctx.rng = &rng;
    const Tensor delta = forward_delta(input.q_t, input.q_goal, robot_prep, scene_prep, ctx);
    return delta.data();
  }
};

// ---------------------------------------------------------------------------
// checkpoint container
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint64_t kCheckpointMagic = 0x31504b4345444947ULL;  // "GIDECKP1"

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const GaideModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  using detail::write_pod;
  write_pod(out, detail::kCheckpointMagic);
  write_pod<std::uint32_t>(out, 1);  // format version
  const GaideHyper& h = model.hyper;
  for (std::uint64_t v : {h.dof, h.h, h.heads, h.enc_layers, h.dec_layers, h.k_r, h.k_w, h.n_r,
                          h.n_w, h.sa_max_group})
    write_pod(out, v);
  write_pod(out, h.dropout_p);
  write_pod(out, h.sa_radius_robot);
  write_pod(out, h.sa_radius_scene);
  write_pod(out, static_cast<std::uint32_t>(h.schedule));
  write_pod(out, model.train_steps);
  const NamedParams params = model.named_parameters();
  write_pod<std::uint64_t>(out, params.size());
  for (const auto& [name, p] : params) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.rank()));
    for (std::size_t d : p.shape()) write_pod<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.data().data()),
              static_cast<std::streamsize>(p.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

// Loads a checkpoint, validating every tensor name and shape against a model
// freshly constructed from the stored hyperparameters. schedule_override
// lets the ablation variants reuse one set of weights.
inline GaideModel load_checkpoint(const std::string& path,
                                  std::optional<MaskSchedule> schedule_override = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  using detail::read_pod;
  if (read_pod<std::uint64_t>(in) != detail::kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(in) != 1)
    throw std::runtime_error("checkpoint: unsupported format version in " + path);
  GaideHyper h;
  h.dof = read_pod<std::uint64_t>(in);
  h.h = read_pod<std::uint64_t>(in);
  h.heads = read_pod<std::uint64_t>(in);
  h.enc_layers = read_pod<std::uint64_t>(in);
  h.dec_layers = read_pod<std::uint64_t>(in);
  h.k_r = read_pod<std::uint64_t>(in);
  h.k_w = read_pod<std::uint64_t>(in);
  h.n_r = read_pod<std::uint64_t>(in);
  h.n_w = read_pod<std::uint64_t>(in);
  h.sa_max_group = read_pod<std::uint64_t>(in);
  h.dropout_p = read_pod<double>(in);
  h.sa_radius_robot = read_pod<double>(in);
  h.sa_radius_scene = read_pod<double>(in);
  h.schedule = static_cast<MaskSchedule>(read_pod<std::uint32_t>(in));
  if (schedule_override) h.schedule = *schedule_override;
  const auto steps = read_pod<std::uint64_t>(in);

  Rng init_rng(0);
  GaideModel model = GaideModel::init(h, init_rng);
  model.train_steps = steps;
  NamedParams params = model.named_parameters();
  const auto count = read_pod<std::uint64_t>(in);
  if (count != params.size())
    throw std::runtime_error("checkpoint: holds " + std::to_string(count) +
                             " tensors, model has " + std::to_string(params.size()));
  for (auto& [name, p] : params) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string stored_name(name_len, '\0');
    in.read(stored_name.data(), name_len);
    if (stored_name != name)
      throw std::runtime_error("checkpoint: expected tensor \"" + name + "\", found \"" +
                               stored_name + "\"");
    const auto rank = read_pod<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = read_pod<std::uint64_t>(in);
    if (shape != p.shape())
      throw std::runtime_error("checkpoint: tensor \"" + name + "\" has shape " +
                               shape_str(shape) + ", expected " + shape_str(p.shape()));
    in.read(reinterpret_cast<char*>(p.data().data()),
            static_cast<std::streamsize>(p.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor \"" + name + "\"");
  }
  return model;
}

}  // namespace gaide
