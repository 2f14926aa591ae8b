// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "fatigue/backend.hpp"
#include "fatigue/error.hpp"
#include "fatigue/rng.hpp"

namespace fatigue {

struct ToyConfig {
  std::uint64_t seed = 42;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden_dim = 32;
  std::size_t max_context = 512;
  std::size_t mlp_ratio = 4;
  /// Standard deviation of the logits after the final norm; sets the entropy regime.
  double logit_std = 2.5;
  /// Added to the EOS logit (token 0) so untrained weights do not end runs at random.
  double eos_logit_bias = -6.0;

  bool operator==(const ToyConfig&) const = default;
};

/// Untrained decoder-only transformer over a byte vocabulary (256 tokens,
/// token 0 doubles as EOS). Pre-norm blocks with RMS normalization, causal
/// multi-head attention and a GELU MLP; weights come from the seeded Rng.
/// Every step re-encodes the full context.
class ToyTransformer final : public Backend {
 public:
  static constexpr std::size_t kVocab = 256;

  explicit ToyTransformer(const ToyConfig& cfg) : cfg_(cfg) {
    if (cfg.layers == 0 || cfg.heads == 0 || cfg.hidden_dim == 0) {
      throw Error(ErrorKind::InvalidConfig, "toy transformer dimensions must be positive");
    }
    if (cfg.hidden_dim % cfg.heads != 0) {
      throw Error(ErrorKind::InvalidConfig, "hidden_dim " + std::to_string(cfg.hidden_dim) +
                                                " is not divisible by heads " +
                                                std::to_string(cfg.heads));
    }
    if (cfg.max_context < 16) throw Error(ErrorKind::InvalidConfig, "max_context must be >= 16");
    if (cfg.mlp_ratio == 0) throw Error(ErrorKind::InvalidConfig, "mlp_ratio must be positive");

    desc_.name = "toy";
    desc_.vocab_size = kVocab;
    desc_.hidden_dim = cfg.hidden_dim;
    desc_.max_context = cfg.max_context;
    desc_.deterministic = true;
    desc_.eos_token = 0;

    const std::size_t d = cfg.hidden_dim;
    const std::size_t ff = d * cfg.mlp_ratio;
    Rng rng(cfg.seed);
    auto init = [&rng](std::size_t n, double stddev) {
      std::vector<double> w(n);
      for (auto& x : w) x = stddev * rng.normal();
      return w;
    };
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    token_embedding_ = init(kVocab * d, 1.0);
    position_embedding_ = init(cfg.max_context * d, 0.5);
    blocks_.reserve(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      Block b;
      b.wq = init(d * d, inv_sqrt_d);
      b.wk = init(d * d, inv_sqrt_d);
      b.wv = init(d * d, inv_sqrt_d);
      b.wo = init(d * d, inv_sqrt_d);
      b.w_up = init(ff * d, inv_sqrt_d);
      b.w_down = init(d * ff, 1.0 / std::sqrt(static_cast<double>(ff)));
      blocks_.push_back(std::move(b));
    }
    unembedding_ = init(kVocab * d, cfg.logit_std * inv_sqrt_d);
  }

  [[nodiscard]] const BackendDescriptor& descriptor() const override { return desc_; }
  [[nodiscard]] const ToyConfig& config() const noexcept { return cfg_; }

  StepOutput step(std::span<const TokenId> context) override {
    check_context(context);
    for (TokenId t : context) {
      if (t >= kVocab) throw Error(ErrorKind::ProtocolError, "token id out of vocabulary");
    }
    return forward(context);
  }

 private:
  struct Block {
    std::vector<double> wq, wk, wv, wo, w_up, w_down;
  };

  // out[rows] = W[rows x cols] * x[cols]
  static void matvec(std::span<const double> w, std::span<const double> x, std::span<double> out) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < out.size(); ++r) {
      const double* row = w.data() + r * cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
      out[r] = acc;
    }
  }

  static void rms_norm(std::span<const double> x, std::span<double> out) {
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-6);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale;
  }

  static double gelu(double x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
  }

  StepOutput forward(std::span<const TokenId> context) const {
    const std::size_t n = context.size();
    const std::size_t d = cfg_.hidden_dim;
    const std::size_t heads = cfg_.heads;
    const std::size_t hd = d / heads;
    const std::size_t ff = d * cfg_.mlp_ratio;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    // Residual stream, n x d.
    std::vector<double> x(n * d);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t i = 0; i < d; ++i) {
        x[p * d + i] = token_embedding_[context[p] * d + i] + position_embedding_[p * d + i];
      }
    }

    std::vector<double> normed(n * d), q(n * d), k(n * d), v(n * d), mixed(n * d);
    std::vector<double> attn_out(d), up(ff), down(d), scores(n);
    std::vector<double> last_attention(n, 0.0);

    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const Block& b = blocks_[l];
      const bool last_layer = l + 1 == blocks_.size();
      // Only the newest position's output matters after the last layer.
      const std::size_t first_query = last_layer ? n - 1 : 0;

      for (std::size_t p = 0; p < n; ++p) {
        std::span<const double> xp(x.data() + p * d, d);
        std::span<double> np(normed.data() + p * d, d);
        rms_norm(xp, np);
        matvec(b.wk, np, std::span<double>(k.data() + p * d, d));
        matvec(b.wv, np, std::span<double>(v.data() + p * d, d));
        if (p >= first_query) matvec(b.wq, np, std::span<double>(q.data() + p * d, d));
      }

      for (std::size_t p = first_query; p < n; ++p) {
        std::span<double> mix(mixed.data() + p * d, d);
        std::fill(mix.begin(), mix.end(), 0.0);
        for (std::size_t h = 0; h < heads; ++h) {
          const double* qh = q.data() + p * d + h * hd;
          double max_score = -std::numeric_limits<double>::infinity();
          for (std::size_t s = 0; s <= p; ++s) {
            const double* kh = k.data() + s * d + h * hd;
            double dot = 0.0;
            for (std::size_t i = 0; i < hd; ++i) dot += qh[i] * kh[i];
            scores[s] = dot * score_scale;
            max_score = std::max(max_score, scores[s]);
          }
          double total = 0.0;
          for (std::size_t s = 0; s <= p; ++s) {
            scores[s] = std::exp(scores[s] - max_score);
            total += scores[s];
          }
          for (std::size_t s = 0; s <= p; ++s) {
            const double w = scores[s] / total;
            const double* vh = v.data() + s * d + h * hd;
            for (std::size_t i = 0; i < hd; ++i) mix[h * hd + i] += w * vh[i];
            if (last_layer && p == n - 1) last_attention[s] += w / static_cast<double>(heads);
          }
        }
      }

      for (std::size_t p = first_query; p < n; ++p) {
        std::span<double> xp(x.data() + p * d, d);
        matvec(b.wo, std::span<const double>(mixed.data() + p * d, d), attn_out);
        for (std::size_t i = 0; i < d; ++i) xp[i] += attn_out[i];
        std::span<double> np(normed.data() + p * d, d);
        rms_norm(xp, np);
        matvec(b.w_up, np, up);
        for (auto& u : up) u = gelu(u);
        matvec(b.w_down, up, down);
        for (std::size_t i = 0; i < d; ++i) xp[i] += down[i];
      }
    }

    StepOutput out;
    std::vector<double> hidden(x.begin() + static_cast<std::ptrdiff_t>((n - 1) * d), x.end());
    std::vector<double> final_norm(d);
    rms_norm(hidden, final_norm);
    out.logits.resize(kVocab);
    matvec(unembedding_, final_norm, out.logits);
    out.logits[0] += cfg_.eos_logit_bias;
    out.attention_row = std::move(last_attention);
    out.hidden_last = std::move(hidden);
    return out;
  }

  ToyConfig cfg_;
  BackendDescriptor desc_;
  std::vector<double> token_embedding_;
  std::vector<double> position_embedding_;
  std::vector<Block> blocks_;
  std::vector<double> unembedding_;
};

inline std::unique_ptr<Backend> make_toy_transformer(std::uint64_t seed, std::size_t layers,
                                                     std::size_t heads, std::size_t hidden_dim) {
  ToyConfig cfg;
  cfg.seed = seed;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.hidden_dim = hidden_dim;
  return std::make_unique<ToyTransformer>(cfg);
}

}  // namespace fatigue
