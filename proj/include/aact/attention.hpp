#pragma once
// Self-attention encoder shared by the recognition and translation modules.
//
// Two post-norm transformer layers by default: self-attention, residual,
// layer norm, relu feed-forward, residual, layer norm. Sequence-length
// changes (translating M observed frames into N future frames and back) are
// handled with learned query tokens: the queries are appended to the
// position-encoded input, everything self-attends jointly, and the output is
// read at the query positions.

#include <cstdint>
#include <string>
#include <vector>

#include "aact/tensor.hpp"

namespace aact {

struct EncoderLayerParams {
    Tensor w_q, w_k, w_v, w_o;      // d x d projections
    Tensor ffn_w1, ffn_b1;          // d -> hidden
    Tensor ffn_w2, ffn_b2;          // hidden -> d
    Tensor ln1_gamma, ln1_beta;
    Tensor ln2_gamma, ln2_beta;
};

struct EncoderParams {
    std::size_t model_dim = 0;
    std::size_t num_heads = 8;
    std::size_t ffn_hidden = 0;  // defaults to floor(d / 2)
    std::vector<EncoderLayerParams> layers;
    Tensor query_tokens;  // L x d, defined only for translation encoders

    bool translating() const { return query_tokens.defined(); }
};

/// Encoder with `num_layers` blocks; `out_len` > 0 makes it a translation
/// encoder carrying that many learned query tokens. Weights are uniform in
/// [-1/sqrt(d), 1/sqrt(d)] from `rng`; biases start at zero and layer-norm
/// affines at identity.
inline EncoderParams make_encoder(const std::string& prefix, std::size_t d,
                                  std::size_t num_layers, std::size_t num_heads,
                                  std::size_t out_len, Rng& rng) {
    if (d == 0 || num_heads == 0 || d % num_heads != 0)
        throw std::invalid_argument("encoder " + prefix + ": model dim " + std::to_string(d) +
                                    " not divisible by " + std::to_string(num_heads) + " heads");
    EncoderParams enc;
    enc.model_dim = d;
    enc.num_heads = num_heads;
    enc.ffn_hidden = d / 2;
    if (enc.ffn_hidden == 0) enc.ffn_hidden = 1;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    enc.layers.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l) + ".";
        EncoderLayerParams layer;
        layer.w_q = Tensor::param_uniform(base + "w_q", {d, d}, -bound, bound, rng);
        layer.w_k = Tensor::param_uniform(base + "w_k", {d, d}, -bound, bound, rng);
        layer.w_v = Tensor::param_uniform(base + "w_v", {d, d}, -bound, bound, rng);
        layer.w_o = Tensor::param_uniform(base + "w_o", {d, d}, -bound, bound, rng);
        layer.ffn_w1 =
            Tensor::param_uniform(base + "ffn_w1", {d, enc.ffn_hidden}, -bound, bound, rng);
        layer.ffn_b1 = Tensor::param(base + "ffn_b1", {enc.ffn_hidden},
                                     std::vector<double>(enc.ffn_hidden, 0.0));
        layer.ffn_w2 =
            Tensor::param_uniform(base + "ffn_w2", {enc.ffn_hidden, d}, -bound, bound, rng);
        layer.ffn_b2 = Tensor::param(base + "ffn_b2", {d}, std::vector<double>(d, 0.0));
        layer.ln1_gamma = Tensor::param(base + "ln1_g", {d}, std::vector<double>(d, 1.0));
        layer.ln1_beta = Tensor::param(base + "ln1_b", {d}, std::vector<double>(d, 0.0));
        layer.ln2_gamma = Tensor::param(base + "ln2_g", {d}, std::vector<double>(d, 1.0));
        layer.ln2_beta = Tensor::param(base + "ln2_b", {d}, std::vector<double>(d, 0.0));
        enc.layers.push_back(std::move(layer));
    }
    if (out_len > 0)
        enc.query_tokens =
            Tensor::param_uniform(prefix + ".query", {out_len, d}, -bound, bound, rng);
    return enc;
}

template <typename Visitor>
void visit_params(EncoderParams& enc, Visitor&& visit) {
    for (EncoderLayerParams& layer : enc.layers) {
        visit(layer.w_q);
        visit(layer.w_k);
        visit(layer.w_v);
        visit(layer.w_o);
        visit(layer.ffn_w1);
        visit(layer.ffn_b1);
        visit(layer.ffn_w2);
        visit(layer.ffn_b2);
        visit(layer.ln1_gamma);
        visit(layer.ln1_beta);
        visit(layer.ln2_gamma);
        visit(layer.ln2_beta);
    }
    if (enc.query_tokens.defined()) visit(enc.query_tokens);
}

/// Sinusoidal positions: entry(pos, 2i) = sin(pos / 10000^(2i/d)),
/// entry(pos, 2i+1) = cos(pos / 10000^(2i/d)). All entries lie in [-1, 1].
inline Tensor positional_encoding(std::size_t length, std::size_t d) {
    if (length < 1 || d < 2 || d % 2 != 0)
        throw std::invalid_argument("positional_encoding: need length >= 1 and even d >= 2, got " +
                                    std::to_string(length) + " x " + std::to_string(d));
    std::vector<double> value(length * d);
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < d / 2; ++i) {
            const double rate =
                std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double angle = static_cast<double>(pos) / rate;
            value[pos * d + 2 * i] = std::sin(angle);
            value[pos * d + 2 * i + 1] = std::cos(angle);
        }
    return Tensor::from({length, d}, std::move(value));
}

namespace detail {

// Scaled dot-product attention over all heads, fused into one tape node.
// Q, K, V are T x d; head h takes columns [h*w, (h+1)*w), w = d/heads. The
// per-head softmax matrices are kept for the backward pass.
inline Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                             std::size_t heads) {
    const std::size_t t = q.rows(), d = q.cols();
    const std::size_t w = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w));

    auto attn = std::make_shared<std::vector<double>>(heads * t * t);
    std::vector<double> value(t * d, 0.0);
    const auto& dq = q.data();
    const auto& dk = k.data();
    const auto& dv = v.data();
    std::vector<double> scores(t);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t col0 = h * w;
        double* a = attn->data() + h * t * t;
        for (std::size_t i = 0; i < t; ++i) {
            double max_s = -1e300;
            for (std::size_t j = 0; j < t; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < w; ++c)
                    s += dq[i * d + col0 + c] * dk[j * d + col0 + c];
                s *= inv_sqrt;
                scores[j] = s;
                if (s > max_s) max_s = s;
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < t; ++j) {
                const double e = std::exp(scores[j] - max_s);
                a[i * t + j] = e;
                denom += e;
            }
            for (std::size_t j = 0; j < t; ++j) {
                a[i * t + j] /= denom;
                const double aij = a[i * t + j];
                for (std::size_t c = 0; c < w; ++c)
                    value[i * d + col0 + c] += aij * dv[j * d + col0 + c];
            }
        }
    }

    auto iq = q.impl();
    auto ik = k.impl();
    auto iv = v.impl();
    return record({t, d}, std::move(value), {&q, &k, &v},
                  [iq, ik, iv, attn, heads, t, d, w, inv_sqrt](Tape& tp, TapeNode& node) {
                      auto& gq = tp.grad_of(node.parents[0]);
                      auto& gk = tp.grad_of(node.parents[1]);
                      auto& gv = tp.grad_of(node.parents[2]);
                      const auto& g = node.grad;
                      std::vector<double> dattn(t);
                      for (std::size_t h = 0; h < heads; ++h) {
                          const std::size_t col0 = h * w;
                          const double* a = attn->data() + h * t * t;
                          for (std::size_t i = 0; i < t; ++i) {
                              // dV and dA from the A.V product
                              double dot = 0.0;
                              for (std::size_t j = 0; j < t; ++j) {
                                  double da = 0.0;
                                  for (std::size_t c = 0; c < w; ++c) {
                                      const double go = g[i * d + col0 + c];
                                      gv[j * d + col0 + c] += a[i * t + j] * go;
                                      da += go * iv->data[j * d + col0 + c];
                                  }
                                  dattn[j] = da;
                                  dot += da * a[i * t + j];
                              }
                              // softmax backward, then into Q and K
                              for (std::size_t j = 0; j < t; ++j) {
                                  const double ds =
                                      a[i * t + j] * (dattn[j] - dot) * inv_sqrt;
                                  if (ds == 0.0) continue;
                                  for (std::size_t c = 0; c < w; ++c) {
                                      gq[i * d + col0 + c] += ds * ik->data[j * d + col0 + c];
                                      gk[j * d + col0 + c] += ds * iq->data[i * d + col0 + c];
                                  }
                              }
                          }
                      }
                  });
}

}  // namespace detail

/// One multi-head self-attention sublayer: project to Q/K/V, attend per head
/// of width d/num_heads at 1/sqrt(width) scaling, concatenate, project out.
inline Tensor multi_head_self_attention(const Tensor& x, const EncoderLayerParams& layer,
                                        std::size_t num_heads) {
    const std::size_t d = x.cols();
    if (num_heads == 0 || d % num_heads != 0)
        throw std::invalid_argument("attention: model dim " + std::to_string(d) +
                                    " not divisible by " + std::to_string(num_heads) + " heads");
    Tensor q = matmul(x, layer.w_q);
    Tensor k = matmul(x, layer.w_k);
    Tensor v = matmul(x, layer.w_v);
    return matmul(detail::attention_core(q, k, v, num_heads), layer.w_o);
}

/// Per-head attention weights for the current input; rows sum to 1. Exposed
/// for inspection and tests, not used in the forward pass.
inline std::vector<std::vector<double>> attention_weights(const Tensor& x,
                                                          const EncoderLayerParams& layer,
                                                          std::size_t num_heads) {
    NoGradGuard guard;
    const std::size_t t = x.rows(), d = x.cols(), w = d / num_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w));
    Tensor q = matmul(x, layer.w_q);
    Tensor k = matmul(x, layer.w_k);
    std::vector<std::vector<double>> result(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) {
        std::vector<double> scores(t * t);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < t; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < w; ++c)
                    s += q.at(i * d + h * w + c) * k.at(j * d + h * w + c);
                scores[i * t + j] = s * inv_sqrt;
            }
        Tensor soft = softmax(Tensor::from({t, t}, std::move(scores)), 1);
        result[h] = soft.data();
    }
    return result;
}

/// Full encoder pass. Recognition (no query tokens): out_len must equal the
/// input length and all rows are returned. Translation: the encoder's learned
/// query tokens are appended after positional encoding and the rows at the
/// query positions are returned.
inline Tensor encoder_forward(const Tensor& x, const EncoderParams& enc, std::size_t out_len) {
    if (x.shape().size() != 2 || x.cols() != enc.model_dim)
        throw std::invalid_argument("encoder_forward: input " + shape_str(x.shape()) +
                                    " does not match model dim " +
                                    std::to_string(enc.model_dim));
    const std::size_t t_in = x.rows();
    Tensor h = add(x, positional_encoding(t_in, enc.model_dim));
    if (enc.translating()) {
        if (enc.query_tokens.rows() != out_len)
            throw std::invalid_argument("encoder_forward: " +
                                        std::to_string(enc.query_tokens.rows()) +
                                        " query tokens but out_len " + std::to_string(out_len));
        h = concat_rows(h, enc.query_tokens);
    } else if (out_len != t_in) {
        throw std::invalid_argument(
            "encoder_forward: recognition encoder has no query tokens; out_len " +
            std::to_string(out_len) + " != input length " + std::to_string(t_in));
    }
    for (const EncoderLayerParams& layer : enc.layers) {
        Tensor attended = multi_head_self_attention(h, layer, enc.num_heads);
        h = layer_norm(add(h, attended), layer.ln1_gamma, layer.ln1_beta);
        Tensor ff = add_rowvec(
            matmul(relu(add_rowvec(matmul(h, layer.ffn_w1), layer.ffn_b1)), layer.ffn_w2),
            layer.ffn_b2);
        h = layer_norm(add(h, ff), layer.ln2_gamma, layer.ln2_beta);
    }
    if (enc.translating()) return slice_rows(h, t_in, out_len);
    return h;
}

}  // namespace aact
