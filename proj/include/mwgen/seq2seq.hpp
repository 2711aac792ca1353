#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mwgen/model.hpp"

namespace mwgen {

/// Bidirectional GRU encoding of a batch of messages.
///
/// Column j * batch + b of `states` holds h_{X,j} = forward_j ⊕ backward_j
/// of example b. Positions past an example's length are masked out of
/// attention through `score_mask`.
struct EncoderStates {
  Tensor states;
  /// W_h h_{X,j} + b_d, cached once per batch.
  Tensor keys;
  /// steps x batch; 0 for real positions, a large negative number for padding.
  Matrix score_mask;
  Tensor forward_last;
  Tensor backward_first;
  std::vector<int> lengths;
  Eigen::Index steps = 0;
  Eigen::Index batch = 0;

  /// h_{X,j} of example b as a plain vector.
  ad::Vector state(Eigen::Index j, Eigen::Index b) const;
};

/// One GRU step on column batches; W: 3d x in, U: 3d x d, b: 3d x 1.
Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& W, const Tensor& U,
                const Tensor& b, int d);

struct GruWeights {
  Tensor W, U, b;
};

/// Bidirectional GRU over embedded messages (no attention keys).
/// Throws mwgen::Error for an empty batch or an empty message.
EncoderStates bigru_encode(const Tensor& embeddings, const GruWeights& forward,
                           const GruWeights& backward, int d, std::span<const TokenIds> messages);

/// Generator encoder: bigru_encode plus the cached attention keys.
EncoderStates encode(const BoundParams& p, std::span<const TokenIds> messages);

/// The same encoding repeated for `copies` columns per example (batch must be 1).
EncoderStates replicate(ad::Tape& tape, const EncoderStates& enc, Eigen::Index copies);

/// s_0 = tanh(W_init [forward_last ⊕ backward_first] + b_init).
Tensor init_decoder_state(const BoundParams& p, const EncoderStates& enc);

struct AttentionRead {
  /// C_t, 2d x batch.
  Tensor context;
  /// alpha_{t,j}, steps x batch.
  Tensor weights;
};

/// Additive attention of s_{t-1} over the encoder states.
AttentionRead attention_context(const BoundParams& p, const Tensor& s_prev,
                                const EncoderStates& enc);

struct DecoderStep {
  Tensor state;
  Tensor read;
  /// Log-probabilities over the response vocabulary, vocab x batch.
  Tensor log_probs;
};

/// Maps s_t to the difference-read vector o_t (d x batch).
using ReadFn = std::function<Tensor(const Tensor& state)>;

/// s_t = GRU(s_{t-1}, [e(y_{t-1}) ⊕ C_t]); o_t = read(s_t);
/// log p(y_t) = log_softmax(W_p [e(y_{t-1}) ⊕ o_t ⊕ s_t] + b_p).
DecoderStep decoder_step(const BoundParams& p, const Tensor& s_prev, std::span<const int> prev_ids,
                         const Tensor& context, const ReadFn& read);

/// The prediction layer alone (prev embedding, o_t and s_t already known).
Tensor word_log_probs(const BoundParams& p, const Tensor& prev_embedding, const Tensor& read,
                      const Tensor& state);

}  // namespace mwgen
