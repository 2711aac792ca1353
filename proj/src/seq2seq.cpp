#include "mwgen/seq2seq.hpp"

#include <algorithm>

#include "mwgen/error.hpp"

namespace mwgen {

namespace {

constexpr double kMaskedScore = -1e9;

// Keeps the old state in columns whose mask entry is 0.
Tensor blend(const Tensor& fresh, const Tensor& old, const ad::RowVector& mask) {
  if ((mask.array() == 1.0).all()) return fresh;
  const ad::RowVector keep = (1.0 - mask.array()).matrix();
  return ad::add(ad::scale_cols_const(fresh, mask), ad::scale_cols_const(old, keep));
}

}  // namespace

ad::Vector EncoderStates::state(Eigen::Index j, Eigen::Index b) const {
  return states.value().col(j * batch + b);
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& W, const Tensor& U,
                const Tensor& b, int d) {
  const Tensor wx = ad::add_bias(ad::matmul(W, x), b);
  const Tensor uh = ad::matmul(U, h);
  const Tensor z = ad::sigmoid(ad::add(ad::slice_rows(wx, 0, d), ad::slice_rows(uh, 0, d)));
  const Tensor r = ad::sigmoid(ad::add(ad::slice_rows(wx, d, d), ad::slice_rows(uh, d, d)));
  const Tensor n = ad::tanh(
      ad::add(ad::slice_rows(wx, 2 * d, d), ad::mul(r, ad::slice_rows(uh, 2 * d, d))));
  return ad::add(ad::mul(ad::one_minus(z), n), ad::mul(z, h));
}

EncoderStates bigru_encode(const Tensor& embeddings, const GruWeights& forward,
                           const GruWeights& backward, int d, std::span<const TokenIds> messages) {
  if (messages.empty()) throw Error("encode: empty batch");
  ad::Tape& tape = *embeddings.tape();
  const auto B = static_cast<Eigen::Index>(messages.size());

  EncoderStates enc;
  enc.batch = B;
  for (const auto& m : messages) {
    if (m.empty()) throw Error("encode: empty message");
    enc.lengths.push_back(static_cast<int>(m.size()));
  }
  const int T = *std::max_element(enc.lengths.begin(), enc.lengths.end());
  enc.steps = T;

  std::vector<std::vector<int>> ids(static_cast<std::size_t>(T), std::vector<int>(B, Vocab::kPad));
  std::vector<ad::RowVector> masks(static_cast<std::size_t>(T), ad::RowVector::Zero(B));
  enc.score_mask = Matrix::Constant(T, B, kMaskedScore);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& m = messages[static_cast<std::size_t>(b)];
    for (std::size_t j = 0; j < m.size(); ++j) {
      ids[j][b] = m[j];
      masks[j](b) = 1.0;
      enc.score_mask(static_cast<Eigen::Index>(j), b) = 0.0;
    }
  }

  std::vector<Tensor> inputs;
  inputs.reserve(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) inputs.push_back(ad::embedding_lookup(embeddings, ids[j]));

  std::vector<Tensor> fwd(static_cast<std::size_t>(T)), bwd(static_cast<std::size_t>(T));
  Tensor h = tape.constant(Matrix::Zero(d, B));
  for (int j = 0; j < T; ++j) {
    h = blend(gru_cell(inputs[j], h, forward.W, forward.U, forward.b, d), h, masks[j]);
    fwd[j] = h;
  }
  h = tape.constant(Matrix::Zero(d, B));
  for (int j = T - 1; j >= 0; --j) {
    h = blend(gru_cell(inputs[j], h, backward.W, backward.U, backward.b, d), h, masks[j]);
    bwd[j] = h;
  }

  std::vector<Tensor> columns;
  columns.reserve(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) {
    const Tensor both[] = {fwd[j], bwd[j]};
    columns.push_back(ad::concat_rows(both));
  }
  enc.states = ad::concat_cols(columns);
  enc.forward_last = fwd.back();
  enc.backward_first = bwd.front();
  return enc;
}

EncoderStates encode(const BoundParams& p, std::span<const TokenIds> messages) {
  EncoderStates enc = bigru_encode(p.emb_message, {p.enc_fwd_W, p.enc_fwd_U, p.enc_fwd_b},
                                   {p.enc_bwd_W, p.enc_bwd_U, p.enc_bwd_b}, p.d, messages);
  enc.keys = ad::add_bias(ad::matmul(p.att_Wh, enc.states), p.att_b);
  return enc;
}

EncoderStates replicate(ad::Tape& tape, const EncoderStates& enc, Eigen::Index copies) {
  if (enc.batch != 1) throw Error("replicate: expects a single encoded message");
  auto spread = [&](const Tensor& t) {
    const Matrix& src = t.value();
    Matrix dst(src.rows(), src.cols() * copies);
    for (Eigen::Index j = 0; j < src.cols(); ++j) {
      dst.middleCols(j * copies, copies) = src.col(j).replicate(1, copies);
    }
    return tape.constant(std::move(dst));
  };
  EncoderStates out;
  out.states = spread(enc.states);
  out.keys = spread(enc.keys);
  out.forward_last = spread(enc.forward_last);
  out.backward_first = spread(enc.backward_first);
  out.score_mask = enc.score_mask.replicate(1, copies);
  out.lengths.assign(static_cast<std::size_t>(copies), enc.lengths.front());
  out.steps = enc.steps;
  out.batch = copies;
  return out;
}

Tensor init_decoder_state(const BoundParams& p, const EncoderStates& enc) {
  const Tensor both[] = {enc.forward_last, enc.backward_first};
  return ad::tanh(ad::add_bias(ad::matmul(p.init_W, ad::concat_rows(both)), p.init_b));
}

AttentionRead attention_context(const BoundParams& p, const Tensor& s_prev,
                                const EncoderStates& enc) {
  const Eigen::Index T = enc.steps, B = enc.batch;
  const Tensor query = ad::tile_cols(ad::matmul(p.att_Ws, s_prev), T);
  const Tensor scores = ad::matmul(p.att_u, ad::tanh(ad::add(enc.keys, query)));
  Tensor by_step = ad::transpose(ad::reshape(scores, B, T));
  if ((enc.score_mask.array() != 0.0).any()) by_step = ad::add_const(by_step, enc.score_mask);
  AttentionRead out;
  out.weights = ad::softmax(by_step);
  const Tensor flat = ad::reshape(ad::transpose(out.weights), 1, T * B);
  out.context = ad::block_sum_cols(ad::scale_cols(enc.states, flat), T);
  return out;
}

Tensor word_log_probs(const BoundParams& p, const Tensor& prev_embedding, const Tensor& read,
                      const Tensor& state) {
  const Tensor parts[] = {prev_embedding, read, state};
  return ad::log_softmax(ad::add_bias(ad::matmul(p.out_W, ad::concat_rows(parts)), p.out_b));
}

DecoderStep decoder_step(const BoundParams& p, const Tensor& s_prev, std::span<const int> prev_ids,
                         const Tensor& context, const ReadFn& read) {
  const Tensor prev = ad::embedding_lookup(p.emb_response, prev_ids);
  const Tensor input[] = {prev, context};
  DecoderStep step;
  step.state = gru_cell(ad::concat_rows(input), s_prev, p.dec_W, p.dec_U, p.dec_b, p.d);
  step.read = read(step.state);
  step.log_probs = word_log_probs(p, prev, step.read, step.state);
  return step;
}

}  // namespace mwgen
