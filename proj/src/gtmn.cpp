#include "mwgen/gtmn.hpp"

#include "mwgen/error.hpp"

namespace mwgen {

Tensor rep_key(const BoundParams& p, const MetaVocab& vocab, const VariableSpec& spec) {
  const std::vector<int> ids = vocab.key_ids(spec);
  ad::Tape& tape = *p.emb_meta.tape();
  const auto n = static_cast<Eigen::Index>(ids.size());
  const Tensor average = tape.constant(Matrix::Constant(n, 1, 1.0 / static_cast<double>(n)));
  return ad::matmul(ad::embedding_lookup(p.emb_meta, ids), average);
}

Tensor rep_value(const BoundParams& p, const MetaVocab& vocab, const VariableSpec& spec,
                 std::span<const MetaWordVariable> values) {
  if (values.empty()) throw Error("rep_value: no values");
  if (spec.type == VarType::kCategorical) {
    std::vector<int> ids;
    ids.reserve(values.size());
    for (const auto& v : values) {
      if (!spec.has_category(v.category)) {
        throw SchemaError(spec.key, "value '" + v.category + "' not in category inventory");
      }
      ids.push_back(vocab.value_id(spec.key, v.category));
    }
    return ad::sigmoid(ad::embedding_lookup(p.emb_meta, ids));
  }
  ad::RowVector scale(static_cast<Eigen::Index>(values.size()));
  for (std::size_t b = 0; b < values.size(); ++b) scale(static_cast<Eigen::Index>(b)) = values[b].real;
  const Tensor key = ad::sigmoid(rep_key(p, vocab, spec));
  return ad::scale_cols_const(ad::tile_cols(key, scale.size()), scale);
}

Panel init_panel(const BoundParams& p, const MetaVocab& vocab, const AttributeSchema& schema,
                 std::span<const MetaWord> metawords) {
  if (metawords.empty()) throw Error("init_panel: empty batch");
  for (const auto& mw : metawords) schema.validate(mw);
  Panel panel;
  panel.cells = static_cast<Eigen::Index>(schema.size());
  panel.batch = static_cast<Eigen::Index>(metawords.size());
  if (panel.cells == 0) return panel;

  std::vector<Tensor> keys, goals;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const VariableSpec& spec = schema.variables()[i];
    keys.push_back(ad::tile_cols(rep_key(p, vocab, spec), panel.batch));
    std::vector<MetaWordVariable> column;
    column.reserve(metawords.size());
    for (const auto& mw : metawords) column.push_back(mw.variables[i]);
    goals.push_back(rep_value(p, vocab, spec, column));
  }
  panel.keys = ad::concat_cols(keys);
  panel.goals = ad::concat_cols(goals);
  panel.values = p.emb_meta.tape()->constant(Matrix::Zero(p.d, panel.cells * panel.batch));
  return panel;
}

StateUpdate state_update(const BoundParams& p, const Panel& panel, const Tensor& state) {
  if (panel.cells == 0) return {panel, {}, {}, {}};
  const int d = p.d;
  const Tensor inputs[] = {panel.keys, panel.values, ad::tile_cols(state, panel.cells)};
  const Tensor z = ad::sigmoid(ad::add_bias(ad::matmul(p.gtmn_W, ad::concat_rows(inputs)), p.gtmn_b));
  StateUpdate out;
  out.gate = ad::slice_rows(z, 0, d);
  out.sub = ad::slice_rows(z, d, d);
  out.add = ad::slice_rows(z, 2 * d, d);
  out.panel = panel;
  const Tensor delta = ad::sub(ad::mul(ad::one_minus(out.gate), out.add), ad::mul(out.gate, out.sub));
  out.panel.values = ad::add(panel.values, delta);
  return out;
}

DifferenceRead difference_read(const BoundParams& p, const Panel& panel, const Tensor& state) {
  const Eigen::Index l = panel.cells, B = panel.batch;
  DifferenceRead out;
  if (l == 0) {
    out.output = state.tape()->constant(Matrix::Zero(p.d, state.cols()));
    return out;
  }
  const Tensor parts[] = {ad::sub(panel.goals, panel.values), ad::mul(panel.goals, panel.values)};
  const Tensor projected = ad::matmul(p.gtmn_U, ad::concat_rows(parts));
  const Tensor scores = ad::sum_rows(ad::mul(projected, ad::tile_cols(state, l)));
  out.weights = ad::softmax(ad::transpose(ad::reshape(scores, B, l)));
  const Tensor flat = ad::reshape(ad::transpose(out.weights), 1, l * B);
  out.output = ad::block_sum_cols(ad::scale_cols(projected, flat), l);
  return out;
}

Matrix goal_distance(const Panel& panel) {
  Matrix out(panel.cells, panel.batch);
  if (panel.cells == 0) return out;
  const Matrix diff = panel.values.value() - panel.goals.value();
  for (Eigen::Index i = 0; i < panel.cells; ++i) {
    for (Eigen::Index b = 0; b < panel.batch; ++b) out(i, b) = diff.col(i * panel.batch + b).norm();
  }
  return out;
}

Panel gather_panel(ad::Tape& tape, const Panel& panel, std::span<const int> sources) {
  Panel out;
  out.cells = panel.cells;
  out.batch = static_cast<Eigen::Index>(sources.size());
  if (panel.cells == 0) return out;
  auto gather = [&](const Tensor& t) {
    const Matrix& src = t.value();
    Matrix dst(src.rows(), out.cells * out.batch);
    for (Eigen::Index i = 0; i < out.cells; ++i) {
      for (Eigen::Index b = 0; b < out.batch; ++b) {
        const int from = sources[static_cast<std::size_t>(b)];
        if (from < 0 || from >= panel.batch) throw Error("gather_panel: source column out of range");
        dst.col(i * out.batch + b) = src.col(i * panel.batch + from);
      }
    }
    return tape.constant(std::move(dst));
  };
  out.keys = gather(panel.keys);
  out.goals = gather(panel.goals);
  out.values = gather(panel.values);
  return out;
}

}  // namespace mwgen
