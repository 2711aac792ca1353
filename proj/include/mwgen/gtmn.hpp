#pragma once

// Goal tracking memory: one cell per meta-word variable holding a frozen key,
// a frozen goal and a value vector that tracks how much of the goal the
// response prefix has expressed.

#include <span>

#include "mwgen/model.hpp"

namespace mwgen {

/// Cells of a batch of panels; column i * batch + b is cell i of example b.
struct Panel {
  Tensor keys;
  Tensor goals;
  Tensor values;
  Eigen::Index cells = 0;
  Eigen::Index batch = 0;
};

/// B(key phrase): mean of the key-phrase token embeddings, d x 1.
Tensor rep_key(const BoundParams& p, const MetaVocab& vocab, const VariableSpec& spec);

/// Goal representations of one variable for a batch of values, d x batch:
/// sigmoid(B(value)) for categorical variables, value * sigmoid(B(key)) for
/// real ones.
Tensor rep_value(const BoundParams& p, const MetaVocab& vocab, const VariableSpec& spec,
                 std::span<const MetaWordVariable> values);

/// k = Rep(key), g = Rep(value), v_0 = 0. Throws SchemaError when a
/// meta-word does not conform to `schema`.
Panel init_panel(const BoundParams& p, const MetaVocab& vocab, const AttributeSchema& schema,
                 std::span<const MetaWord> metawords);

struct StateUpdate {
  Panel panel;
  Tensor gate;
  Tensor sub;
  Tensor add;
};

/// Gated SUB/ADD update of every value vector from the decoder state s_t.
StateUpdate state_update(const BoundParams& p, const Panel& panel, const Tensor& state);

struct DifferenceRead {
  /// o_t, d x batch.
  Tensor output;
  /// Cell attention a^t, cells x batch.
  Tensor weights;
};

/// Attention of s_t over the projected difference vectors U[(g - v) ⊕ (g ∘ v)].
DifferenceRead difference_read(const BoundParams& p, const Panel& panel, const Tensor& state);

/// ||v - g|| per cell, cells x batch.
Matrix goal_distance(const Panel& panel);

/// Column b of the result is column `sources[b]` of `panel`, for every cell.
/// The gathered vectors are constants on `tape` (inference only).
Panel gather_panel(ad::Tape& tape, const Panel& panel, std::span<const int> sources);

}  // namespace mwgen
