#include "mwgen/generator.hpp"

#include <algorithm>

#include "mwgen/error.hpp"
#include "mwgen/gtmn.hpp"
#include "mwgen/seq2seq.hpp"

namespace mwgen {

Generator make_generator(const ModelConfig& config, Vocab message_vocab, Vocab response_vocab,
                         FreqStats stats, std::uint64_t seed, double init_scale) {
  Generator g;
  g.config = config;
  g.message_vocab = std::move(message_vocab);
  g.response_vocab = std::move(response_vocab);
  g.stats = std::move(stats);
  g.params = make_generator_parameters(config.d, g.message_vocab.size(), g.response_vocab.size(),
                                       g.meta.size());
  randomize(g.params, seed, init_scale);
  return g;
}

MetaWord project_metaword(const MetaWord& metaword, const AttributeSchema& schema) {
  MetaWord out;
  out.schema_id = schema.id();
  for (const auto& spec : schema.variables()) {
    const MetaWordVariable* v = metaword.find(spec.key);
    if (!v) throw SchemaError(spec.key, "missing from meta-word");
    out.variables.push_back(*v);
  }
  return out;
}

TrainingExample make_example(const Generator& model, const AnnotatedPair& pair) {
  const Tokens message = tokenize(pair.message);
  const Tokens response = tokenize(pair.response);
  if (message.empty()) throw Error("empty message");
  if (response.empty()) throw SchemaError(std::string(keys::kLength), "empty response");
  const AttributeSchema& schema = model.config.schema;

  TrainingExample ex;
  ex.message = model.message_vocab.encode(message);
  ex.response = model.response_vocab.encode(response);
  ex.metaword = project_metaword(pair.metaword, schema);
  schema.validate(ex.metaword);
  ex.prefix_features.resize(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const VariableSpec& spec = schema.variables()[i];
    if (spec.update_case != UpdateCase::kPrefix) continue;
    for (std::size_t t = 1; t <= response.size(); ++t) {
      ex.prefix_features[i].push_back(prefix_feature(
          spec.key, message, std::span<const std::string>(response.data(), t), model.stats));
    }
  }
  return ex;
}

std::vector<TrainingExample> make_examples(const Generator& model,
                                           std::span<const AnnotatedPair> pairs) {
  std::vector<TrainingExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(make_example(model, p));
  return out;
}

LossTerms compute_loss(ad::Tape& tape, const Generator& model,
                       std::span<const TrainingExample* const> batch, const LossOptions& options) {
  return compute_loss(mwgen::bind(tape, model.params), model, batch, options);
}

LossTerms compute_loss(const BoundParams& p, const Generator& model,
                       std::span<const TrainingExample* const> batch, const LossOptions& options) {
  if (batch.empty()) throw Error("compute_loss: empty batch");
  const AttributeSchema& schema = model.config.schema;
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto l = static_cast<Eigen::Index>(schema.size());

  std::vector<TokenIds> messages;
  std::vector<MetaWord> metawords;
  std::vector<int> lengths;
  for (const TrainingExample* ex : batch) {
    messages.push_back(ex->message);
    metawords.push_back(ex->metaword);
    lengths.push_back(static_cast<int>(ex->response.size()));
  }
  const int longest = *std::max_element(lengths.begin(), lengths.end());
  const bool with_su = l > 0 && (options.lambda > 0.0 || options.always_state_update);

  const EncoderStates enc = encode(p, messages);
  Tensor state = init_decoder_state(p, enc);
  Panel panel = init_panel(p, model.meta, schema, metawords);

  LossTerms out;
  std::vector<Tensor> nll_terms, su_terms;
  std::vector<int> prev(B), target(B);
  ad::RowVector mask(B);
  for (int t = 1; t <= longest + 1; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& resp = batch[b]->response;
      const int len = lengths[b];
      prev[b] = t == 1 ? Vocab::kBos : (t - 1 <= len ? resp[t - 2] : Vocab::kPad);
      target[b] = t <= len ? resp[t - 1] : (t == len + 1 ? Vocab::kEos : Vocab::kPad);
      mask(b) = t <= len + 1 ? 1.0 : 0.0;
    }
    out.tokens += mask.sum();

    const AttentionRead att = attention_context(p, state, enc);
    const DecoderStep step = decoder_step(p, state, prev, att.context, [&](const Tensor& s) {
      panel = state_update(p, panel, s).panel;
      return difference_read(p, panel, s).output;
    });
    state = step.state;
    nll_terms.push_back(ad::sum(ad::scale_cols_const(ad::pick(step.log_probs, target), mask)));

    if (!with_su || t > longest) continue;
    std::vector<Tensor> blocks;
    ad::RowVector weights(l * B);
    for (Eigen::Index i = 0; i < l; ++i) {
      const VariableSpec& spec = schema.variables()[static_cast<std::size_t>(i)];
      if (spec.update_case == UpdateCase::kPrefix) {
        std::vector<MetaWordVariable> features;
        for (Eigen::Index b = 0; b < B; ++b) {
          const auto& f = batch[b]->prefix_features[static_cast<std::size_t>(i)];
          features.push_back(f[static_cast<std::size_t>(std::min(t, lengths[b]) - 1)]);
          weights(i * B + b) = t <= lengths[b] ? 1.0 : 0.0;
        }
        blocks.push_back(rep_value(p, model.meta, spec, features));
      } else {
        for (Eigen::Index b = 0; b < B; ++b) weights(i * B + b) = t == lengths[b] ? 1.0 : 0.0;
        blocks.push_back(ad::slice_cols(panel.goals, i * B, B));
      }
    }
    const Tensor distance = ad::l2_norm(ad::sub(panel.values, ad::concat_cols(blocks)));
    su_terms.push_back(ad::sum(ad::scale_cols_const(distance, weights)));
  }

  const double inv_batch = 1.0 / static_cast<double>(B);
  const Tensor log_likelihood = ad::sum(ad::concat_cols(nll_terms));
  out.nll_sum = -log_likelihood.value()(0, 0);
  out.nll = ad::scale(log_likelihood, -inv_batch);
  out.total = out.nll;
  if (with_su) {
    out.state_update = ad::scale(ad::sum(ad::concat_cols(su_terms)), inv_batch);
    if (options.lambda > 0.0) out.total = ad::add(out.nll, ad::scale(out.state_update, options.lambda));
  }
  return out;
}

NllTotals evaluate_nll(const Generator& model, std::span<const TrainingExample> examples,
                       std::size_t batch_size) {
  if (examples.empty()) throw Error("evaluate_nll: empty dataset");
  NllTotals totals;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    std::vector<const TrainingExample*> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(&examples[k]);
    ad::Tape tape(false);
    const LossTerms loss = compute_loss(tape, model, batch, {.lambda = 0.0});
    totals.nll += loss.nll_sum;
    totals.tokens += loss.tokens;
  }
  return totals;
}

}  // namespace mwgen
