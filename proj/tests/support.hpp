#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mwgen/generator.hpp"
#include "mwgen/training.hpp"

namespace testkit {

// Five pairs over 16 message and 16 response tokens, so both vocabularies
// hold exactly 20 entries with the reserved ids. Responses are at most five
// tokens long.
std::vector<mwgen::RawPair> micro_raw_pairs();

struct Micro {
  mwgen::Generator model;
  std::vector<mwgen::AnnotatedPair> pairs;
  std::vector<mwgen::TrainingExample> examples;
  std::vector<const mwgen::TrainingExample*> batch;
};

Micro micro_model(int d, const mwgen::AttributeSchema& schema, std::uint64_t seed,
                  double init_scale);

double loss_value(const mwgen::Generator& model,
                  const std::vector<const mwgen::TrainingExample*>& batch, double lambda);

std::map<std::string, mwgen::Matrix> loss_gradients(
    const mwgen::Generator& model, const std::vector<const mwgen::TrainingExample*>& batch,
    double lambda);

struct FdOptions {
  // Five-point stencil: (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h.
  bool five_point = true;
  double h = 2e-3;
  double floor = 1e-7;
  // Entries whose analytic and numeric magnitudes are both below this are
  // counted as skipped.
  double min_magnitude = 0.0;
};

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Central differences of the total loss over every parameter entry, compared
// with the tape gradients. Relative error |a - n| / max(|a|, |n|, floor).
FdReport finite_difference_check(const mwgen::Generator& model,
                                 const std::vector<const mwgen::TrainingExample*>& batch,
                                 double lambda, const FdOptions& options = {});

}  // namespace testkit
