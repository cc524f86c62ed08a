#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lstmens/bagging.hpp"
#include "lstmens/core_math.hpp"

namespace lstmens {

/// An ordered set of base learners fused by score averaging.
struct Ensemble {
  std::vector<BaseLearner> members;
  std::string provenance;

  std::size_t size() const { return members.size(); }
  /// Non-empty and all members agree on input width and class count.
  void validate() const;
};

/// The m learners with the highest validation F1; ties prefer the earlier epoch.
Ensemble select_top_m(const std::vector<BaseLearner>& learners, std::size_t m);

/// Top `m_each` of each list, CE members first, equally weighted.
Ensemble mixed_ensemble(const std::vector<BaseLearner>& ce_learners,
                        const std::vector<BaseLearner>& f1_learners, std::size_t m_each);

/// Entrywise arithmetic mean of the members' probability vectors, summed in
/// member order.
RealVector fuse_scores(const std::vector<RealVector>& member_probs);

struct EnsemblePrediction {
  std::vector<RealVector> probs;
  std::vector<std::size_t> labels;
};

/// Each member runs its own stateful sample-wise inference; per timestep the
/// members' probabilities are fused and the argmax taken.
EnsemblePrediction ensemble_infer(const Ensemble& ensemble, const Matrix& samples);

struct CeGap {
  double average = 0.0;  // mean over members of each member's cross entropy
  double fusion = 0.0;   // cross entropy of the fused probabilities
  double delta = 0.0;    // average - fusion, never negative
};

/// `target_probs[m][t]` is member m's probability of the true class at sample t.
/// delta is accumulated per sample as log(arithmetic mean / geometric mean) of
/// the ratios p^m / p^1, which is exactly zero when all members agree.
CeGap ce_gap(const std::vector<RealVector>& target_probs);

/// CSV with a `# selection=...` comment line then `member,epoch,loss,val_f1,path`.
void save_ensemble_manifest(const std::string& path, const Ensemble& ensemble);
Ensemble load_ensemble(const std::string& path);

}  // namespace lstmens
