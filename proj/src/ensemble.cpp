#include "lstmens/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lstmens {

void Ensemble::validate() const {
  if (members.empty()) throw std::invalid_argument("ensemble has no members");
  const auto& first = members.front().net;
  for (const auto& m : members) {
    if (m.net.input_dim() != first.input_dim() || m.net.num_classes() != first.num_classes()) {
      throw DimensionError("ensemble members disagree on input width or class count");
    }
  }
}

Ensemble select_top_m(const std::vector<BaseLearner>& learners, std::size_t m) {
  if (m < 1 || m > learners.size()) {
    throw std::out_of_range("select_top_m: m = " + std::to_string(m) + " outside [1," +
                            std::to_string(learners.size()) + "]");
  }
  std::vector<std::size_t> order(learners.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (learners[a].val_f1 != learners[b].val_f1) return learners[a].val_f1 > learners[b].val_f1;
    return learners[a].epoch < learners[b].epoch;
  });
  Ensemble e;
  for (std::size_t i = 0; i < m; ++i) e.members.push_back(learners[order[i]]);
  e.provenance = "top-" + std::to_string(m) + " of " + std::to_string(learners.size()) +
                 " by validation mean F1";
  e.validate();
  return e;
}

Ensemble mixed_ensemble(const std::vector<BaseLearner>& ce_learners,
                        const std::vector<BaseLearner>& f1_learners, std::size_t m_each) {
  if (m_each == 0) throw std::out_of_range("mixed_ensemble: m_each must be positive");
  if (ce_learners.size() < m_each || f1_learners.size() < m_each) {
    throw std::out_of_range("mixed_ensemble: need " + std::to_string(m_each) +
                            " learners from each list, have " + std::to_string(ce_learners.size()) +
                            " and " + std::to_string(f1_learners.size()));
  }
  Ensemble ce = select_top_m(ce_learners, m_each);
  Ensemble f1 = select_top_m(f1_learners, m_each);
  Ensemble e;
  e.members = std::move(ce.members);
  e.members.insert(e.members.end(), std::make_move_iterator(f1.members.begin()),
                   std::make_move_iterator(f1.members.end()));
  e.provenance = "mixed top-" + std::to_string(m_each) + " CE + top-" + std::to_string(m_each) +
                 " F1 by validation mean F1";
  e.validate();
  return e;
}

RealVector fuse_scores(const std::vector<RealVector>& member_probs) {
  if (member_probs.empty()) throw std::invalid_argument("fuse_scores: no members");
  const std::size_t k = member_probs.front().size();
  RealVector out(k, 0.0);
  for (const auto& p : member_probs) {
    if (p.size() != k) {
      throw DimensionError("fuse_scores: member vectors of length " + std::to_string(p.size()) +
                           " and " + std::to_string(k));
    }
    for (std::size_t j = 0; j < k; ++j) out[j] += p[j];
  }
  const double m = static_cast<double>(member_probs.size());
  for (double& v : out) v /= m;
  return out;
}

EnsemblePrediction ensemble_infer(const Ensemble& ensemble, const Matrix& samples) {
  ensemble.validate();
  std::vector<std::vector<RealVector>> per_member;
  per_member.reserve(ensemble.size());
  for (const auto& m : ensemble.members) per_member.push_back(infer_stream(m.net, samples));

  EnsemblePrediction out;
  out.probs.reserve(samples.rows());
  out.labels.reserve(samples.rows());
  std::vector<RealVector> at_t(ensemble.size());
  for (std::size_t t = 0; t < samples.rows(); ++t) {
    for (std::size_t m = 0; m < ensemble.size(); ++m) at_t[m] = per_member[m][t];
    RealVector fused = fuse_scores(at_t);
    out.labels.push_back(predict_label(fused));
    out.probs.push_back(std::move(fused));
  }
  return out;
}

CeGap ce_gap(const std::vector<RealVector>& target_probs) {
  if (target_probs.empty()) throw std::invalid_argument("ce_gap: no members");
  const std::size_t n = target_probs.front().size();
  if (n == 0) throw std::invalid_argument("ce_gap: no samples");
  for (const auto& row : target_probs) {
    if (row.size() != n) throw DimensionError("ce_gap: members scored different sample counts");
    for (double p : row) {
      if (!(p > 0.0 && p <= 1.0)) {
        throw std::domain_error("ce_gap: probability " + std::to_string(p) + " outside (0,1]");
      }
    }
  }
  const double m = static_cast<double>(target_probs.size());
  double sum_avg = 0.0, sum_fusion = 0.0, sum_delta = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double ref = target_probs.front()[t];
    double mean_log = 0.0, mean_p = 0.0, mean_ratio = 0.0, mean_log_ratio = 0.0;
    for (const auto& row : target_probs) {
      const double ratio = row[t] / ref;
      mean_log += std::log(row[t]);
      mean_p += row[t];
      mean_ratio += ratio;
      mean_log_ratio += std::log(ratio);
    }
    mean_log /= m;
    mean_p /= m;
    mean_ratio /= m;
    mean_log_ratio /= m;
    sum_avg -= mean_log;
    sum_fusion -= std::log(mean_p);
    // log(AM / GM) of the ratios equals log(AM / GM) of the probabilities.
    sum_delta += std::log(mean_ratio) - mean_log_ratio;
  }
  const double fn = static_cast<double>(n);
  return {sum_avg / fn, sum_fusion / fn, sum_delta / fn};
}

void save_ensemble_manifest(const std::string& path, const Ensemble& ensemble) {
  namespace fs = std::filesystem;
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# selection=" << ensemble.provenance << '\n';
  out << "member,epoch,loss,val_f1,path\n";
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto& m = ensemble.members[i];
    if (m.path.empty()) {
      throw std::invalid_argument("ensemble member " + std::to_string(i) + " has no model file");
    }
    // Member paths are stored relative to the manifest's directory.
    const fs::path rel = fs::absolute(fs::path(m.path)).lexically_normal().lexically_relative(base);
    out << i << ',' << m.epoch << ',' << to_string(m.loss) << ',' << format_double(m.val_f1) << ','
        << rel.generic_string() << '\n';
  }
}

Ensemble load_ensemble(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ensemble manifest '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  Ensemble e;
  std::string line;
  bool header_seen = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# selection=", 0) == 0) {
      e.provenance = line.substr(12);
      continue;
    }
    if (line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string member, epoch, loss, val_f1, model_path;
    if (!std::getline(ss, member, ',') || !std::getline(ss, epoch, ',') ||
        !std::getline(ss, loss, ',') || !std::getline(ss, val_f1, ',') ||
        !std::getline(ss, model_path)) {
      throw std::runtime_error(path + " row " + std::to_string(row) +
                               ": expected member,epoch,loss,val_f1,path");
    }
    fs::path p(model_path);
    if (p.is_relative()) p = base / p;
    LoadedModel model = load_model(p.string());
    e.members.push_back({std::move(model.net), std::stoi(epoch), parse_loss_kind(loss),
                         parse_double(val_f1), 0.0, p.string()});
  }
  e.validate();
  return e;
}

}  // namespace lstmens
