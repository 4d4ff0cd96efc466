#include "asl/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

namespace asl {

RefIndex::RefIndex(std::vector<Descriptor> refs) : refs_(std::move(refs)) {
  if (refs_.empty()) {
    throw ConfigInvalid("refs", "reference set must be non-empty");
  }
  dim_ = static_cast<std::uint32_t>(refs_[0].vec.size());
  std::set<ImageId> ids;
  norms_.reserve(refs_.size());
  for (const Descriptor& d : refs_) {
    if (d.vec.size() != dim_) {
      throw DimensionMismatch("build_index: descriptor id=" +
                                  std::to_string(d.id) + " has dim " +
                                  std::to_string(d.vec.size()) +
                                  ", index dim " + std::to_string(dim_),
                              0);
    }
    if (!ids.insert(d.id).second) {
      throw DuplicateId("build_index: duplicate reference id " +
                        std::to_string(d.id));
    }
    const double n = norm(d);
    if (n == 0.0) {
      throw ZeroNormDescriptor("build_index: reference id=" +
                               std::to_string(d.id) + " has zero norm");
    }
    norms_.push_back(n);
    norm_by_id_[d.id] = n;
  }
}

double RefIndex::norm_of(ImageId id) const {
  const auto it = norm_by_id_.find(id);
  if (it == norm_by_id_.end()) {
    throw ConfigInvalid("candidates",
                        "candidate reference not present in the index");
  }
  return it->second;
}

RefIndex build_index(std::vector<Descriptor> refs) {
  return RefIndex(std::move(refs));
}

void validate(const MatchConfig& cfg) {
  if (cfg.k < 1) throw ConfigInvalid("k", "must be >= 1");
  if (cfg.ratio_threshold <= 0.0) throw ConfigInvalid("tau", "must be > 0");
  if (cfg.ratio_tolerance < 0.0) throw ConfigInvalid("delta", "must be >= 0");
}

std::vector<Candidate> search(const RefIndex& index, const Descriptor& query,
                              const MatchConfig& cfg) {
  validate(cfg);
  const double nq = norm(query);
  if (nq == 0.0) {
    throw ZeroNormDenominator("search: query id=" + std::to_string(query.id) +
                              " has zero norm");
  }
  if (query.vec.size() != index.dim()) {
    throw DimensionMismatch("search: query dim " +
                                std::to_string(query.vec.size()) +
                                " vs index dim " + std::to_string(index.dim()),
                            0);
  }
  std::vector<Candidate> all;
  all.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Descriptor& r = index.descriptor(i);
    double dot = 0.0;
    for (std::size_t k = 0; k < query.vec.size(); ++k) {
      dot += query.vec[k] * r.vec[k];
    }
    const double sim = dot / (nq * index.cached_norm(i));
    if (sim >= cfg.distance_threshold) {
      all.push_back(Candidate{r.id, sim});
    }
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.reference < b.reference;
  });
  if (all.size() > cfg.k) all.resize(cfg.k);
  return all;
}

std::vector<Candidate> ratio_filter(const Descriptor& query,
                                    const std::vector<Candidate>& candidates,
                                    const RefIndex& index,
                                    const MatchConfig& cfg) {
  if (!cfg.filter_enabled) return candidates;
  const double cutoff = cfg.ratio_threshold + cfg.ratio_tolerance;
  const double nq = norm(query);
  std::vector<Candidate> kept;
  kept.reserve(candidates.size());
  for (const Candidate& c : candidates) {
    const double ratio = nq / index.norm_of(c.reference);
    if (ratio > cutoff) continue;  // more content than the reference: not a copy
    kept.push_back(c);
  }
  return kept;
}

MatchOutput match_all(const std::vector<Descriptor>& queries,
                      const RefIndex& index, const MatchConfig& cfg) {
  validate(cfg);
  MatchOutput out;
  for (const Descriptor& q : queries) {
    try {
      std::vector<Candidate> cands = search(index, q, cfg);
      cands = ratio_filter(q, cands, index, cfg);
      for (const Candidate& c : cands) {
        out.predictions.push_back(Prediction{q.id, c.reference, c.score});
      }
    } catch (const Error& e) {
      out.failures.push_back(MatchFailure{q.id, e.what()});
    }
  }
  return out;
}

}  // namespace asl
