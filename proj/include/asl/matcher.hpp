#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "asl/core.hpp"

namespace asl {

struct DuplicateId : Error {
  using Error::Error;
};
struct ZeroNormDescriptor : Error {
  using Error::Error;
};

// Immutable reference-side index with precomputed norms.
class RefIndex {
 public:
  explicit RefIndex(std::vector<Descriptor> refs);

  std::size_t size() const { return refs_.size(); }
  std::uint32_t dim() const { return dim_; }
  const Descriptor& descriptor(std::size_t i) const { return refs_[i]; }
  double cached_norm(std::size_t i) const { return norms_[i]; }
  double norm_of(ImageId id) const;  // throws ConfigInvalid for unknown ids

 private:
  std::vector<Descriptor> refs_;
  std::vector<double> norms_;
  std::map<ImageId, double> norm_by_id_;
  std::uint32_t dim_ = 0;
};

RefIndex build_index(std::vector<Descriptor> refs);

struct MatchConfig {
  std::uint32_t k = 10;              // candidates per query
  double distance_threshold = 0.5;   // epsilon: minimum cosine to keep
  double ratio_threshold = 1.0;      // tau
  double ratio_tolerance = 0.05;     // delta; 0 recovers the strict "> 1" rule
  bool filter_enabled = true;
};

void validate(const MatchConfig& cfg);

struct Candidate {
  ImageId reference = 0;
  double score = 0.0;  // cosine similarity
};

// Exact top-k by cosine similarity among references with similarity >=
// epsilon; ties broken by ascending reference id.
std::vector<Candidate> search(const RefIndex& index, const Descriptor& query,
                              const MatchConfig& cfg);

// Second, asymmetric stage: drops every candidate whose query->reference
// norm ratio exceeds tau + delta (a query with more content than the
// reference cannot be its edited copy). Keeps order and scores of
// survivors; identity when the filter is disabled.
std::vector<Candidate> ratio_filter(const Descriptor& query,
                                    const std::vector<Candidate>& candidates,
                                    const RefIndex& index,
                                    const MatchConfig& cfg);

struct MatchFailure {
  ImageId query = 0;
  std::string message;
};

struct MatchOutput {
  std::vector<Prediction> predictions;  // ordered by (query id, rank)
  std::vector<MatchFailure> failures;   // per-query errors; processing continues
};

MatchOutput match_all(const std::vector<Descriptor>& queries,
                      const RefIndex& index, const MatchConfig& cfg);

}  // namespace asl
