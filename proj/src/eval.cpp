#include "ktrans/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace ktrans {

double cosine(const VecX<double>& a, const VecX<double>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

int detect_outlier(const std::vector<VecX<double>>& embeddings) {
  const int n = static_cast<int>(embeddings.size());
  if (n < 3) throw ConfigError("outlier detection needs at least 3 embeddings");
  int best = 0;
  double best_mean = 0.0;
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      sum += cosine(embeddings[static_cast<std::size_t>(i)],
                    embeddings[static_cast<std::size_t>(j)]);
    }
    const double mean = sum / static_cast<double>(n - 1);
    if (i == 0 || mean < best_mean) {
      best = i;
      best_mean = mean;
    }
  }
  return best;
}

std::vector<OutlierGroup> build_outlier_groups(const std::vector<std::string>& classes,
                                               int n_groups, Rng& rng) {
  if (n_groups < 1) throw ConfigError("need at least one outlier group");
  std::unordered_map<std::string, std::vector<int>> by_class;
  std::vector<std::string> class_order;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto [it, inserted] = by_class.try_emplace(classes[i]);
    if (inserted) class_order.push_back(classes[i]);
    it->second.push_back(static_cast<int>(i));
  }

  std::vector<std::string> inlier_classes;
  for (const std::string& c : class_order) {
    if (by_class[c].size() >= 4) inlier_classes.push_back(c);
  }
  if (inlier_classes.empty() || class_order.size() < 2) {
    throw ConfigError("outlier groups need one class with >= 4 members and a second class");
  }

  std::vector<OutlierGroup> groups;
  groups.reserve(static_cast<std::size_t>(n_groups));
  for (int g = 0; g < n_groups; ++g) {
    const std::string& inlier =
        inlier_classes[rng.uniform(inlier_classes.size())];
    std::string other;
    do {
      other = class_order[rng.uniform(class_order.size())];
    } while (other == inlier);

    const std::vector<int>& inlier_pool = by_class[inlier];
    std::vector<int> picks = rng.sample_without_replacement(
        static_cast<int>(inlier_pool.size()), 4);
    const std::vector<int>& other_pool = by_class[other];
    const int outlier_member =
        other_pool[rng.uniform(other_pool.size())];

    // Fill five slots, then place the outlier at a random one.
    OutlierGroup group;
    std::vector<int> slots = {0, 1, 2, 3, 4};
    rng.shuffle(slots);
    group.outlier = slots[4];
    int next_inlier = 0;
    for (int s = 0; s < 5; ++s) {
      if (s == group.outlier) {
        group.members[static_cast<std::size_t>(s)] = outlier_member;
      } else {
        group.members[static_cast<std::size_t>(s)] =
            inlier_pool[static_cast<std::size_t>(picks[static_cast<std::size_t>(next_inlier++)])];
      }
    }
    groups.push_back(group);
  }
  return groups;
}

OutlierReport outlier_accuracy(const std::vector<OutlierGroup>& groups,
                               const std::vector<VecX<double>>& embeddings) {
  if (groups.empty()) throw ConfigError("no outlier groups to score");
  OutlierReport report;
  report.groups = static_cast<long>(groups.size());
  for (const OutlierGroup& g : groups) {
    std::vector<VecX<double>> five;
    five.reserve(5);
    for (int m : g.members) five.push_back(embeddings.at(static_cast<std::size_t>(m)));
    if (detect_outlier(five) == g.outlier) ++report.correct;
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.groups);
  return report;
}

int retrieval_rank(const VecX<double>& query, const std::vector<VecX<double>>& candidates,
                   int ground_truth) {
  if (ground_truth < 0 || ground_truth >= static_cast<int>(candidates.size())) {
    throw ConfigError("retrieval ground truth index out of range");
  }
  const double gt_sim = cosine(query, candidates[static_cast<std::size_t>(ground_truth)]);
  int rank = 1;
  for (int j = 0; j < static_cast<int>(candidates.size()); ++j) {
    if (j == ground_truth) continue;
    if (cosine(query, candidates[static_cast<std::size_t>(j)]) >= gt_sim) ++rank;
  }
  return rank;
}

double mean_reciprocal_rank(const std::vector<int>& ranks) {
  if (ranks.empty()) throw ConfigError("no retrieval ranks to average");
  double sum = 0.0;
  for (int r : ranks) sum += 1.0 / static_cast<double>(r);
  return sum / static_cast<double>(ranks.size());
}

double recall_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw ConfigError("no retrieval ranks to average");
  if (k < 1) throw ConfigError("recall cutoff must be at least 1");
  long hits = 0;
  for (int r : ranks) {
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

void export_embeddings(const std::string& path, const std::vector<std::string>& ids,
                       const std::vector<std::string>& labels,
                       const std::vector<VecX<double>>& vectors) {
  if (ids.size() != labels.size() || ids.size() != vectors.size()) {
    throw ConfigError("embedding export lists must have equal lengths");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open embedding file for writing: " + path);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    nlohmann::json j;
    j["id"] = ids[i];
    j["label"] = labels[i];
    std::vector<double> v(vectors[i].data(), vectors[i].data() + vectors[i].size());
    j["vector"] = v;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing embedding file: " + path);
}

}  // namespace ktrans
