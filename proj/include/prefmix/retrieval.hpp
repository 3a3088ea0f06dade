#pragma once
// Retrieval-based personalized judge. A query pair is matched against the
// training pairs of the bank by direct and swapped alignment; the labels of
// the retrieved pairs are averaged under the user's designer distribution.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "prefmix/bank.hpp"
#include "prefmix/embed.hpp"
#include "prefmix/error.hpp"
#include "prefmix/profile.hpp"

namespace prefmix {

struct RetrievalConfig {
    std::size_t n = 100;
    double tau_align = 0.1;
    double beta_retrieval = 0.05;

    void validate() const {
        if (n < 1) fail(ErrorCode::InvalidArgument, "neighbor count must be at least 1", "n");
        if (!(tau_align > 0.0)) fail(ErrorCode::InvalidArgument, "tau_align must be positive", "tau_align");
        if (!(beta_retrieval > 0.0)) fail(ErrorCode::InvalidArgument, "beta_retrieval must be positive", "beta_retrieval");
    }
};

struct AlignmentScores {
    double direct;
    double swapped;
};

inline AlignmentScores alignment_scores(const Vector& q_left, const Vector& q_right, const Vector& j_left,
                                        const Vector& j_right) {
    return {q_left.dot(j_left) + q_right.dot(j_right), q_left.dot(j_right) + q_right.dot(j_left)};
}

/// tau * ln(exp(s/tau) + exp(s'/tau)), symmetric in its first two arguments.
inline double combined_similarity(double s, double s_swapped, double tau) {
    const double hi = std::max(s, s_swapped);
    const double lo = std::min(s, s_swapped);
    return hi + tau * std::log1p(std::exp((lo - hi) / tau));
}

struct Orientation {
    double direct;
    double swapped;
};

/// Two-way softmax over (s/tau, s'/tau).
inline Orientation orientation_weights(double s, double s_swapped, double tau) {
    const double hi = std::max(s, s_swapped);
    const double a = std::exp((s - hi) / tau);
    const double b = std::exp((s_swapped - hi) / tau);
    const double z = a + b;
    return {a / z, b / z};
}

struct ScoredNeighbor {
    std::size_t pair;  // bank pair index
    double similarity;
    double weight;
    Orientation orientation;
};

enum class Side { Left, Right };

struct Direction {
    Side side;
    bool tie;

    bool operator==(const Direction&) const = default;
};

/// Positive favors left; an exact zero is reported as left with the tie flag.
inline Direction predict_direction(double score) {
    if (score > 0.0) return {Side::Left, false};
    if (score < 0.0) return {Side::Right, false};
    return {Side::Left, true};
}

/// Adapted embeddings for every stored screen plus packed matrices of the
/// retrievable (train) pairs. Borrows the bank; the bank must outlive it.
class RetrievalIndex {
public:
    RetrievalIndex(const DataBank& bank, const EmbeddingStore& store, const ResidualAdapter* adapter,
                   RetrievalConfig config = {})
        : bank_(&bank),
          adapter_(adapter ? std::optional<ResidualAdapter>(*adapter) : std::nullopt),
          store_(adapter ? adapt_store(store, *adapter) : store),
          config_(config) {
        config_.validate();
        candidates_ = bank.pairs_in(Partition::Train);
        const Eigen::Index dim = store_.dim();
        left_.resize(dim, static_cast<Eigen::Index>(candidates_.size()));
        right_.resize(dim, static_cast<Eigen::Index>(candidates_.size()));
        for (std::size_t k = 0; k < candidates_.size(); ++k) {
            const auto& pair = bank.pairs()[candidates_[k]];
            left_.col(static_cast<Eigen::Index>(k)) = store_.for_screen(bank, pair.left_id);
            right_.col(static_cast<Eigen::Index>(k)) = store_.for_screen(bank, pair.right_id);
        }
    }

    const DataBank& bank() const noexcept { return *bank_; }
    const RetrievalConfig& config() const noexcept { return config_; }
    const std::vector<std::size_t>& candidates() const noexcept { return candidates_; }
    Eigen::Index dim() const noexcept { return store_.dim(); }

    /// Adapted embedding of a bank screen, or of a store entry with that id.
    const Vector& screen_embedding(const std::string& screen_id) const {
        if (auto idx = bank_->screen_index(screen_id)) return store_.at(bank_->screens()[*idx].embedding_ref);
        if (const Vector* v = store_.find(screen_id)) return *v;
        fail(ErrorCode::UnknownScreen, "unknown screen '" + screen_id + "'", screen_id);
    }

    /// Normalizes and adapts an externally supplied embedding.
    Vector embed_inline(const Vector& raw) const {
        if (raw.size() != dim()) {
            fail(ErrorCode::DimensionMismatch, "inline embedding has dimension " + std::to_string(raw.size()) +
                                                   ", expected " + std::to_string(dim()));
        }
        Vector unit = normalized(raw);
        return adapter_ ? apply_adapter(*adapter_, unit) : unit;
    }

    /// Top-n training pairs by combined similarity, returned in bank order.
    /// `exclude` removes the query's own bank pair from the candidates.
    std::vector<ScoredNeighbor> retrieve(const Vector& q_left, const Vector& q_right,
                                         std::optional<std::size_t> exclude = std::nullopt) const {
        const Eigen::VectorXd direct = left_.transpose() * q_left + right_.transpose() * q_right;
        const Eigen::VectorXd swapped = right_.transpose() * q_left + left_.transpose() * q_right;

        std::vector<ScoredNeighbor> all;
        all.reserve(candidates_.size());
        for (std::size_t k = 0; k < candidates_.size(); ++k) {
            if (exclude && candidates_[k] == *exclude) continue;
            const auto i = static_cast<Eigen::Index>(k);
            all.push_back({candidates_[k], combined_similarity(direct(i), swapped(i), config_.tau_align), 0.0,
                           orientation_weights(direct(i), swapped(i), config_.tau_align)});
        }
        if (all.empty()) fail(ErrorCode::EmptyBank, "no retrievable training pairs");

        const std::size_t keep = std::min(config_.n, all.size());
        auto by_similarity = [](const ScoredNeighbor& a, const ScoredNeighbor& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.pair < b.pair;
        };
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), by_similarity);
        all.resize(keep);
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.pair < b.pair; });

        double top = all.front().similarity;
        for (const auto& nb : all) top = std::max(top, nb.similarity);
        double z = 0.0;
        for (auto& nb : all) {
            nb.weight = std::exp((nb.similarity - top) / config_.beta_retrieval);
            z += nb.weight;
        }
        for (auto& nb : all) nb.weight /= z;
        return all;
    }

    /// Retrieval for an ordered pair of screens, excluding the bank pair that
    /// compares the same two screens.
    std::vector<ScoredNeighbor> retrieve(const std::string& left_id, const std::string& right_id) const {
        return retrieve(screen_embedding(left_id), screen_embedding(right_id),
                        bank_->find_pair_by_screens(left_id, right_id));
    }

private:
    const DataBank* bank_;
    std::optional<ResidualAdapter> adapter_;
    EmbeddingStore store_;
    RetrievalConfig config_;
    std::vector<std::size_t> candidates_;
    Matrix left_;
    Matrix right_;
};

/// sum_d pi(d) c_{d,j}; missing labels contribute nothing.
inline double mixture_label(const DesignerDistribution& pi, std::size_t pair, const DataBank& bank) {
    double sum = 0.0;
    for (std::size_t d = 0; d < pi.size(); ++d) sum += pi[d] * bank.label_value(d, pair);
    return sum;
}

/// s(q|u) from retrieved neighbors. The swapped-orientation share of each
/// neighbor contributes its labels negated.
inline double score_from_neighbors(std::span<const ScoredNeighbor> neighbors, const DesignerDistribution& pi,
                                   const DataBank& bank) {
    require_support(pi, bank);
    double score = 0.0;
    for (const auto& nb : neighbors) {
        const double label = mixture_label(pi, nb.pair, bank);
        score += nb.weight * (nb.orientation.direct * label - nb.orientation.swapped * label);
    }
    return score;
}

/// Personalized score of the ordered pair (left, right); positive favors left.
/// `bank` supplies the designer labels and may be a designer subset of the
/// bank the index was built on.
inline double score_pair_for_user(const std::string& left_id, const std::string& right_id,
                                  const DesignerDistribution& pi, const DataBank& bank,
                                  const RetrievalIndex& index) {
    return score_from_neighbors(index.retrieve(left_id, right_id), pi, bank);
}
inline double score_pair_for_user(const std::string& left_id, const std::string& right_id,
                                  const DesignerDistribution& pi, const RetrievalIndex& index) {
    return score_pair_for_user(left_id, right_id, pi, index.bank(), index);
}

struct RankedCandidate {
    std::string screen_id;
    double score;
    std::size_t rank;  // 1-based
};

/// Pool member with an adapted embedding.
struct PoolItem {
    std::string id;
    Vector embedding;
};

/// f_u(i) = mean over j != i of s((i, j) | u); sorted by score, ties by id.
inline std::vector<RankedCandidate> pointwise_scores(std::span<const PoolItem> pool, const DesignerDistribution& pi,
                                                     const DataBank& bank, const RetrievalIndex& index) {
    if (pool.size() < 2) fail(ErrorCode::PoolTooSmall, "reranking needs at least two candidates", "pool");
    std::vector<double> f(pool.size(), 0.0);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            const auto exclude = index.bank().find_pair_by_screens(pool[i].id, pool[j].id);
            const double s =
                score_from_neighbors(index.retrieve(pool[i].embedding, pool[j].embedding, exclude), pi, bank);
            f[i] += s;
            f[j] -= s;
        }
    }
    std::vector<RankedCandidate> ranked;
    ranked.reserve(pool.size());
    const double opponents = static_cast<double>(pool.size() - 1);
    for (std::size_t i = 0; i < pool.size(); ++i) ranked.push_back({pool[i].id, f[i] / opponents, 0});
    std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        return a.score != b.score ? a.score > b.score : a.screen_id < b.screen_id;
    });
    for (std::size_t r = 0; r < ranked.size(); ++r) ranked[r].rank = r + 1;
    return ranked;
}

inline std::vector<RankedCandidate> pointwise_scores(std::span<const std::string> screen_ids,
                                                     const DesignerDistribution& pi, const RetrievalIndex& index) {
    std::vector<PoolItem> pool;
    pool.reserve(screen_ids.size());
    for (const auto& id : screen_ids) pool.push_back({id, index.screen_embedding(id)});
    return pointwise_scores(pool, pi, index.bank(), index);
}

} // namespace prefmix
