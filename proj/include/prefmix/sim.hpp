#pragma once
// Synthetic designer populations and the leave-one-designer-out harness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefmix/bank.hpp"
#include "prefmix/embed.hpp"
#include "prefmix/error.hpp"
#include "prefmix/profile.hpp"
#include "prefmix/retrieval.hpp"

namespace prefmix {

/// Linear-utility rater: u(screen) = omega . embedding.
struct SyntheticDesignerSpec {
    std::string designer_id;
    Vector omega;
    double strength_threshold = 0.4;   // |u_L - u_R| above this gives |label| = 2
    double decision_temperature = 0.05;  // logistic direction noise; 0 is noiseless
    std::size_t cluster_id = 0;
};

struct SyntheticBankSpec {
    std::size_t n_designers = 20;
    std::size_t n_clusters = 4;
    std::size_t n_prompts = 100;
    std::size_t screens_per_prompt = 4;
    std::size_t dim = 16;
    std::size_t n_categories = 5;
    double within_cluster_noise = 0.3;
    double strength_threshold = 0.4;
    double decision_temperature = 0.05;

    void validate() const {
        if (n_clusters < 1 || n_designers < n_clusters) {
            fail(ErrorCode::InvalidArgument, "need n_designers >= n_clusters >= 1", "n_clusters");
        }
        if (screens_per_prompt < 2) fail(ErrorCode::InvalidArgument, "screens_per_prompt must be >= 2", "screens_per_prompt");
        if (n_prompts < 1 || dim < 1 || n_categories < 1) fail(ErrorCode::InvalidArgument, "sizes must be positive");
        if (!(strength_threshold > 0.0)) fail(ErrorCode::InvalidArgument, "strength_threshold must be positive", "strength_threshold");
        if (decision_temperature < 0.0 || within_cluster_noise < 0.0) {
            fail(ErrorCode::InvalidArgument, "noise parameters must be nonnegative");
        }
    }
};

inline SyntheticBankSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticBankSpec s;
    s.n_designers = j.value("n_designers", s.n_designers);
    s.n_clusters = j.value("n_clusters", s.n_clusters);
    s.n_prompts = j.value("n_prompts", s.n_prompts);
    s.screens_per_prompt = j.value("screens_per_prompt", s.screens_per_prompt);
    s.dim = j.value("dim", s.dim);
    s.n_categories = j.value("n_categories", s.n_categories);
    s.within_cluster_noise = j.value("within_cluster_noise", s.within_cluster_noise);
    s.strength_threshold = j.value("strength_threshold", s.strength_threshold);
    s.decision_temperature = j.value("decision_temperature", s.decision_temperature);
    s.validate();
    return s;
}

inline double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Direction drawn from logistic((u_L - u_R) / temperature); strength from the
/// utility gap against the designer's threshold.
template <class Rng>
Label simulate_label(const SyntheticDesignerSpec& designer, const Vector& left, const Vector& right, Rng& rng) {
    const double gap = designer.omega.dot(left) - designer.omega.dot(right);
    const double p_left = designer.decision_temperature > 0.0 ? logistic(gap / designer.decision_temperature)
                          : gap > 0.0                         ? 1.0
                          : gap < 0.0                         ? 0.0
                                                              : 0.5;
    const int dir = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_left ? 1 : -1;
    const int mag = std::abs(gap) > designer.strength_threshold ? 2 : 1;
    return static_cast<Label>(dir * mag);
}

struct SyntheticBank {
    DataBank bank;
    EmbeddingStore store;
    std::vector<SyntheticDesignerSpec> designers;
};

namespace detail {

template <class Rng>
Vector gaussian_vector(std::size_t dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = normal(rng);
    return v;
}

inline std::string numbered(const char* prefix, std::size_t i, int width) {
    std::ostringstream s;
    s << prefix << std::setw(width) << std::setfill('0') << i;
    return s.str();
}

} // namespace detail

/// Random unit screen embeddings; cluster-shared utility directions plus
/// per-designer noise; complete label table. Deterministic per seed.
inline SyntheticBank gen_synthetic_bank(const SyntheticBankSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    SyntheticBank out;
    out.store = EmbeddingStore(static_cast<Eigen::Index>(spec.dim));

    std::vector<Vector> bases;
    for (std::size_t c = 0; c < spec.n_clusters; ++c) bases.push_back(normalized(detail::gaussian_vector(spec.dim, rng)));
    const double per_coord = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    for (std::size_t d = 0; d < spec.n_designers; ++d) {
        SyntheticDesignerSpec ds;
        ds.designer_id = detail::numbered("d", d, 2);
        ds.cluster_id = d % spec.n_clusters;
        ds.omega = bases[ds.cluster_id] + spec.within_cluster_noise * per_coord * detail::gaussian_vector(spec.dim, rng);
        ds.strength_threshold = spec.strength_threshold;
        ds.decision_temperature = spec.decision_temperature;
        out.designers.push_back(std::move(ds));
    }

    BankBuilder builder;
    std::vector<ComparisonPair> pairs;
    std::bernoulli_distribution coin(0.5);
    for (std::size_t p = 0; p < spec.n_prompts; ++p) {
        const std::string pid = detail::numbered("p", p, 3);
        builder.add_prompt({pid, "synthetic prompt " + std::to_string(p),
                            detail::numbered("type", p % spec.n_categories, 2)});
        std::vector<std::string> screens;
        for (std::size_t s = 0; s < spec.screens_per_prompt; ++s) {
            const std::string sid = pid + "_s" + std::to_string(s);
            builder.add_screen({sid, pid, sid, {}});
            out.store.add(sid, detail::gaussian_vector(spec.dim, rng));
            screens.push_back(sid);
        }
        std::size_t k = 0;
        for (std::size_t a = 0; a < screens.size(); ++a) {
            for (std::size_t b = a + 1; b < screens.size(); ++b) {
                const bool flip = coin(rng);
                const std::string pair_id = pid + "_x" + std::to_string(k++);
                const auto& l = flip ? screens[b] : screens[a];
                const auto& r = flip ? screens[a] : screens[b];
                pairs.push_back({pair_id, pid, l, r});
                builder.add_pair(pairs.back());
            }
        }
    }
    // Labels are drawn after every embedding.
    for (const auto& ds : out.designers) {
        for (const auto& pair : pairs) {
            const Label label = simulate_label(ds, out.store.at(pair.left_id), out.store.at(pair.right_id), rng);
            builder.add_label(ds.designer_id, pair.pair_id, to_int(label));
        }
    }
    out.bank = builder.build();
    return out;
}

// ---------------------------------------------------------------------------
// Leave-one-designer-out evaluation
// ---------------------------------------------------------------------------

enum class QueryPolicy { Eig, Random };

inline std::string_view to_string(QueryPolicy p) { return p == QueryPolicy::Eig ? "eig" : "random"; }

inline QueryPolicy policy_from_string(std::string_view s) {
    if (s == "eig") return QueryPolicy::Eig;
    if (s == "random") return QueryPolicy::Random;
    fail(ErrorCode::InvalidArgument, "policy must be eig or random", "policy");
}

/// Alternative personalized predictor evaluated under the same protocol
/// (e.g. a prompted model). Returns a signed score; positive favors left.
class ExternalJudge {
public:
    virtual ~ExternalJudge() = default;
    virtual double score(const DataBank& fold_bank, std::span<const Observation> onboarding,
                         std::size_t test_pair) = 0;
};

struct LodoOptions {
    std::vector<std::size_t> k_values{0, 1, 2, 4, 8};
    QueryPolicy policy = QueryPolicy::Eig;
    NoiseModel noise;
    RetrievalConfig retrieval;
    std::vector<std::uint64_t> seeds{0};
    double mixing_floor = 0.0;
    /// Retrain the residual adapter on each fold's bank.
    std::optional<TrainConfig> per_fold_training;
    ExternalJudge* judge = nullptr;
};

struct EvalRow {
    std::size_t k;
    QueryPolicy policy;
    std::string fold;  // held-out designer id
    std::uint64_t seed;
    double accuracy;
    double entropy;
};

struct CurvePoint {
    std::size_t k;
    double mean_accuracy;
    double mean_entropy;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    std::vector<CurvePoint> curve;  // ascending k
};

/// Test-pair neighbor sets of one retrieval index, reusable across folds.
class FoldEvaluator {
public:
    explicit FoldEvaluator(const RetrievalIndex& index) : index_(&index) {
        const DataBank& bank = index.bank();
        test_pairs_ = bank.pairs_in(Partition::Test);
        for (std::size_t j : test_pairs_) {
            const auto& pair = bank.pairs()[j];
            neighbors_.push_back(index.retrieve(index.screen_embedding(pair.left_id),
                                                index.screen_embedding(pair.right_id), j));
        }
    }

    const std::vector<std::size_t>& test_pairs() const noexcept { return test_pairs_; }

    /// Per test pair, per fold designer: sum_j w_j (o_direct - o_swap) c_{d,j}.
    std::vector<std::vector<double>> designer_votes(const DataBank& fold_bank) const {
        std::vector<std::vector<double>> votes(test_pairs_.size(), std::vector<double>(fold_bank.num_designers(), 0.0));
        for (std::size_t q = 0; q < test_pairs_.size(); ++q) {
            for (const auto& nb : neighbors_[q]) {
                const double coef = nb.weight * (nb.orientation.direct - nb.orientation.swapped);
                for (std::size_t d = 0; d < fold_bank.num_designers(); ++d) {
                    votes[q][d] += coef * fold_bank.label_value(d, nb.pair);
                }
            }
        }
        return votes;
    }

    /// Direction accuracy of pi on the held-out designer's test labels.
    static double accuracy(const std::vector<std::vector<double>>& votes, const DesignerDistribution& pi,
                           std::span<const std::size_t> test_pairs, const DataBank& full_bank, std::size_t held_out) {
        std::size_t hits = 0, total = 0;
        for (std::size_t q = 0; q < test_pairs.size(); ++q) {
            const auto truth = full_bank.label(held_out, test_pairs[q]);
            if (!truth) continue;
            double score = 0.0;
            for (std::size_t d = 0; d < pi.size(); ++d) score += pi[d] * votes[q][d];
            const Direction pred = predict_direction(score);
            hits += (pred.side == Side::Left ? 1 : -1) == direction(*truth);
            ++total;
        }
        return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    }

private:
    const RetrievalIndex* index_;
    std::vector<std::size_t> test_pairs_;
    std::vector<std::vector<ScoredNeighbor>> neighbors_;
};

namespace detail {

inline std::mt19937_64 fold_rng(std::uint64_t seed, std::size_t fold) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fold), 0x5eedu};
    return std::mt19937_64(seq);
}

/// Onboarding trajectory: pi after each of k_max steps (index 0 is uniform).
inline std::vector<DesignerDistribution> onboarding_trajectory(const DataBank& fold_bank, const DataBank& full_bank,
                                                               std::size_t held_out, std::size_t k_max,
                                                               QueryPolicy policy, std::uint64_t seed, std::size_t fold,
                                                               const LikelihoodTable& table, double mixing_floor,
                                                               std::vector<Observation>* history_out) {
    std::vector<std::size_t> candidates;
    for (std::size_t j : fold_bank.pairs_in(Partition::Train)) {
        if (full_bank.label(held_out, j)) candidates.push_back(j);
    }
    OnboardingSession session("fold", fold_bank, k_max, mixing_floor);
    std::vector<DesignerDistribution> traj{session.pi()};
    auto rng = fold_rng(seed, fold);
    for (std::size_t step = 0; step < k_max; ++step) {
        std::size_t pair = 0;
        if (policy == QueryPolicy::Eig) {
            pair = select_next_query(session, candidates, fold_bank, table);
        } else {
            std::vector<std::size_t> open;
            for (std::size_t j : candidates) {
                if (!session.asked().count(j)) open.push_back(j);
            }
            if (open.empty()) fail(ErrorCode::CandidatesExhausted, "no unasked candidate pairs remain");
            pair = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
        }
        session.record(pair, *full_bank.label(held_out, pair), fold_bank, table);
        traj.push_back(session.pi());
    }
    if (history_out) *history_out = session.history();
    return traj;
}

} // namespace detail

/// Leave-one-designer-out: each designer in turn is the new user, removed from
/// the bank; onboarding queries come from the train split and are answered
/// with that designer's stored labels; accuracy is measured on their test labels.
inline EvalResult lodo_eval(const DataBank& bank, const EmbeddingStore& store, const ResidualAdapter* adapter,
                            const LodoOptions& options) {
    if (bank.num_designers() < 3) fail(ErrorCode::InsufficientDesigners, "LODO needs at least three designers");
    if (!bank.has_split()) fail(ErrorCode::InvalidArgument, "LODO needs a split bank", "split");
    std::vector<std::size_t> ks = options.k_values;
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    if (ks.empty()) fail(ErrorCode::InvalidArgument, "no k values", "k");
    const std::size_t k_max = ks.back();
    const LikelihoodTable table(options.noise);

    std::optional<RetrievalIndex> shared_index;
    std::optional<FoldEvaluator> shared_eval;
    if (!options.per_fold_training) {
        shared_index.emplace(bank, store, adapter, options.retrieval);
        shared_eval.emplace(*shared_index);
    }
    const std::vector<std::uint64_t> seeds =
        options.policy == QueryPolicy::Eig ? std::vector<std::uint64_t>{options.seeds.empty() ? 0 : options.seeds.front()}
                                           : options.seeds;

    EvalResult result;
    for (std::size_t h = 0; h < bank.num_designers(); ++h) {
        const DataBank fold_bank = bank.without_designer(h);
        std::optional<ResidualAdapter> fold_adapter;
        std::optional<RetrievalIndex> fold_index;
        std::optional<FoldEvaluator> fold_eval;
        if (options.per_fold_training) {
            fold_adapter = train_adapter(fold_bank, store, *options.per_fold_training).adapter;
            fold_index.emplace(bank, store, &*fold_adapter, options.retrieval);
            fold_eval.emplace(*fold_index);
        }
        const FoldEvaluator& evaluator = fold_eval ? *fold_eval : *shared_eval;
        const auto votes = evaluator.designer_votes(fold_bank);

        for (std::uint64_t seed : seeds) {
            std::vector<Observation> history;
            const auto traj = detail::onboarding_trajectory(fold_bank, bank, h, k_max, options.policy, seed, h, table,
                                                            options.mixing_floor, &history);
            for (std::size_t k : ks) {
                double acc = 0.0;
                if (options.judge) {
                    std::size_t hits = 0, total = 0;
                    for (std::size_t j : evaluator.test_pairs()) {
                        const auto truth = bank.label(h, j);
                        if (!truth) continue;
                        const double s = options.judge->score(fold_bank, std::span(history).first(k), j);
                        hits += (predict_direction(s).side == Side::Left ? 1 : -1) == direction(*truth);
                        ++total;
                    }
                    acc = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
                } else {
                    acc = FoldEvaluator::accuracy(votes, traj[k], evaluator.test_pairs(), bank, h);
                }
                result.rows.push_back({k, options.policy, bank.designer_ids()[h], seed, acc, entropy(traj[k])});
            }
        }
    }
    for (std::size_t k : ks) {
        double acc = 0.0, ent = 0.0;
        std::size_t n = 0;
        for (const auto& row : result.rows) {
            if (row.k != k) continue;
            acc += row.accuracy;
            ent += row.entropy;
            ++n;
        }
        result.curve.push_back({k, acc / static_cast<double>(n), ent / static_cast<double>(n)});
    }
    return result;
}

struct PolicyComparisonRow {
    std::size_t k;
    double eig_entropy;
    double random_entropy;
    double eig_accuracy;
    double random_accuracy;
};

/// EIG vs random selection on identical folds; random averaged over `seeds`.
inline std::vector<PolicyComparisonRow> policy_compare(const DataBank& bank, const EmbeddingStore& store,
                                                       const ResidualAdapter* adapter, std::size_t k_max,
                                                       std::vector<std::uint64_t> seeds, LodoOptions options = {}) {
    options.k_values.clear();
    for (std::size_t k = 0; k <= k_max; ++k) options.k_values.push_back(k);
    options.seeds = std::move(seeds);
    options.policy = QueryPolicy::Eig;
    const auto eig = lodo_eval(bank, store, adapter, options);
    options.policy = QueryPolicy::Random;
    const auto rnd = lodo_eval(bank, store, adapter, options);
    std::vector<PolicyComparisonRow> rows;
    for (std::size_t i = 0; i < eig.curve.size(); ++i) {
        rows.push_back({eig.curve[i].k, eig.curve[i].mean_entropy, rnd.curve[i].mean_entropy,
                        eig.curve[i].mean_accuracy, rnd.curve[i].mean_accuracy});
    }
    return rows;
}

/// Delimited curve table: k,policy,fold,seed,accuracy,entropy.
inline void write_curves(std::ostream& out, const EvalResult& result) {
    out << "k,policy,fold,seed,accuracy,entropy\n" << std::setprecision(17);
    for (const auto& r : result.rows) {
        out << r.k << ',' << to_string(r.policy) << ',' << r.fold << ',' << r.seed << ',' << r.accuracy << ','
            << r.entropy << '\n';
    }
}

} // namespace prefmix
