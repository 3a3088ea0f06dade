#pragma once
// Arena analysis: battle logs with ties, Bradley-Terry strengths fitted by
// minorization-maximization, Elo-scale ratings, bootstrap intervals, win rates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefmix/bank.hpp"
#include "prefmix/error.hpp"

namespace prefmix {

enum class Outcome { AWins, BWins, Tie };

inline std::string_view to_string(Outcome o) {
    switch (o) {
    case Outcome::AWins: return "a_wins";
    case Outcome::BWins: return "b_wins";
    case Outcome::Tie: return "tie";
    }
    return "tie";
}

inline Outcome outcome_from_string(std::string_view s) {
    if (s == "a_wins") return Outcome::AWins;
    if (s == "b_wins") return Outcome::BWins;
    if (s == "tie") return Outcome::Tie;
    fail(ErrorCode::ParseError, "unknown outcome '" + std::string(s) + "'", "outcome");
}

inline constexpr const char* kIdenticalSelection = "identical selection";

struct Battle {
    std::string participant_id;
    std::string prompt_id;
    std::string condition_a;
    std::string condition_b;
    Outcome outcome = Outcome::Tie;
    std::string tie_reason;

    bool operator==(const Battle&) const = default;
};

/// Battle between two conditions' top picks. Identical picks are an automatic
/// tie; otherwise `judged` must carry the participant's verdict.
inline Battle battle_from_selections(std::string participant, std::string prompt, std::string condition_a,
                                     const std::string& selected_a, std::string condition_b,
                                     const std::string& selected_b, std::optional<Outcome> judged) {
    Battle b{std::move(participant), std::move(prompt), std::move(condition_a), std::move(condition_b),
             Outcome::Tie, {}};
    if (selected_a == selected_b) {
        b.tie_reason = kIdenticalSelection;
    } else {
        if (!judged) fail(ErrorCode::InvalidArgument, "distinct selections need a judged outcome", "outcome");
        b.outcome = *judged;
    }
    return b;
}

/// Validated battle log. Conditions are indexed in first-seen order.
class BattleLog {
public:
    const std::vector<Battle>& battles() const noexcept { return battles_; }
    const std::vector<std::string>& conditions() const noexcept { return conditions_; }
    const std::map<std::string, std::size_t>& per_participant() const noexcept { return per_participant_; }
    std::size_t condition_index(const std::string& c) const { return condition_index_.at(c); }
    std::size_t size() const noexcept { return battles_.size(); }

private:
    friend BattleLog record_battles(std::vector<Battle> battles);
    std::vector<Battle> battles_;
    std::vector<std::string> conditions_;
    std::map<std::string, std::size_t> condition_index_;
    std::map<std::string, std::size_t> per_participant_;
};

inline BattleLog record_battles(std::vector<Battle> battles) {
    BattleLog log;
    std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
    for (const auto& b : battles) {
        if (b.condition_a == b.condition_b) {
            fail(ErrorCode::SelfBattle, "condition '" + b.condition_a + "' battles itself", "condition_b");
        }
        const auto& lo = std::min(b.condition_a, b.condition_b);
        const auto& hi = std::max(b.condition_a, b.condition_b);
        if (!seen.emplace(b.participant_id, b.prompt_id, lo, hi).second) {
            fail(ErrorCode::DuplicateBattle, "participant '" + b.participant_id + "' compared " + lo + " and " + hi +
                                                 " twice on prompt '" + b.prompt_id + "'");
        }
        for (const auto* c : {&b.condition_a, &b.condition_b}) {
            if (log.condition_index_.emplace(*c, log.conditions_.size()).second) log.conditions_.push_back(*c);
        }
        ++log.per_participant_[b.participant_id];
    }
    log.battles_ = std::move(battles);
    return log;
}

enum class TiePolicy { HalfWin, Exclude };

/// Pairwise tallies: wins[i][j] counts i over j (ties add 0.5 to both under
/// HalfWin), games[i][j] the battles between i and j that count.
struct PairwiseCounts {
    std::vector<std::vector<double>> wins;
    std::vector<std::vector<double>> games;
};

inline PairwiseCounts tally(const BattleLog& log, std::span<const std::size_t> battle_indices, TiePolicy policy) {
    const std::size_t K = log.conditions().size();
    PairwiseCounts c{std::vector(K, std::vector<double>(K, 0.0)), std::vector(K, std::vector<double>(K, 0.0))};
    for (std::size_t idx : battle_indices) {
        const auto& b = log.battles()[idx];
        if (b.outcome == Outcome::Tie && policy == TiePolicy::Exclude) continue;
        const std::size_t a = log.condition_index(b.condition_a);
        const std::size_t o = log.condition_index(b.condition_b);
        c.games[a][o] += 1.0;
        c.games[o][a] += 1.0;
        switch (b.outcome) {
        case Outcome::AWins: c.wins[a][o] += 1.0; break;
        case Outcome::BWins: c.wins[o][a] += 1.0; break;
        case Outcome::Tie:
            c.wins[a][o] += 0.5;
            c.wins[o][a] += 0.5;
            break;
        }
    }
    return c;
}

inline PairwiseCounts tally(const BattleLog& log, TiePolicy policy) {
    std::vector<std::size_t> all(log.size());
    std::iota(all.begin(), all.end(), 0);
    return tally(log, all, policy);
}

struct BtOptions {
    TiePolicy tie_policy = TiePolicy::HalfWin;
    double tol = 1e-8;
    std::size_t max_iters = 100000;
    double min_strength = 1e-6;
    double max_strength = 1e6;
};

struct BtFit {
    std::vector<double> strengths;  // geometric mean 1 within each component
    std::vector<std::size_t> component;
    bool disconnected = false;
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> log_likelihood_trace;
};

/// sum_{i,j} wins[i][j] ln(w_i / (w_i + w_j)).
inline double bt_log_likelihood(const PairwiseCounts& c, std::span<const double> w) {
    double ll = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (c.wins[i][j] > 0.0) ll += c.wins[i][j] * std::log(w[i] / (w[i] + w[j]));
        }
    }
    return ll;
}

inline BtFit bt_fit(const PairwiseCounts& counts, const BtOptions& options = {}) {
    const std::size_t K = counts.games.size();
    double total = 0.0;
    for (const auto& row : counts.games) {
        for (double g : row) total += g;
    }
    if (total == 0.0) fail(ErrorCode::NoBattles, "no battles to fit");

    BtFit fit;
    detail::DisjointSets sets(K);
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = i + 1; j < K; ++j) {
            if (counts.games[i][j] > 0.0) sets.unite(i, j);
        }
    }
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < K; ++i) members[sets.find(i)].push_back(i);
    fit.component.resize(K);
    std::size_t comp_id = 0;
    for (const auto& [root, m] : members) {
        for (std::size_t i : m) fit.component[i] = comp_id;
        ++comp_id;
    }
    fit.disconnected = members.size() > 1;

    std::vector<double> wins_total(K, 0.0);
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) wins_total[i] += counts.wins[i][j];
    }

    std::vector<double> w(K, 1.0), next(K);
    auto normalize = [&](std::vector<double>& v) {
        for (const auto& [root, m] : members) {
            double log_mean = 0.0;
            for (std::size_t i : m) log_mean += std::log(v[i]);
            log_mean /= static_cast<double>(m.size());
            const double scale = std::exp(-log_mean);
            for (std::size_t i : m) v[i] = std::clamp(v[i] * scale, options.min_strength, options.max_strength);
        }
    };
    fit.log_likelihood_trace.push_back(bt_log_likelihood(counts, w));
    for (fit.iterations = 0; fit.iterations < options.max_iters;) {
        for (std::size_t i = 0; i < K; ++i) {
            double denom = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                if (j != i && counts.games[i][j] > 0.0) denom += counts.games[i][j] / (w[i] + w[j]);
            }
            next[i] = denom > 0.0 ? std::max(wins_total[i] / denom, options.min_strength) : w[i];
        }
        normalize(next);
        ++fit.iterations;
        double change = 0.0;
        for (std::size_t i = 0; i < K; ++i) change = std::max(change, std::abs(next[i] - w[i]) / w[i]);
        w.swap(next);
        fit.log_likelihood_trace.push_back(bt_log_likelihood(counts, w));
        if (change < options.tol) {
            fit.converged = true;
            break;
        }
    }
    fit.strengths = std::move(w);
    return fit;
}

inline BtFit bt_fit(const BattleLog& log, const BtOptions& options = {}) {
    if (log.size() == 0) fail(ErrorCode::NoBattles, "battle log is empty");
    return bt_fit(tally(log, options.tie_policy), options);
}

/// 400 log10(strength), shifted so the mean rating is 1000.
inline std::vector<double> bt_to_rating(std::span<const double> strengths) {
    std::vector<double> r(strengths.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < strengths.size(); ++i) {
        if (!(strengths[i] > 0.0)) fail(ErrorCode::InvalidArgument, "strengths must be positive");
        r[i] = 400.0 * std::log10(strengths[i]);
        mean += r[i];
    }
    mean /= static_cast<double>(r.size());
    for (double& x : r) x = x - mean + 1000.0;
    return r;
}

/// Linear-interpolation percentile (q in [0, 1]) of sorted data.
inline double percentile(std::span<const double> sorted, double q) {
    if (sorted.empty()) return std::nan("");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

enum class ResampleUnit { Participant, Battle };

struct BootstrapRow {
    double median;
    double lo95;
    double hi95;
    double first_place_share;
};

struct BootstrapResult {
    std::vector<BootstrapRow> rows;  // per condition
    std::size_t replicates = 0;
    std::size_t skipped = 0;         // disconnected or empty replicates
};

inline BootstrapResult bootstrap_ci(const BattleLog& log, ResampleUnit unit, std::size_t replicates,
                                    std::uint64_t seed, const BtOptions& options = {}) {
    if (replicates < 100) fail(ErrorCode::InvalidArgument, "bootstrap needs at least 100 replicates", "bootstrap");
    if (log.size() == 0) fail(ErrorCode::NoBattles, "battle log is empty");

    std::vector<std::vector<std::size_t>> units;
    if (unit == ResampleUnit::Participant) {
        std::map<std::string, std::size_t> slot;
        for (std::size_t i = 0; i < log.size(); ++i) {
            auto [it, inserted] = slot.try_emplace(log.battles()[i].participant_id, units.size());
            if (inserted) units.emplace_back();
            units[it->second].push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < log.size(); ++i) units.push_back({i});
    }

    const std::size_t K = log.conditions().size();
    std::vector<std::vector<double>> ratings(K);
    std::vector<std::size_t> firsts(K, 0);
    BootstrapResult result;
    for (std::size_t b = 0; b < replicates; ++b) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_int_distribution<std::size_t> pick(0, units.size() - 1);
        std::vector<std::size_t> sample;
        for (std::size_t u = 0; u < units.size(); ++u) {
            const auto& chosen = units[pick(rng)];
            sample.insert(sample.end(), chosen.begin(), chosen.end());
        }
        BtFit fit;
        try {
            fit = bt_fit(tally(log, sample, options.tie_policy), options);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoBattles) throw;
            ++result.skipped;
            continue;
        }
        if (fit.disconnected) {
            ++result.skipped;
            continue;
        }
        const auto r = bt_to_rating(fit.strengths);
        for (std::size_t k = 0; k < K; ++k) ratings[k].push_back(r[k]);
        ++firsts[static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin())];
        ++result.replicates;
    }
    for (std::size_t k = 0; k < K; ++k) {
        std::sort(ratings[k].begin(), ratings[k].end());
        const double n = static_cast<double>(std::max<std::size_t>(result.replicates, 1));
        result.rows.push_back({percentile(ratings[k], 0.5), percentile(ratings[k], 0.025),
                               percentile(ratings[k], 0.975), static_cast<double>(firsts[k]) / n});
    }
    return result;
}

struct WinRates {
    std::vector<double> aggregate;                            // per condition
    std::vector<std::vector<std::optional<double>>> head_to_head;  // row's win share vs column
};

/// (wins + ties / 2) / battles, aggregated and head-to-head.
inline WinRates win_rates(const BattleLog& log) {
    if (log.size() == 0) fail(ErrorCode::NoBattles, "battle log is empty");
    const auto c = tally(log, TiePolicy::HalfWin);
    const std::size_t K = log.conditions().size();
    WinRates r{std::vector<double>(K, 0.0), std::vector(K, std::vector<std::optional<double>>(K))};
    for (std::size_t i = 0; i < K; ++i) {
        double wins = 0.0, games = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            wins += c.wins[i][j];
            games += c.games[i][j];
            if (c.games[i][j] > 0.0) r.head_to_head[i][j] = c.wins[i][j] / c.games[i][j];
        }
        r.aggregate[i] = games > 0.0 ? wins / games : 0.0;
    }
    return r;
}

struct ArenaResult {
    std::vector<std::string> conditions;
    BtFit fit;
    std::vector<double> ratings;
    BootstrapResult bootstrap;
    WinRates wins;
};

inline ArenaResult analyze_arena(const BattleLog& log, std::size_t bootstrap_replicates, std::uint64_t seed,
                                 ResampleUnit unit = ResampleUnit::Participant, const BtOptions& options = {}) {
    ArenaResult r;
    r.conditions = log.conditions();
    r.fit = bt_fit(log, options);
    r.ratings = bt_to_rating(r.fit.strengths);
    r.bootstrap = bootstrap_ci(log, unit, bootstrap_replicates, seed, options);
    r.wins = win_rates(log);
    return r;
}

inline nlohmann::json to_json(const ArenaResult& r) {
    nlohmann::json out;
    out["disconnected"] = r.fit.disconnected;
    out["converged"] = r.fit.converged;
    out["iterations"] = r.fit.iterations;
    out["bootstrap_replicates"] = r.bootstrap.replicates;
    out["bootstrap_skipped"] = r.bootstrap.skipped;
    for (std::size_t k = 0; k < r.conditions.size(); ++k) {
        nlohmann::json h2h = nlohmann::json::object();
        for (std::size_t j = 0; j < r.conditions.size(); ++j) {
            if (r.wins.head_to_head[k][j]) h2h[r.conditions[j]] = *r.wins.head_to_head[k][j];
        }
        const auto& b = r.bootstrap.rows[k];
        out["conditions"].push_back({{"condition", r.conditions[k]},
                                     {"strength", r.fit.strengths[k]},
                                     {"rating", r.ratings[k]},
                                     {"bootstrap_median", b.median},
                                     {"ci95_low", b.lo95},
                                     {"ci95_high", b.hi95},
                                     {"first_place_share", b.first_place_share},
                                     {"win_rate", r.wins.aggregate[k]},
                                     {"head_to_head", h2h}});
    }
    return out;
}

inline nlohmann::json to_record(const Battle& b) {
    nlohmann::json r = {{"participant_id", b.participant_id}, {"prompt_id", b.prompt_id},
                        {"condition_a", b.condition_a},       {"condition_b", b.condition_b},
                        {"outcome", to_string(b.outcome)}};
    if (!b.tie_reason.empty()) r["tie_reason"] = b.tie_reason;
    return r;
}

inline Battle battle_from_record(const nlohmann::json& r) {
    return {detail::required_string(r, "participant_id"), detail::required_string(r, "prompt_id"),
            detail::required_string(r, "condition_a"),    detail::required_string(r, "condition_b"),
            outcome_from_string(detail::required_string(r, "outcome")), detail::optional_string(r, "tie_reason")};
}

inline BattleLog load_battle_log(const std::filesystem::path& path) {
    std::vector<Battle> battles;
    for (const auto& rec : read_jsonl(path)) battles.push_back(battle_from_record(rec));
    return record_battles(std::move(battles));
}

} // namespace prefmix
