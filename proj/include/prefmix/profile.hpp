#pragma once
// Bayesian user profiling: a new user is a distribution over bank designers,
// refined by Bayes' rule after each answered comparison. Queries are chosen
// by expected information gain.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "prefmix/bank.hpp"
#include "prefmix/error.hpp"
#include "prefmix/label.hpp"

namespace prefmix {

/// Response model p(c | x, d): the user flips the designer's direction with
/// probability eps_dir and, independently, the strength level with eps_str.
struct NoiseModel {
    double eps_dir = 0.2;
    double eps_str = 0.35;

    void validate() const {
        if (!(eps_dir > 0.0 && eps_dir < 0.5)) fail(ErrorCode::InvalidArgument, "eps_dir must lie in (0, 0.5)", "eps_dir");
        if (!(eps_str > 0.0 && eps_str < 0.5)) fail(ErrorCode::InvalidArgument, "eps_str must lie in (0, 0.5)", "eps_str");
    }

    bool operator==(const NoiseModel&) const = default;
};

inline double likelihood(const NoiseModel& noise, Label observed, Label response) {
    const double dir = direction(observed) == direction(response) ? 1.0 - noise.eps_dir : noise.eps_dir;
    const double str = strength(observed) == strength(response) ? 1.0 - noise.eps_str : noise.eps_str;
    return dir * str;
}

/// Integer-valued overload; throws ValueOutOfDomain.
inline double likelihood(const NoiseModel& noise, int observed, int response) {
    return likelihood(noise, response_from_int(observed), response_from_int(response));
}

/// Rows indexed by raw label value + 2 (row 2 is the uninformative row used
/// for labels missing from sparse banks), columns by label_index.
class LikelihoodTable {
public:
    explicit LikelihoodTable(const NoiseModel& noise) {
        noise.validate();
        for (auto& row : rows_) row.fill(0.25);
        for (Label observed : kAllLabels) {
            for (Label response : kAllLabels) {
                rows_[to_int(observed) + 2][label_index(response)] = likelihood(noise, observed, response);
            }
        }
    }

    const std::array<double, kNumLabels>& row(int observed_value) const { return rows_[observed_value + 2]; }

private:
    std::array<std::array<double, kNumLabels>, 5> rows_{};
};

/// Probability vector over the designers of a bank (same order).
class DesignerDistribution {
public:
    DesignerDistribution() = default;

    static DesignerDistribution uniform(std::size_t n) {
        if (n == 0) fail(ErrorCode::InsufficientDesigners, "distribution over zero designers");
        return DesignerDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }
    static DesignerDistribution point_mass(std::size_t n, std::size_t index) {
        std::vector<double> w(n, 0.0);
        w.at(index) = 1.0;
        return DesignerDistribution(std::move(w));
    }
    /// Normalizes nonnegative weights.
    static DesignerDistribution from_weights(std::vector<double> weights) {
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::InvalidArgument, "designer weights must be finite and nonnegative");
            total += w;
        }
        if (!(total > 0.0)) fail(ErrorCode::InvalidArgument, "designer weights sum to zero");
        for (double& w : weights) w /= total;
        return DesignerDistribution(std::move(weights));
    }

    /// Wraps weights the caller has already normalized.
    static DesignerDistribution from_normalized(std::vector<double> weights) {
        return DesignerDistribution(std::move(weights));
    }

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t d) const { return weights_[d]; }
    const std::vector<double>& weights() const noexcept { return weights_; }

    std::size_t argmax() const {
        return static_cast<std::size_t>(std::max_element(weights_.begin(), weights_.end()) - weights_.begin());
    }

    bool operator==(const DesignerDistribution&) const = default;

private:
    explicit DesignerDistribution(std::vector<double> w) : weights_(std::move(w)) {}
    std::vector<double> weights_;
};

inline void require_support(const DesignerDistribution& pi, const DataBank& bank) {
    if (pi.size() != bank.num_designers()) {
        fail(ErrorCode::InvalidArgument, "profile covers " + std::to_string(pi.size()) +
                                             " designers, bank has " + std::to_string(bank.num_designers()));
    }
}

inline void require_pair_index(const DataBank& bank, std::size_t pair) {
    if (pair >= bank.num_pairs()) fail(ErrorCode::UnknownPair, "pair index " + std::to_string(pair) + " out of range");
}

/// Nats, with 0 ln 0 = 0.
inline double entropy(std::span<const double> weights) {
    double h = 0.0;
    for (double w : weights) {
        if (w > 0.0) h -= w * std::log(w);
    }
    return h;
}
inline double entropy(const DesignerDistribution& pi) { return entropy(pi.weights()); }

/// p(c | x, pi) = sum_d pi(d) p(c | x, d), indexed by label_index.
inline std::array<double, kNumLabels> predictive(const DesignerDistribution& pi, std::size_t pair,
                                                 const DataBank& bank, const LikelihoodTable& table) {
    require_support(pi, bank);
    require_pair_index(bank, pair);
    std::array<double, kNumLabels> p{};
    for (std::size_t d = 0; d < pi.size(); ++d) {
        if (pi[d] == 0.0) continue;
        const auto& row = table.row(bank.label_value(d, pair));
        for (std::size_t c = 0; c < kNumLabels; ++c) p[c] += pi[d] * row[c];
    }
    return p;
}
inline std::array<double, kNumLabels> predictive(const DesignerDistribution& pi, std::size_t pair,
                                                 const DataBank& bank, const NoiseModel& noise) {
    return predictive(pi, pair, bank, LikelihoodTable(noise));
}

namespace detail {

/// True when every designer carrying mass shares one likelihood row for `pair`.
inline bool uninformative(const DesignerDistribution& pi, std::size_t pair, const DataBank& bank) {
    int first = 3;  // sentinel outside the stored range
    for (std::size_t d = 0; d < pi.size(); ++d) {
        if (pi[d] == 0.0) continue;
        const int v = bank.label_value(d, pair);
        if (first == 3) first = v;
        else if (v != first) return false;
    }
    return true;
}

} // namespace detail

/// pi'(d) proportional to pi(d) p(response | pair, d). `mixing_floor` blends
/// that fraction of the uniform distribution into the result.
inline DesignerDistribution posterior_update(const DesignerDistribution& pi, std::size_t pair, Label response,
                                             const DataBank& bank, const LikelihoodTable& table,
                                             double mixing_floor = 0.0) {
    require_support(pi, bank);
    require_pair_index(bank, pair);
    std::vector<double> w;
    if (detail::uninformative(pi, pair, bank)) {
        if (mixing_floor <= 0.0) return pi;
        w = pi.weights();
    } else {
        w.resize(pi.size());
        const std::size_t c = label_index(response);
        double evidence = 0.0;
        for (std::size_t d = 0; d < pi.size(); ++d) {
            w[d] = pi[d] * table.row(bank.label_value(d, pair))[c];
            evidence += w[d];
        }
        for (double& x : w) x /= evidence;
    }
    if (mixing_floor > 0.0) {
        const double u = 1.0 / static_cast<double>(w.size());
        for (double& x : w) x = (1.0 - mixing_floor) * x + mixing_floor * u;
    }
    return DesignerDistribution::from_normalized(std::move(w));
}
inline DesignerDistribution posterior_update(const DesignerDistribution& pi, std::size_t pair, Label response,
                                             const DataBank& bank, const NoiseModel& noise,
                                             double mixing_floor = 0.0) {
    return posterior_update(pi, pair, response, bank, LikelihoodTable(noise), mixing_floor);
}

/// H(pi) - sum_c p(c | pair, pi) H(pi | c). Exactly zero when the response
/// carries no information about the designer.
inline double expected_information_gain(std::size_t pair, const DesignerDistribution& pi, const DataBank& bank,
                                        const LikelihoodTable& table) {
    require_support(pi, bank);
    require_pair_index(bank, pair);
    if (detail::uninformative(pi, pair, bank)) return 0.0;
    const auto pred = predictive(pi, pair, bank, table);
    double expected = 0.0;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
        if (pred[c] <= 0.0) continue;
        double h = 0.0;
        for (std::size_t d = 0; d < pi.size(); ++d) {
            const double post = pi[d] * table.row(bank.label_value(d, pair))[c] / pred[c];
            if (post > 0.0) h -= post * std::log(post);
        }
        expected += pred[c] * h;
    }
    return entropy(pi) - expected;
}
inline double expected_information_gain(std::size_t pair, const DesignerDistribution& pi, const DataBank& bank,
                                        const NoiseModel& noise) {
    return expected_information_gain(pair, pi, bank, LikelihoodTable(noise));
}

struct Observation {
    std::size_t pair;
    Label response;

    bool operator==(const Observation&) const = default;
};

/// Replays observations from the uniform prior.
inline DesignerDistribution replay(const DataBank& bank, std::span<const Observation> history,
                                   const LikelihoodTable& table, double mixing_floor = 0.0) {
    auto pi = DesignerDistribution::uniform(bank.num_designers());
    for (const auto& obs : history) pi = posterior_update(pi, obs.pair, obs.response, bank, table, mixing_floor);
    return pi;
}

/// Mutable elicitation state for one user. pi is always the replay of history.
class OnboardingSession {
public:
    OnboardingSession(std::string id, const DataBank& bank, std::size_t budget = 8, double mixing_floor = 0.0)
        : id_(std::move(id)),
          pi_(DesignerDistribution::uniform(bank.num_designers())),
          budget_(budget),
          mixing_floor_(mixing_floor) {}

    const std::string& id() const noexcept { return id_; }
    const DesignerDistribution& pi() const noexcept { return pi_; }
    const std::vector<Observation>& history() const noexcept { return history_; }
    const std::set<std::size_t>& asked() const noexcept { return asked_; }
    std::size_t budget() const noexcept { return budget_; }
    double mixing_floor() const noexcept { return mixing_floor_; }
    bool complete() const noexcept { return history_.size() >= budget_; }

    void record(std::size_t pair, Label response, const DataBank& bank, const LikelihoodTable& table) {
        if (complete()) fail(ErrorCode::SessionComplete, "session '" + id_ + "' already has all responses");
        if (asked_.count(pair)) fail(ErrorCode::InvalidArgument, "pair already asked in this session", "pair_id");
        pi_ = posterior_update(pi_, pair, response, bank, table, mixing_floor_);
        history_.push_back({pair, response});
        asked_.insert(pair);
    }

private:
    std::string id_;
    DesignerDistribution pi_;
    std::vector<Observation> history_;
    std::set<std::size_t> asked_;
    std::size_t budget_;
    double mixing_floor_;
};

/// Highest-EIG candidate not yet asked; ties go to the smallest pair_id.
inline std::size_t select_next_query(const DesignerDistribution& pi, const std::set<std::size_t>& asked,
                                     std::span<const std::size_t> candidates, const DataBank& bank,
                                     const LikelihoodTable& table) {
    std::optional<std::size_t> best;
    double best_gain = 0.0;
    for (std::size_t pair : candidates) {
        if (asked.count(pair)) continue;
        const double gain = expected_information_gain(pair, pi, bank, table);
        if (!best || gain > best_gain ||
            (gain == best_gain && bank.pairs()[pair].pair_id < bank.pairs()[*best].pair_id)) {
            best = pair;
            best_gain = gain;
        }
    }
    if (!best) fail(ErrorCode::CandidatesExhausted, "no unasked candidate pairs remain");
    return *best;
}
inline std::size_t select_next_query(const OnboardingSession& session, std::span<const std::size_t> candidates,
                                     const DataBank& bank, const LikelihoodTable& table) {
    return select_next_query(session.pi(), session.asked(), candidates, bank, table);
}

using Responder = std::function<Label(std::size_t pair)>;

/// Up to k rounds of select -> respond -> update. A throwing responder leaves
/// the session at its last completed step.
inline const DesignerDistribution& run_onboarding(OnboardingSession& session, const Responder& responder,
                                                  std::size_t k, std::span<const std::size_t> candidates,
                                                  const DataBank& bank, const LikelihoodTable& table) {
    for (std::size_t step = 0; step < k && !session.complete(); ++step) {
        const std::size_t pair = select_next_query(session, candidates, bank, table);
        const Label response = responder(pair);
        session.record(pair, response, bank, table);
    }
    return session.pi();
}

// ---------------------------------------------------------------------------
// Profile file
// ---------------------------------------------------------------------------

/// FNV-1a over "pair_id:response;" for each history entry.
inline std::string history_digest(const std::vector<std::pair<std::string, int>>& history) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::string_view s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 1099511628211ull;
        }
    };
    for (const auto& [pair_id, value] : history) {
        mix(pair_id);
        mix(":");
        mix(std::to_string(value));
        mix(";");
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

struct ProfileFile {
    std::vector<std::string> designer_ids;
    std::vector<double> weights;
    NoiseModel noise;
    std::vector<std::pair<std::string, int>> history;

    /// Weights reordered onto the bank's designer order.
    DesignerDistribution distribution_for(const DataBank& bank) const {
        std::vector<double> w(bank.num_designers(), 0.0);
        std::vector<bool> seen(bank.num_designers(), false);
        for (std::size_t i = 0; i < designer_ids.size(); ++i) {
            auto d = bank.designer_index(designer_ids[i]);
            if (!d) fail(ErrorCode::DanglingReference, "profile designer '" + designer_ids[i] + "' not in bank", designer_ids[i]);
            w[*d] = weights[i];
            seen[*d] = true;
        }
        for (std::size_t d = 0; d < seen.size(); ++d) {
            if (!seen[d]) fail(ErrorCode::InvalidArgument, "profile lacks designer '" + bank.designer_ids()[d] + "'");
        }
        return DesignerDistribution::from_weights(std::move(w));
    }
};

inline ProfileFile make_profile_file(const DataBank& bank, const DesignerDistribution& pi, const NoiseModel& noise,
                                     std::span<const Observation> history) {
    require_support(pi, bank);
    ProfileFile file{bank.designer_ids(), pi.weights(), noise, {}};
    for (const auto& obs : history) file.history.emplace_back(bank.pairs()[obs.pair].pair_id, to_int(obs.response));
    return file;
}

inline void write_profile(std::ostream& out, const ProfileFile& profile) {
    out << std::setprecision(17);
    out << "#prefmix-profile v1\n";
    out << "#noise eps_dir=" << profile.noise.eps_dir << " eps_str=" << profile.noise.eps_str << '\n';
    out << "#history n=" << profile.history.size() << " digest=" << history_digest(profile.history) << '\n';
    for (const auto& [pair_id, value] : profile.history) out << "#step " << pair_id << ' ' << value << '\n';
    for (std::size_t i = 0; i < profile.designer_ids.size(); ++i) {
        out << profile.designer_ids[i] << ' ' << profile.weights[i] << '\n';
    }
}

inline ProfileFile read_profile(std::istream& in) {
    ProfileFile profile;
    std::string line;
    std::string digest;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string head;
        fields >> head;
        if (head == "#noise") {
            std::string kv;
            while (fields >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const double v = std::stod(kv.substr(eq + 1));
                if (kv.compare(0, eq, "eps_dir") == 0) profile.noise.eps_dir = v;
                else if (kv.compare(0, eq, "eps_str") == 0) profile.noise.eps_str = v;
            }
        } else if (head == "#history") {
            std::string kv;
            while (fields >> kv) {
                if (kv.rfind("digest=", 0) == 0) digest = kv.substr(7);
            }
        } else if (head == "#step") {
            std::string pair_id;
            int value = 0;
            if (!(fields >> pair_id >> value)) fail(ErrorCode::ParseError, "malformed #step line: " + line);
            label_from_int(value);
            profile.history.emplace_back(pair_id, value);
        } else if (head[0] == '#') {
            continue;
        } else {
            double w = 0.0;
            if (!(fields >> w)) fail(ErrorCode::ParseError, "malformed designer line: " + line);
            profile.designer_ids.push_back(head);
            profile.weights.push_back(w);
        }
    }
    if (!digest.empty() && digest != history_digest(profile.history)) {
        fail(ErrorCode::ParseError, "profile history digest mismatch");
    }
    if (profile.designer_ids.empty()) fail(ErrorCode::ParseError, "profile lists no designers");
    profile.noise.validate();
    return profile;
}

inline void save_profile(const std::filesystem::path& path, const ProfileFile& profile) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string(), path.string());
    write_profile(out, profile);
}

inline ProfileFile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string(), path.string());
    return read_profile(in);
}

} // namespace prefmix
