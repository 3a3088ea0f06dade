// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances and runtime caps are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prefmix/analytics.hpp"
#include "prefmix/arena.hpp"
#include "prefmix/embed.hpp"
#include "prefmix/profile.hpp"
#include "prefmix/retrieval.hpp"
#include "prefmix/service.hpp"
#include "prefmix/sim.hpp"

using namespace prefmix;
namespace pt = prefmix::testing;

namespace {

constexpr double kPosteriorTol = 1e-12;
constexpr double kEigTol = 1e-10;
constexpr double kEigFloor = -1e-12;
constexpr double kRetrievalPropertyTol = 1e-9;
constexpr double kBruteForceTol = 1e-12;
constexpr double kAccuracyGainMin = 0.02;
constexpr double kHomogeneousGapMax = 0.01;
constexpr std::size_t kTrendSeeds = 50;
constexpr double kGradientRelTol = 1e-4;
constexpr double kPlantedAccuracyMin = 0.95;
constexpr std::size_t kPlantedEpochMax = 24;
constexpr double kAlphaTol = 1e-10;
constexpr double kIndependentKappaMax = 0.05;
constexpr double kBtTwoPlayerTol = 1e-6;
constexpr double kBtLogStrengthTol = 0.1;
constexpr double kFirstPlaceShareMin = 0.95;
constexpr std::size_t kReplaySessions = 100;

struct Verdict {
    bool pass = true;
    std::string detail;
};

struct Criterion {
    std::string name;
    double runtime_cap_s;
    std::function<Verdict()> run;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c);
    return buf;
}

DesignerDistribution random_pi(std::size_t n, std::mt19937_64& rng, bool allow_zeros) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution zero(0.25);
    std::vector<double> w(n);
    for (auto& x : w) x = allow_zeros && zero(rng) ? 0.0 : unit(rng) + 1e-3;
    if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) w[0] = 1.0;
    return DesignerDistribution::from_weights(w);
}

/// All 4^D label columns for D designers.
std::vector<std::vector<int>> all_columns(std::size_t designers) {
    std::vector<std::vector<int>> out;
    std::size_t total = 1;
    for (std::size_t d = 0; d < designers; ++d) total *= 4;
    for (std::size_t code = 0; code < total; ++code) {
        std::vector<int> col(designers);
        std::size_t c = code;
        for (auto& v : col) {
            v = oracle::kResponses[c % 4];
            c /= 4;
        }
        out.push_back(col);
    }
    return out;
}

std::vector<std::vector<int>> as_table(const std::vector<int>& column) {
    std::vector<std::vector<int>> t;
    for (int v : column) t.push_back({v});
    return t;
}

Verdict posterior_correctness() {
    const NoiseModel noise;
    const LikelihoodTable table(noise);
    std::mt19937_64 rng(101);
    double worst = 0.0;
    std::size_t cases = 0;

    // Every label column for up to four designers, every response, several priors.
    for (std::size_t D = 1; D <= 4; ++D) {
        for (const auto& column : all_columns(D)) {
            const auto bank = pt::bank_from_table(as_table(column));
            std::vector<DesignerDistribution> priors{DesignerDistribution::uniform(D)};
            for (int i = 0; i < 3; ++i) priors.push_back(random_pi(D, rng, true));
            for (const auto& pi : priors) {
                for (int r : oracle::kResponses) {
                    const auto got = posterior_update(pi, 0, static_cast<Label>(r), bank, table);
                    const auto want = oracle::posterior(pi.weights(), column, r, noise.eps_dir, noise.eps_str);
                    for (std::size_t d = 0; d < D; ++d) worst = std::max(worst, std::abs(got[d] - want[d]));
                    ++cases;
                }
            }
        }
    }
    // Sequences through banks of up to ten pairs against one-shot Bayes.
    for (std::size_t D = 1; D <= 4; ++D) {
        for (std::size_t P = 1; P <= 10; ++P) {
            for (int rep = 0; rep < 20; ++rep) {
                const auto labels = pt::random_table(D, P, rng);
                const auto bank = pt::bank_from_table(labels);
                const auto prior = random_pi(D, rng, true);
                std::vector<double> joint = prior.weights();
                auto pi = prior;
                std::uniform_int_distribution<int> pick(0, 3);
                for (std::size_t j = 0; j < P; ++j) {
                    const int r = oracle::kResponses[pick(rng)];
                    pi = posterior_update(pi, j, static_cast<Label>(r), bank, table);
                    for (std::size_t d = 0; d < D; ++d) {
                        joint[d] *= oracle::likelihood(noise.eps_dir, noise.eps_str, labels[d][j], r);
                    }
                }
                double z = 0.0;
                for (double x : joint) z += x;
                for (std::size_t d = 0; d < D; ++d) worst = std::max(worst, std::abs(pi[d] - joint[d] / z));
                ++cases;
            }
        }
    }
    const auto worked = posterior_update(DesignerDistribution::uniform(3), 0, Label::LeftBetter,
                                         pt::bank_from_table({{1}, {-1}, {2}}), table);
    const bool example = std::abs(worked[0] - 0.5591) < 5e-5 && std::abs(worked[1] - 0.1398) < 5e-5 &&
                         std::abs(worked[2] - 0.3011) < 5e-5;
    return {worst <= kPosteriorTol && example,
            fmt("%.0f cases, max abs err %.2e, worked example (%.4f, ", static_cast<double>(cases), worst, worked[0]) +
                fmt("%.4f, %.4f)", worked[1], worked[2])};
}

Verdict eig_correctness() {
    const NoiseModel noise;
    const LikelihoodTable table(noise);
    std::mt19937_64 rng(202);
    double worst = 0.0, lowest = 1.0;
    std::uniform_int_distribution<std::size_t> size(1, 8);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t D = size(rng);
        const auto labels = pt::random_table(D, 1, rng);
        const auto bank = pt::bank_from_table(labels);
        const auto pi = random_pi(D, rng, t % 2 == 0);
        std::vector<int> column;
        for (const auto& row : labels) column.push_back(row[0]);
        const double got = expected_information_gain(0, pi, bank, table);
        const double want = oracle::mutual_information(pi.weights(), column, noise.eps_dir, noise.eps_str);
        worst = std::max(worst, std::abs(got - want));
        lowest = std::min(lowest, got);
    }
    bool unanimous_zero = true;
    for (int v : oracle::kResponses) {
        const auto bank = pt::bank_from_table({{v}, {v}, {v}, {v}});
        for (int t = 0; t < 10; ++t) {
            unanimous_zero = unanimous_zero && expected_information_gain(0, random_pi(4, rng, false), bank, table) == 0.0;
        }
    }
    return {worst <= kEigTol && lowest >= kEigFloor && unanimous_zero,
            fmt("1000 instances, max |EIG - MI| %.2e, min EIG %.2e, unanimous exactly zero: ", worst, lowest) +
                (unanimous_zero ? "yes" : "no")};
}

Verdict retrieval_properties() {
    std::mt19937_64 rng(303);
    const auto bank = pt::bank_from_table(pt::random_table(8, 60, rng));
    const auto store = pt::random_store(bank, 16, rng);
    RetrievalConfig cfg;
    cfg.n = 20;
    const RetrievalIndex index(bank, store, nullptr, cfg);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double anti = 0.0, lin = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Vector l = pt::random_unit(16, rng), r = pt::random_unit(16, rng);
        const auto p1 = random_pi(8, rng, false), p2 = random_pi(8, rng, false);
        const auto nb = index.retrieve(l, r);
        const double s = score_from_neighbors(nb, p1, bank);
        anti = std::max(anti, std::abs(s + score_from_neighbors(index.retrieve(r, l), p1, bank)));
        const double lambda = unit(rng);
        std::vector<double> mix(8);
        for (std::size_t d = 0; d < 8; ++d) mix[d] = lambda * p1[d] + (1 - lambda) * p2[d];
        const double lhs = score_from_neighbors(nb, DesignerDistribution::from_weights(mix), bank);
        lin = std::max(lin, std::abs(lhs - (lambda * s + (1 - lambda) * score_from_neighbors(nb, p2, bank))));
    }
    double brute = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t pairs = 1 + t % 20;
        const auto labels = pt::random_table(4, pairs, rng);
        const auto small = pt::bank_from_table(labels);
        const auto small_store = pt::random_store(small, 6, rng);
        RetrievalConfig c;
        c.n = 1 + t % 25;
        const RetrievalIndex idx(small, small_store, nullptr, c);
        std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> emb;
        std::vector<std::size_t> cands;
        for (std::size_t j = 0; j < pairs; ++j) {
            emb.emplace_back(small_store.at(small.pairs()[j].left_id), small_store.at(small.pairs()[j].right_id));
            cands.push_back(j);
        }
        const auto pi = random_pi(4, rng, true);
        const Vector l = pt::random_unit(6, rng), r = pt::random_unit(6, rng);
        const double got = score_from_neighbors(idx.retrieve(l, r), pi, small);
        brute = std::max(brute, std::abs(got - oracle::retrieval_score(l, r, emb, cands, labels, pi.weights(), c.n,
                                                                         c.tau_align, c.beta_retrieval)));
    }
    return {anti <= kRetrievalPropertyTol && lin <= kRetrievalPropertyTol && brute <= kBruteForceTol,
            fmt("1000 queries: max |s(q)+s(swap q)| %.2e, max linearity err %.2e; 200 banks <= 20 pairs: max brute-force "
                "err %.2e",
                anti, lin, brute)};
}

struct TrendRun {
    double acc0 = 0.0, acc8 = 0.0;
};

TrendRun accuracy_trend(std::size_t clusters) {
    TrendRun out;
    for (std::size_t s = 0; s < kTrendSeeds; ++s) {
        SyntheticBankSpec spec;
        spec.n_clusters = clusters;
        const auto sb = gen_synthetic_bank(spec, 1000 + s);
        const auto bank = sb.bank.with_split(make_splits(sb.bank, {0.6, 0.2, 0.2}, s));
        LodoOptions opts;
        opts.k_values = {0, 8};
        const auto r = lodo_eval(bank, sb.store, nullptr, opts);
        out.acc0 += r.curve[0].mean_accuracy / kTrendSeeds;
        out.acc8 += r.curve[1].mean_accuracy / kTrendSeeds;
    }
    return out;
}

Verdict accuracy_trend_check() {
    const auto clustered = accuracy_trend(4);
    const auto homogeneous = accuracy_trend(1);
    const double gain = clustered.acc8 - clustered.acc0;
    const double gap = homogeneous.acc8 - homogeneous.acc0;
    return {gain >= kAccuracyGainMin && std::abs(gap) <= kHomogeneousGapMax,
            fmt("4 clusters: acc k=0 %.4f, k=8 %.4f (gain %+.2f pt); ", clustered.acc0, clustered.acc8, 100 * gain) +
                fmt("1 cluster: acc k=0 %.4f, k=8 %.4f (gap %+.2f pt); ", homogeneous.acc0, homogeneous.acc8,
                    100 * gap) +
                std::to_string(kTrendSeeds) + " seeds"};
}

Verdict entropy_trend_check() {
    const std::vector<std::size_t> ks{1, 2, 4, 8};
    std::vector<double> eig(9, 0.0), rnd(9, 0.0);
    for (std::size_t s = 0; s < kTrendSeeds; ++s) {
        const auto sb = gen_synthetic_bank(SyntheticBankSpec{}, 2000 + s);
        const auto bank = sb.bank.with_split(make_splits(sb.bank, {0.6, 0.2, 0.2}, s));
        const auto rows = policy_compare(bank, sb.store, nullptr, 8, {s});
        for (const auto& row : rows) {
            eig[row.k] += row.eig_entropy / kTrendSeeds;
            rnd[row.k] += row.random_entropy / kTrendSeeds;
        }
    }
    bool ok = true;
    std::string detail;
    for (std::size_t k : ks) {
        ok = ok && eig[k] <= rnd[k];
        detail += fmt("k=%.0f eig %.3f / random %.3f; ", static_cast<double>(k), eig[k], rnd[k]);
    }
    return {ok, detail + std::to_string(kTrendSeeds) + " paired seeds"};
}

Verdict adapter_checks() {
    std::mt19937_64 rng(404);
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> pick(0, 3);
    double worst = 0.0;
    int draws = 0;
    while (draws < 100) {
        ResidualAdapter adapter = ResidualAdapter::identity(6);
        for (auto& w : adapter.weight.reshaped()) w = 0.3 * normal(rng);
        for (auto& a : adapter.head) a = normal(rng);
        adapter.margin = 2.0;
        const Vector l = pt::random_unit(6, rng), r = pt::random_unit(6, rng);
        const Label label = kAllLabels[pick(rng)];
        const auto out = pair_margin_loss(adapter, l, r, label);
        if (out.loss < 1e-3) continue;  // the hinge is not differentiable at its kink
        const auto [gw, ga] = oracle::hinge_gradient_fd(adapter.weight, adapter.head, l, r, to_int(label),
                                                        adapter.margin, adapter.margin_multiplier, 1e-5);
        const double scale = std::max(gw.cwiseAbs().maxCoeff(), ga.cwiseAbs().maxCoeff());
        const double err = std::max((out.grad_weight - gw).cwiseAbs().maxCoeff(),
                                    (out.grad_head - ga).cwiseAbs().maxCoeff());
        worst = std::max(worst, err / scale);
        ++draws;
    }

    // Planted direction: labels follow the sign of u . (z_L - z_R).
    const Eigen::Index dim = 16;
    const Vector u = pt::random_unit(dim, rng);
    std::vector<Vector> vectors;
    for (int i = 0; i < 2 * 5000; ++i) vectors.push_back(pt::random_unit(dim, rng));
    std::vector<PairExample> train, val;
    for (int i = 0; i < 5000; ++i) {
        const double gap = u.dot(vectors[2 * i] - vectors[2 * i + 1]);
        const auto label = static_cast<Label>((gap >= 0 ? 1 : -1) * (std::abs(gap) > 0.3 ? 2 : 1));
        (i < 4000 ? train : val).push_back({&vectors[2 * i], &vectors[2 * i + 1], label});
    }
    const auto result = train_adapter(train, val, dim, TrainConfig{});
    const bool planted = result.best_val_accuracy >= kPlantedAccuracyMin && result.history.size() <= kPlantedEpochMax;
    return {worst < kGradientRelTol && planted,
            fmt("100 draws: max rel grad err %.2e; planted val acc %.4f after %.0f epochs", worst,
                result.best_val_accuracy, static_cast<double>(result.history.size()))};
}

Verdict analytics_checks() {
    const std::vector<int> a{1, 1, -1, -1}, b{1, -1, -1, -1};
    const double kappa = cohen_kappa(a, b, Granularity::Binary);
    std::mt19937_64 rng(505);
    double worst = 0.0;
    std::bernoulli_distribution missing(0.15);
    for (int t = 0; t < 20; ++t) {
        auto table = pt::random_table(2 + t % 6, 15 + 3 * t, rng);
        for (auto& row : table) {
            for (auto& v : row) {
                if (missing(rng)) v = 0;
            }
        }
        worst = std::max(worst, std::abs(krippendorff_alpha(table, Granularity::FourWay) - oracle::krippendorff_alpha(table)));
    }
    std::uniform_int_distribution<int> pick(0, 3);
    std::vector<int> r1(10000), r2(10000);
    for (auto& v : r1) v = oracle::kResponses[pick(rng)];
    for (auto& v : r2) v = oracle::kResponses[pick(rng)];
    const double indep = std::max(std::abs(cohen_kappa(r1, r2, Granularity::Binary)),
                                  std::abs(cohen_kappa(r1, r2, Granularity::FourWay)));
    return {std::abs(kappa - 0.5) < 1e-12 && worst <= kAlphaTol && indep < kIndependentKappaMax,
            fmt("fixture kappa %.6f; 20 tables max alpha err %.2e; independent raters |kappa| %.4f at 1e4 items", kappa,
                worst, indep)};
}

BattleLog simulate_battles(const std::vector<double>& strengths, std::size_t participants, std::size_t prompts,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Battle> battles;
    for (std::size_t u = 0; u < participants; ++u) {
        for (std::size_t p = 0; p < prompts; ++p) {
            for (std::size_t i = 0; i < strengths.size(); ++i) {
                for (std::size_t j = i + 1; j < strengths.size(); ++j) {
                    const bool a_wins = unit(rng) < strengths[i] / (strengths[i] + strengths[j]);
                    battles.push_back({pt::padded("u", u), pt::padded("p", p), pt::padded("c", i), pt::padded("c", j),
                                       a_wins ? prefmix::Outcome::AWins : prefmix::Outcome::BWins, {}});
                }
            }
        }
    }
    return record_battles(std::move(battles));
}

Verdict arena_checks() {
    std::vector<Battle> three_one;
    for (int i = 0; i < 3; ++i) three_one.push_back({pt::padded("u", i), "p", "A", "B", prefmix::Outcome::AWins, {}});
    three_one.push_back({"u9", "p", "A", "B", prefmix::Outcome::BWins, {}});
    const auto two = bt_fit(record_battles(three_one));
    const double p = two.strengths[0] / (two.strengths[0] + two.strengths[1]);

    const std::vector<double> truth{4.0, 2.0, 1.0, 0.5};
    double log_mean = 0.0;
    for (double t : truth) log_mean += std::log(t) / 4.0;
    const auto log = simulate_battles(truth, 100, 10, 606);  // 1000 battles per pair
    const auto fit = bt_fit(log);
    double worst_log = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        worst_log = std::max(worst_log, std::abs(std::log(fit.strengths[k]) - (std::log(truth[k]) - log_mean)));
    }

    bool monotone = true;
    for (const auto* f : {&two, &fit}) {
        for (std::size_t i = 1; i < f->log_likelihood_trace.size(); ++i) {
            monotone = monotone && f->log_likelihood_trace[i] >= f->log_likelihood_trace[i - 1] - 1e-9;
        }
    }
    const auto small = simulate_battles({3.0, 1.0, 0.5}, 8, 5, 607);
    const auto b1 = bootstrap_ci(small, ResampleUnit::Participant, 200, 9);
    const auto b2 = bootstrap_ci(small, ResampleUnit::Participant, 200, 9);
    bool deterministic = true;
    for (std::size_t k = 0; k < b1.rows.size(); ++k) {
        deterministic = deterministic && b1.rows[k].median == b2.rows[k].median && b1.rows[k].lo95 == b2.rows[k].lo95 &&
                        b1.rows[k].hi95 == b2.rows[k].hi95;
    }
    const auto separated = simulate_battles({5.0, 1.0, 1.0, 1.0}, 12, 20, 608);
    const auto boot = bootstrap_ci(separated, ResampleUnit::Participant, 1000, 10);
    const double share = boot.rows[0].first_place_share;
    return {std::abs(p - 0.75) <= kBtTwoPlayerTol && monotone && worst_log <= kBtLogStrengthTol && deterministic &&
                share > kFirstPlaceShareMin,
            fmt("3-1 record p %.8f; max log-strength err %.4f; top first-place share %.3f; ", p, worst_log, share) +
                "LL monotone: " + (monotone ? "yes" : "no") + "; bootstrap deterministic: " +
                (deterministic ? "yes" : "no")};
}

Verdict service_replay() {
    pt::TempDir dir("acceptance");
    ServiceConfig config;
    config.state_dir = dir.path();
    config.id_seed = 707;
    auto context = [] {
        BankContext ctx{pt::six_pair_bank(8, 6, 2, 77), EmbeddingStore(8), std::nullopt};
        std::mt19937_64 rng(78);
        for (const auto& s : ctx.bank.screens()) ctx.store.add(s.embedding_ref, pt::random_unit(8, rng));
        return ctx;
    };
    std::mt19937_64 rng(709);
    std::uniform_int_distribution<int> pick(0, 3);
    std::map<std::string, std::pair<std::vector<double>, json>> before;
    {
        PreferenceService svc(context(), config);
        std::uniform_int_distribution<std::size_t> budget(0, 12);
        for (std::size_t i = 0; i < kReplaySessions; ++i) {
            json state = svc.create_session({{"k", budget(rng)}});
            const std::string id = state["session_id"];
            std::uniform_int_distribution<std::size_t> answered(0, state["k"].get<std::size_t>());
            const std::size_t n = answered(rng);
            for (std::size_t a = 0; a < n; ++a) {
                state = svc.submit_response(id, {{"pair_id", state["next_query"]["pair_id"]},
                                                 {"response", oracle::kResponses[pick(rng)]}});
            }
            before[id] = {svc.session_distribution(id).weights(), svc.get_profile(id)};
        }
    }
    PreferenceService restarted(context(), config);
    std::size_t identical = 0;
    for (const auto& [id, saved] : before) {
        const auto pi = restarted.session_distribution(id).weights();
        identical += pi == saved.first && restarted.get_profile(id) == saved.second;
    }
    return {identical == kReplaySessions && restarted.session_ids().size() == kReplaySessions,
            fmt("%.0f of %.0f sessions restored bit-identically", static_cast<double>(identical),
                static_cast<double>(kReplaySessions))};
}

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"posterior_correctness", 1.0, posterior_correctness},
        {"eig_correctness", 10.0, eig_correctness},
        {"retrieval_antisymmetry_linearity", 30.0, retrieval_properties},
        {"accuracy_trend_with_k", 300.0, accuracy_trend_check},
        {"entropy_eig_vs_random", 300.0, entropy_trend_check},
        {"adapter_gradients_and_training", 120.0, adapter_checks},
        {"analytics_oracles", 60.0, analytics_checks},
        {"arena_oracles", 60.0, arena_checks},
        {"service_replay", 60.0, service_replay},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.runtime_cap_s;
        const bool pass = out.pass && in_time;
        failures += !pass;
        std::printf("%s %s: %s [%.2fs, cap %.0fs%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), out.detail.c_str(), secs,
                    c.runtime_cap_s, in_time ? "" : ", over cap");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
